"""Semiring descriptors for sparse matrix algebra.

A semiring bundles the fold operator (add), the combine operator (mul), their
identities, and the on-wire value encoding. Matrix code treats entries whose
value equals `zero` as structural non-zeros: they are kept, never dropped.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Semiring:
    """Value algebra used by every kernel and by the wire codec.

    add/mul must satisfy the usual semiring axioms with `zero` the additive
    identity and annihilator and `one` the multiplicative identity. `is_ring`
    marks semirings whose add has inverses (required by the algebraic update
    path for value decreases/removals expressed through add).
    """

    name: str
    add: Callable
    mul: Callable
    zero: object
    one: object
    is_ring: bool
    value_width: int          # bytes per value on the wire
    np_dtype: np.dtype = field(compare=False)

    def encode_values(self, values) -> bytes:
        return np.asarray(values, dtype=self.np_dtype).tobytes()

    def decode_values(self, buf: bytes, count: int) -> list:
        arr = np.frombuffer(buf, dtype=self.np_dtype, count=count)
        if self.np_dtype.kind == "u":
            # boolean lane stores one 0/1 byte per value
            return [bool(x) for x in arr.tolist()]
        return arr.tolist()


PLUS_TIMES_I64 = Semiring(
    name="plus-times-i64",
    add=operator.add,
    mul=operator.mul,
    zero=0,
    one=1,
    is_ring=True,
    value_width=8,
    np_dtype=np.dtype("<i8"),
)

PLUS_TIMES_F64 = Semiring(
    name="plus-times-f64",
    add=operator.add,
    mul=operator.mul,
    zero=0.0,
    one=1.0,
    is_ring=True,
    value_width=8,
    np_dtype=np.dtype("<f8"),
)

# Tropical algebra: fold = min, combine = +, so "zero" is +inf and "one" is 0.
MIN_PLUS = Semiring(
    name="min-plus",
    add=min,
    mul=operator.add,
    zero=math.inf,
    one=0.0,
    is_ring=False,
    value_width=8,
    np_dtype=np.dtype("<f8"),
)

BOOLEAN = Semiring(
    name="bool",
    add=operator.or_,
    mul=operator.and_,
    zero=False,
    one=True,
    is_ring=False,
    value_width=1,
    np_dtype=np.dtype("<u1"),
)

REGISTRY = {sr.name: sr for sr in (PLUS_TIMES_I64, PLUS_TIMES_F64, MIN_PLUS, BOOLEAN)}


def by_name(name: str) -> Semiring:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown semiring {name!r}; known: {sorted(REGISTRY)}") from None

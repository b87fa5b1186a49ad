"""Local block storage, combinators, and the wire codec."""

import struct

import numpy as np
import pytest

from dynspgemm import (
    BOOLEAN,
    MIN_PLUS,
    PLUS_TIMES_I64,
    BloomBlock,
    CsrBlock,
    DcsrBlock,
    DecodeError,
    DynamicBlock,
    STRUCTURE_CODEC,
    add_into,
    bloom_codec,
    csr_from_triples,
    dcsr_deserialize,
    dcsr_from_row_map,
    dcsr_serialize,
    filter_rows_by_bloom,
    mask_out,
    merge_into,
    or_into,
    semiring_codec,
)


# -- dynamic block -----------------------------------------------------------

def test_upsert_get_overwrite():
    b = DynamicBlock(2, 2)
    assert b.upsert(0, 1, 5) is True
    assert b.nnz == 1
    assert b.get(0, 1) == 5
    assert b.upsert(0, 1, 7) is False
    assert b.nnz == 1
    assert b.get(0, 1) == 7
    assert b.get(1, 0) is None
    assert b.contains(0, 1) and not b.contains(1, 1)


def test_delete_absent_and_present():
    b = DynamicBlock(3, 3)
    assert b.delete(0, 0) is False
    b.upsert(1, 2, 9)
    assert b.delete(1, 2) is True
    assert b.nnz == 0
    assert b.get(1, 2) is None
    assert b.delete(1, 2) is False


def test_delete_middle_of_row_keeps_bijection():
    b = DynamicBlock(1, 8)
    for c, v in ((3, 30), (5, 50), (7, 70)):
        b.upsert(0, c, v)
    assert b.delete(0, 5) is True
    b.check()
    assert b.entry_map() == {(0, 3): 30, (0, 7): 70}
    assert sorted(b.row_cols(0)) == [3, 7]
    assert b.row_nnz(0) == 2


def test_fold_inserts_then_combines():
    b = DynamicBlock(2, 2)
    assert b.fold(0, 0, 4, min) is True
    assert b.fold(0, 0, 2, min) is False
    assert b.get(0, 0) == 2
    assert b.fold(0, 0, 9, min) is False
    assert b.get(0, 0) == 2


def test_random_ops_match_dict_oracle():
    rng = np.random.default_rng(21)
    b = DynamicBlock(20, 20)
    oracle: dict = {}
    for step in range(5000):
        r = int(rng.integers(20))
        c = int(rng.integers(20))
        op = rng.random()
        if op < 0.55:
            v = int(rng.integers(100))
            got_new = b.upsert(r, c, v)
            assert got_new == ((r, c) not in oracle)
            oracle[(r, c)] = v
        elif op < 0.8:
            got = b.delete(r, c)
            assert got == ((r, c) in oracle)
            oracle.pop((r, c), None)
        else:
            assert b.get(r, c) == oracle.get((r, c))
        if step % 500 == 0:
            b.check()
    assert b.entry_map() == oracle
    assert b.nnz == len(oracle)
    b.check()


def test_structural_zero_is_kept():
    b = DynamicBlock(2, 2)
    b.upsert(0, 0, 5)
    b.fold(0, 0, -5, PLUS_TIMES_I64.add)
    assert b.get(0, 0) == 0
    assert b.contains(0, 0)
    assert b.nnz == 1


def test_from_triples_and_row_access():
    b = DynamicBlock.from_triples(3, 4, [(0, 1, 5), (2, 0, 3), (0, 1, 6)])
    assert b.nnz == 2
    assert b.get(0, 1) == 6   # later triple overwrites
    assert list(b.iter_rows()) == [(0, [1], [6]), (2, [0], [3])]


# -- conversions --------------------------------------------------------------

def test_to_dcsr_example():
    b = DynamicBlock.from_triples(3, 2, [(0, 1, 5), (2, 0, 3)])
    d = b.to_dcsr()
    assert d.nz_rows == [0, 2]
    assert d.row_ptr == [0, 1, 2]
    assert d.cols == [1, 0]
    assert d.vals == [5, 3]
    assert d.nnz == 2
    d.check()


def test_to_dcsr_empty():
    d = DynamicBlock(4, 4).to_dcsr()
    assert d.nz_rows == [] and d.row_ptr == [0] and d.cols == []
    assert d.nnz == 0


def test_round_trip_conversions_preserve_triples():
    rng = np.random.default_rng(3)
    pos = rng.choice(30 * 17, size=500, replace=False)
    triples = [(int(p // 17), int(p % 17), int(rng.integers(1, 99)))
               for p in pos]
    b = DynamicBlock.from_triples(30, 17, triples)
    want = set((r, c, v) for r, c, v in triples)
    assert set(b.to_dcsr().triples()) == want
    assert set(b.to_csr().triples()) == want
    assert set(b.to_csr().to_dcsr().triples()) == want
    assert b.to_dcsr().entry_map() == b.entry_map()
    assert b.to_dcsr().positions() == {(r, c) for r, c, _ in triples}


def test_csr_from_triples_later_duplicate_wins():
    c = csr_from_triples(2, 3, [(0, 2, 1), (1, 0, 4), (0, 2, 8)])
    assert c.entry_map() == {(0, 2): 8, (1, 0): 4}
    assert c.nnz == 2
    assert c.row_ptr == [0, 1, 2]


def test_dcsr_from_row_map_orders_rows():
    d = dcsr_from_row_map(5, 5, {3: {1: 7}, 0: {4: 2, 0: 1}, 2: {}})
    assert d.nz_rows == [0, 3]
    assert d.entry_map() == {(0, 4): 2, (0, 0): 1, (3, 1): 7}
    s = dcsr_from_row_map(5, 5, {1: {2: None}}, structure_only=True)
    assert s.vals is None
    assert s.positions() == {(1, 2)}


def test_dcsr_empty_classmethod():
    d = DcsrBlock.empty(3, 4)
    assert (d.n_rows, d.n_cols, d.nnz) == (3, 4, 0)
    assert d.vals == []
    s = DcsrBlock.empty(3, 4, structure_only=True)
    assert s.vals is None


def test_dcsr_check_rejects_malformed():
    with pytest.raises(AssertionError):
        DcsrBlock(2, 2, [1, 0], [0, 1, 2], [0, 0], [1, 1]).check()  # rows unordered
    with pytest.raises(AssertionError):
        DcsrBlock(2, 2, [0], [0, 0], [], []).check()                # empty listed row
    with pytest.raises(AssertionError):
        DcsrBlock(2, 2, [0], [0, 1], [5], [1]).check()              # col out of range


def test_bloom_block_carries_ell():
    b = BloomBlock(2, 2, [0], [0, 1], [1], [0b1010], ell=8)
    assert b.ell == 8
    b.check()
    with pytest.raises(AssertionError):
        BloomBlock(2, 2, [0], [0, 1], [1], [0], ell=8).check()  # zero bitfield
    with pytest.raises(AssertionError):
        BloomBlock(2, 2, [0], [0, 1], [1], [1 << 8], ell=8).check()  # bit overflow


# -- combinators ---------------------------------------------------------------

def test_add_into_examples():
    dst = DynamicBlock.from_triples(2, 2, [(0, 0, 4.0)])
    upd = dcsr_from_row_map(2, 2, {0: {0: 2.0}})
    add_into(dst, upd, MIN_PLUS.add)
    assert dst.get(0, 0) == 2.0

    dst2 = DynamicBlock.from_triples(2, 2, [(0, 0, 4)])
    upd2 = dcsr_from_row_map(2, 2, {0: {0: 2}})
    add_into(dst2, upd2, PLUS_TIMES_I64.add)
    assert dst2.get(0, 0) == 6

    empty = DynamicBlock(2, 2)
    add_into(empty, upd2, PLUS_TIMES_I64.add)
    assert empty.entry_map() == upd2.entry_map()


def test_add_into_with_inverses_restores():
    rng = np.random.default_rng(8)
    base = {(int(rng.integers(9)), int(rng.integers(9))): int(rng.integers(1, 50))
            for _ in range(40)}
    dst = DynamicBlock.from_triples(9, 9, [(r, c, v) for (r, c), v in base.items()])
    delta = dcsr_from_row_map(9, 9, {r: {c: -v for (rr, c), v in base.items() if rr == r}
                                     for r in {rc[0] for rc in base}})
    add_into(dst, delta, PLUS_TIMES_I64.add)
    # every position still present, all values identically zero
    assert dst.nnz == len(base)
    assert all(v == 0 for v in dst.entry_map().values())
    neg = dcsr_from_row_map(9, 9, {r: {c: base[(r, c)] for (rr, c) in base if rr == r}
                                   for r in {rc[0] for rc in base}})
    add_into(dst, neg, PLUS_TIMES_I64.add)
    assert dst.entry_map() == base


def test_merge_into_overwrites_even_upward():
    dst = DynamicBlock.from_triples(2, 2, [(0, 0, 1.0), (1, 1, 9.0)])
    upd = dcsr_from_row_map(2, 2, {0: {0: 5.0, 1: 2.0}})
    merge_into(dst, upd)
    # min-plus would keep 1.0; merge is overwrite semantics, so 5.0 wins
    assert dst.entry_map() == {(0, 0): 5.0, (0, 1): 2.0, (1, 1): 9.0}


def test_mask_out_set_difference():
    rng = np.random.default_rng(12)
    entries = {(int(p // 13), int(p % 13)): int(rng.integers(1, 9))
               for p in rng.choice(13 * 13, size=60, replace=False)}
    dst = DynamicBlock.from_triples(13, 13, [(r, c, v) for (r, c), v in entries.items()])
    keys = list(entries)
    half = set(keys[:30])
    mask = dcsr_from_row_map(
        13, 13, {r: {c: None for (rr, c) in half if rr == r}
                 for r in {rc[0] for rc in half}}, structure_only=False)
    # structure-only mask also accepted
    removed = mask_out(dst, mask)
    assert removed == 30
    assert set(dst.entry_map()) == set(keys[30:])
    dst.check()


def test_mask_out_own_structure_empties_block():
    b = DynamicBlock.from_triples(4, 4, [(0, 0, 1), (2, 3, 4), (3, 1, 2)])
    assert mask_out(b, b.to_dcsr()) == 3
    assert b.nnz == 0


def test_mask_out_ignores_absent():
    b = DynamicBlock.from_triples(2, 2, [(0, 0, 1)])
    mask = dcsr_from_row_map(2, 2, {1: {1: None}}, structure_only=True)
    assert mask_out(b, mask) == 0
    assert b.nnz == 1


def test_or_into_accumulates_bitfields():
    dst = DynamicBlock.from_triples(2, 2, [(0, 0, 0b0001)])
    upd = dcsr_from_row_map(2, 2, {0: {0: 0b0100, 1: 0b0010}})
    or_into(dst, upd)
    assert dst.entry_map() == {(0, 0): 0b0101, (0, 1): 0b0010}


# -- bloom row filter ----------------------------------------------------------

def test_filter_rows_zero_vector_drops_all():
    a = DynamicBlock.from_triples(3, 6, [(0, 1, 1), (1, 2, 2), (2, 5, 3)])
    out = filter_rows_by_bloom(a, [0, 0, 0], col_base=0, ell=64)
    assert out.nnz == 0


def test_filter_rows_full_vector_keeps_all():
    a = DynamicBlock.from_triples(3, 6, [(0, 1, 1), (1, 2, 2), (2, 5, 3)])
    full = (1 << 64) - 1
    out = filter_rows_by_bloom(a, [full] * 3, col_base=0, ell=64)
    assert set(out.triples()) == set(a.triples())


def test_filter_rows_small_ell_example():
    # ell = 4: bit of column c is (col_base + c) mod 4. Bitfield 0b0010 keeps
    # exactly columns congruent to 1 (mod 4): here 1 and 5 but not 2.
    a = DynamicBlock.from_triples(1, 8, [(0, 1, 10), (0, 5, 50), (0, 2, 20)])
    out = filter_rows_by_bloom(a, [0b0010], col_base=0, ell=4)
    assert out.entry_map() == {(0, 1): 10, (0, 5): 50}


def test_filter_rows_respects_col_base():
    # global column = col_base + local column; shifting the base moves bits
    a = DynamicBlock.from_triples(1, 4, [(0, 0, 7), (0, 1, 8)])
    out = filter_rows_by_bloom(a, [0b0001], col_base=3, ell=4)
    # global cols are 3 and 4 -> bits 3 and 0; only bit 0 passes
    assert out.entry_map() == {(0, 1): 8}


def test_filter_rows_output_is_subset():
    rng = np.random.default_rng(31)
    a = DynamicBlock.from_triples(
        10, 10, [(int(p // 10), int(p % 10), int(rng.integers(1, 9)))
                 for p in rng.choice(100, size=40, replace=False)])
    r_vec = [int(rng.integers(0, 256)) for _ in range(10)]
    out = filter_rows_by_bloom(a, r_vec, col_base=5, ell=8)
    out.check()
    for r, c, v in out.triples():
        assert a.get(r, c) == v
        assert (r_vec[r] >> ((5 + c) % 8)) & 1


# -- wire format ---------------------------------------------------------------

def test_serialize_golden_bytes():
    b = DynamicBlock.from_triples(3, 2, [(0, 1, 5), (2, 0, 3)]).to_dcsr()
    blob = dcsr_serialize(b, semiring_codec(PLUS_TIMES_I64))
    want = struct.pack("<4sHHQQQQ", b"DCSR", 1, 8, 3, 2, 2, 2)
    want += np.asarray([0, 2], "<u8").tobytes()        # nz_rows
    want += np.asarray([0, 1, 2], "<u8").tobytes()     # row_ptr
    want += np.asarray([1, 0], "<u8").tobytes()        # cols
    want += np.asarray([5, 3], "<i8").tobytes()        # values
    assert blob == want
    # 40-byte header + 2 nz_rows + 3 row_ptr + 2 cols (u64) + 2 values (i64)
    assert len(blob) == 40 + 8 * (2 + 3 + 2 + 2)


@pytest.mark.parametrize("sr", [PLUS_TIMES_I64, MIN_PLUS, BOOLEAN],
                         ids=lambda s: s.name)
def test_wire_round_trip(sr):
    rng = np.random.default_rng(41)
    triples = []
    for p in rng.choice(50 * 40, size=300, replace=False):
        v = bool(rng.integers(2)) if sr is BOOLEAN else float(rng.integers(1, 9))
        if sr is PLUS_TIMES_I64:
            v = int(v)
        triples.append((int(p // 40), int(p % 40), v))
    b = DynamicBlock.from_triples(50, 40, triples).to_dcsr()
    blob = dcsr_serialize(b, semiring_codec(sr))
    back = dcsr_deserialize(blob, semiring_codec(sr))
    assert back.entry_map() == b.entry_map()
    assert (back.n_rows, back.n_cols) == (50, 40)


def test_wire_round_trip_empty():
    b = DcsrBlock.empty(7, 9)
    blob = dcsr_serialize(b, semiring_codec(PLUS_TIMES_I64))
    back = dcsr_deserialize(blob, semiring_codec(PLUS_TIMES_I64))
    assert back.nnz == 0 and (back.n_rows, back.n_cols) == (7, 9)


def test_wire_round_trip_large():
    rng = np.random.default_rng(43)
    n = 400
    pos = rng.choice(n * n, size=100_000, replace=False)
    triples = [(int(p // n), int(p % n), int(v)) for p, v in
               zip(pos, rng.integers(-1000, 1000, size=len(pos)))]
    b = DynamicBlock.from_triples(n, n, triples).to_dcsr()
    blob = dcsr_serialize(b, semiring_codec(PLUS_TIMES_I64))
    back = dcsr_deserialize(blob, semiring_codec(PLUS_TIMES_I64))
    assert back.entry_map() == b.entry_map()


def test_wire_structure_only():
    b = dcsr_from_row_map(4, 4, {1: {0: None, 3: None}}, structure_only=True)
    blob = dcsr_serialize(b, STRUCTURE_CODEC)
    back = dcsr_deserialize(blob, STRUCTURE_CODEC)
    assert back.vals is None
    assert back.positions() == {(1, 0), (1, 3)}


def test_wire_bloom_round_trip():
    b = dcsr_from_row_map(4, 4, {0: {1: 0b101}, 2: {3: 0x8000}})
    blob = dcsr_serialize(b, bloom_codec(16))
    back = dcsr_deserialize(blob, bloom_codec(16), bloom_ell=16)
    assert isinstance(back, BloomBlock)
    assert back.ell == 16
    assert back.entry_map() == {(0, 1): 0b101, (2, 3): 0x8000}


def test_wire_rejects_corruption():
    codec = semiring_codec(PLUS_TIMES_I64)
    b = DynamicBlock.from_triples(3, 3, [(0, 1, 5), (2, 0, 3)]).to_dcsr()
    blob = dcsr_serialize(b, codec)

    with pytest.raises(DecodeError):
        dcsr_deserialize(blob[:10], codec)                     # truncated header
    with pytest.raises(DecodeError):
        dcsr_deserialize(b"XXXX" + blob[4:], codec)            # bad magic
    bad_ver = blob[:4] + struct.pack("<H", 9) + blob[6:]
    with pytest.raises(DecodeError):
        dcsr_deserialize(bad_ver, codec)                       # wrong version
    with pytest.raises(DecodeError):
        dcsr_deserialize(blob, STRUCTURE_CODEC)                # width mismatch
    with pytest.raises(DecodeError):
        dcsr_deserialize(blob + b"\x00", codec)                # trailing bytes
    with pytest.raises(DecodeError):
        dcsr_deserialize(blob[:-1], codec)                     # short payload


def test_wire_rejects_inconsistent_structure():
    codec = semiring_codec(PLUS_TIMES_I64)
    head = struct.pack("<4sHHQQQQ", b"DCSR", 1, 8, 3, 3, 2, 2)

    def body(nz_rows, row_ptr, cols, vals):
        return (head + np.asarray(nz_rows, "<u8").tobytes()
                + np.asarray(row_ptr, "<u8").tobytes()
                + np.asarray(cols, "<u8").tobytes()
                + np.asarray(vals, "<i8").tobytes())

    ok = body([0, 2], [0, 1, 2], [1, 0], [5, 3])
    assert dcsr_deserialize(ok, codec).nnz == 2

    with pytest.raises(DecodeError):
        dcsr_deserialize(body([2, 0], [0, 1, 2], [1, 0], [5, 3]), codec)  # rows unordered
    with pytest.raises(DecodeError):
        dcsr_deserialize(body([0, 2], [0, 1, 1], [1, 0], [5, 3]), codec)  # bad endpoint
    with pytest.raises(DecodeError):
        dcsr_deserialize(body([0, 2], [0, 0, 2], [1, 0], [5, 3]), codec)  # empty listed row
    with pytest.raises(DecodeError):
        dcsr_deserialize(body([0, 2], [0, 1, 2], [1, 7], [5, 3]), codec)  # col overflow
    with pytest.raises(DecodeError):
        dcsr_deserialize(body([0, 5], [0, 1, 2], [1, 0], [5, 3]), codec)  # row overflow


def test_structural_zero_survives_wire():
    b = DynamicBlock.from_triples(2, 2, [(0, 0, 0)]).to_dcsr()
    back = dcsr_deserialize(dcsr_serialize(b, semiring_codec(PLUS_TIMES_I64)),
                            semiring_codec(PLUS_TIMES_I64))
    assert back.entry_map() == {(0, 0): 0}


# -- csr block -----------------------------------------------------------------

def test_csr_block_row_access():
    c = CsrBlock(3, 4, [0, 2, 2, 3], [1, 3, 0], [10, 30, 5])
    assert c.row_cols(0) == [1, 3]
    assert c.row_vals(0) == [10, 30]
    assert c.row_nnz(1) == 0
    assert c.row_cols(2) == [0]
    assert list(c.triples()) == [(0, 1, 10), (0, 3, 30), (2, 0, 5)]
    d = c.to_dcsr()
    assert d.nz_rows == [0, 2]
    assert d.entry_map() == c.entry_map()

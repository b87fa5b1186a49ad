"""Distributed sparse matrix product and its batch-dynamic updates.

A matrix lives on a q x q process grid as one block per rank (DistMatrix).
The static product is a broadcast-based row/column algorithm.  After an
initial product, a batch of changes to the operands is folded into the
result in one of two ways:

* algebraic path: C' = C (+) Adelta . B' (+) A . Bdelta.  Exact when the
  semiring is a ring (deltas carry signed differences), and for insert-only
  batches whose addition is selective (min, or).  Supports transposed
  operands.
* general path: works for any semiring and any mix of inserts, modifies and
  deletes.  It recomputes exactly the output positions the batch can touch,
  using per-entry summation-index bitfields to shrink the recomputation,
  and deletes touched positions that lost all support.

Every rank calls each function collectively with its own Communicator.
"""

from __future__ import annotations

from dataclasses import dataclass

from .grid import BlockPartition
from .kernels import gustavson_multiply, masked_multiply, pattern_multiply
from .semiring import Semiring
from .storage import (
    DcsrBlock,
    DynamicBlock,
    STRUCTURE_CODEC,
    add_into,
    bloom_codec,
    csr_from_triples,
    dcsr_deserialize,
    dcsr_from_row_map,
    dcsr_serialize,
    filter_rows_by_bloom,
    or_into,
    semiring_codec,
)
from .transport import NULL_PHASES


class UnsupportedFeatureError(ValueError):
    """Requested operand layout is outside what the chosen path supports."""


@dataclass
class DistMatrix:
    """One rank's view of a block-partitioned matrix: the partition map plus
    the locally owned block (any row-readable storage).

    role marks how the matrix is used: "primary" operands are long-lived
    (usually mutable), "update" matrices carry one batch's changes and must
    be DCSR blocks, "bloom" matrices hold per-entry bitfields.
    """

    part: BlockPartition
    grid_row: int
    grid_col: int
    block: object
    role: str = "primary"

    @property
    def row_base(self) -> int:
        return self.part.row_starts[self.grid_row]

    @property
    def col_base(self) -> int:
        return self.part.col_starts[self.grid_col]

    @property
    def local_shape(self) -> tuple[int, int]:
        return self.part.block_shape(self.grid_row, self.grid_col)

    @classmethod
    def empty_dynamic(cls, part: BlockPartition, comm,
                      role: str = "primary") -> "DistMatrix":
        i, j = comm.grid_row, comm.grid_col
        return cls(part, i, j, DynamicBlock(*part.block_shape(i, j)), role)

    @classmethod
    def from_triples(cls, part: BlockPartition, comm, triples,
                     storage: str = "dynamic",
                     role: str = "primary") -> "DistMatrix":
        """Build from global (row, col, value) triples; each rank keeps the
        entries its block owns. Later duplicates overwrite earlier ones."""
        i, j = comm.grid_row, comm.grid_col
        r0, c0 = part.row_starts[i], part.col_starts[j]
        mine = [(gi - r0, gj - c0, v) for gi, gj, v in triples
                if part.owner_coords(gi, gj) == (i, j)]
        shape = part.block_shape(i, j)
        if storage == "dynamic":
            block = DynamicBlock.from_triples(*shape, mine)
        elif storage == "csr":
            block = csr_from_triples(*shape, mine)
        elif storage == "dcsr":
            block = DynamicBlock.from_triples(*shape, mine).to_dcsr()
        else:
            raise ValueError(f"unknown storage {storage!r}")
        return cls(part, i, j, block, role)

    def global_entries(self) -> dict:
        """Local entries keyed by global (row, col); for assembling test views."""
        to_global = self.part.to_global
        i, j = self.grid_row, self.grid_col
        return {to_global(i, j, r, c): v for r, c, v in self.block.triples()}


def _require_update_matrix(m: DistMatrix, name: str) -> None:
    if m.role != "update" or not isinstance(m.block, DcsrBlock):
        raise ValueError(
            f"{name} must be an update-role matrix stored as a DCSR block")


@dataclass
class SpgemmState:
    """Maintained product: the result C plus, per stored entry, the bitfield F
    of summation indices that contributed to it (folded mod ell). The
    transpose flags record the operand orientation C was built under."""

    C: DistMatrix
    F: DistMatrix
    sr: Semiring
    ell: int
    transpose_a: bool = False
    transpose_b: bool = False


def _wire(block, codec) -> bytes:
    d = block if isinstance(block, DcsrBlock) else block.to_dcsr()
    return dcsr_serialize(d, codec)


def _structure_wire(block) -> bytes:
    d = block if isinstance(block, DcsrBlock) else block.to_dcsr()
    return dcsr_serialize(d, STRUCTURE_CODEC)


def _bit_or(a, b):
    return a | b


def _check_inner(part_a: BlockPartition, part_b: BlockPartition, q: int) -> None:
    if part_a.q != q or part_b.q != q:
        raise ValueError("operand partitions do not match the grid")
    if part_a.n_cols != part_b.n_rows:
        raise ValueError(
            f"inner dimensions differ: {part_a.n_cols} vs {part_b.n_rows}")


# ---------------------------------------------------------------------------
# static product
# ---------------------------------------------------------------------------

def _summa(comm, a: DistMatrix, b: DistMatrix, sr: Semiring, build_bloom: bool,
           ell: int, workers: int, phases):
    q, i, j = comm.q, comm.grid_row, comm.grid_col
    _check_inner(a.part, b.part, q)
    part_c = BlockPartition(a.part.n_rows, b.part.n_cols, q)
    inner_starts = a.part.col_starts
    codec = semiring_codec(sr)
    a_bytes = _wire(a.block, codec)
    b_bytes = _wire(b.block, codec)
    c_local = DynamicBlock(*part_c.block_shape(i, j))
    f_local = DynamicBlock(*part_c.block_shape(i, j)) if build_bloom else None
    for k in range(q):
        with phases.phase("broadcast"):
            a_buf = comm.row_broadcast(k, a_bytes if j == k else None)
            b_buf = comm.col_broadcast(k, b_bytes if i == k else None)
        a_blk = dcsr_deserialize(a_buf, codec)
        b_blk = dcsr_deserialize(b_buf, codec)
        with phases.phase("local_multiply"):
            prod = gustavson_multiply(a_blk, b_blk, sr, workers=workers)
            if build_bloom:
                _, pat = pattern_multiply(a_blk, b_blk, inner_starts[k], ell)
        with phases.phase("merge"):
            add_into(c_local, prod, sr.add)
            if build_bloom:
                or_into(f_local, pat)
    c = DistMatrix(part_c, i, j, c_local)
    f = DistMatrix(part_c, i, j, f_local, role="bloom") if build_bloom else None
    return c, f


def summa_static(comm, a: DistMatrix, b: DistMatrix, sr: Semiring,
                 workers: int = 1, phases=NULL_PHASES) -> DistMatrix:
    """Full product C = a . b: q rounds of paired row/column broadcasts with
    local accumulation. Per rank: 2q broadcasts, no point-to-point traffic."""
    c, _ = _summa(comm, a, b, sr, False, 64, workers, phases)
    return c


def spgemm_algebraic_init(comm, a: DistMatrix, b: DistMatrix, sr: Semiring,
                          ell: int = 64, workers: int = 1,
                          phases=NULL_PHASES) -> SpgemmState:
    """Full product that also records, per output entry, the bitfield of
    contributing summation indices (folded mod ell), enabling later
    masked-recompute updates."""
    c, f = _summa(comm, a, b, sr, True, ell, workers, phases)
    return SpgemmState(C=c, F=f, sr=sr, ell=ell)


# ---------------------------------------------------------------------------
# algebraic update
# ---------------------------------------------------------------------------

def spgemm_algebraic_update(comm, state: SpgemmState, a: DistMatrix,
                            a_delta: DistMatrix, b_prime: DistMatrix,
                            b_delta: DistMatrix, workers: int = 1,
                            phases=NULL_PHASES) -> None:
    """Fold operand deltas into the maintained product:

        C' = C (+) op(a_delta) . op(b_prime) (+) op(a) . op(b_delta)

    a is the left operand before the batch, b_prime the right operand after
    it. Exact for rings with signed-difference deltas, and for insert-only
    batches under selective addition (min, or). The entry bitfields in
    state.F are not refreshed here; run general updates from a fresh init.

    Operand orientation comes from state's transpose flags. Transposed
    operands stay distributed by their stored layout; the update inserts
    transpose exchanges around the broadcasts and aggregations instead of
    materializing the transposed matrices. Per rank and call this costs 2q
    broadcasts, 2q aggregations and at most 4 point-to-point exchanges
    (exactly 2 when neither operand is transposed).
    """
    q, i, j = comm.q, comm.grid_row, comm.grid_col
    sr = state.sr
    ta, tb = state.transpose_a, state.transpose_b
    _require_update_matrix(a_delta, "a_delta")
    _require_update_matrix(b_delta, "b_delta")
    n_out = (a.part.n_cols if ta else a.part.n_rows,
             b_prime.part.n_rows if tb else b_prime.part.n_cols)
    inner = (a.part.n_rows if ta else a.part.n_cols,
             b_prime.part.n_cols if tb else b_prime.part.n_rows)
    if inner[0] != inner[1]:
        raise ValueError(f"inner dimensions differ: {inner[0]} vs {inner[1]}")
    if (state.C.part.n_rows, state.C.part.n_cols) != n_out:
        raise ValueError("maintained product shape does not match operands")
    codec = semiring_codec(sr)

    # Block placement around the two delta products X = op(Ad).op(B') and
    # Y = op(A).op(Bd). Broadcasting a delta along rows wants its round-k
    # source at (i, k), along columns at (k, j); whether the natively owned
    # or the transpose-partner block is the one needed there flips with each
    # transpose flag, and both flips cancel when ta == tb.
    pre_exchange = ta == tb
    x_bcast_row = not tb  # axis the delta of a travels along
    y_bcast_row = ta      # axis the delta of b travels along
    x_agg_col = not tb    # axis X partials fold along
    y_agg_col = ta        # axis Y partials fold along

    with phases.phase("transpose_exchange"):
        if pre_exchange:
            a_bytes = comm.transpose_exchange(_wire(a_delta.block, codec))
            b_bytes = comm.transpose_exchange(_wire(b_delta.block, codec))
        else:
            a_bytes = _wire(a_delta.block, codec)
            b_bytes = _wire(b_delta.block, codec)

    def bcast(along_row: bool, k: int, payload: bytes) -> bytes:
        if along_row:
            return comm.row_broadcast(k, payload if j == k else None)
        return comm.col_broadcast(k, payload if i == k else None)

    x_mine = y_mine = None
    for k in range(q):
        with phases.phase("broadcast"):
            a_buf = bcast(x_bcast_row, k, a_bytes)
            b_buf = bcast(y_bcast_row, k, b_bytes)
        a_blk = dcsr_deserialize(a_buf, codec)
        b_blk = dcsr_deserialize(b_buf, codec)
        with phases.phase("local_multiply"):
            x_part = gustavson_multiply(a_blk, b_prime.block, sr, ta, tb, workers)
            y_part = gustavson_multiply(a.block, b_blk, sr, ta, tb, workers)
        with phases.phase("aggregate"):
            xr = comm.aggregate_sparse("col" if x_agg_col else "row", k,
                                       x_part, sr.add, codec)
            yr = comm.aggregate_sparse("col" if y_agg_col else "row", k,
                                       y_part, sr.add, codec)
        if xr is not None:
            x_mine = xr
        if yr is not None:
            y_mine = yr

    with phases.phase("transpose_exchange"):
        if tb:  # X folded onto the transpose of its destination rank
            x_mine = dcsr_deserialize(
                comm.transpose_exchange(dcsr_serialize(x_mine, codec)), codec)
        if ta:
            y_mine = dcsr_deserialize(
                comm.transpose_exchange(dcsr_serialize(y_mine, codec)), codec)

    c_local = state.C.block
    assert (x_mine.n_rows, x_mine.n_cols) == (c_local.n_rows, c_local.n_cols)
    assert (y_mine.n_rows, y_mine.n_cols) == (c_local.n_rows, c_local.n_cols)
    with phases.phase("merge"):
        add_into(c_local, x_mine, sr.add)
        add_into(c_local, y_mine, sr.add)


# ---------------------------------------------------------------------------
# general update
# ---------------------------------------------------------------------------

def compute_pattern(comm, a: DistMatrix, a_delta: DistMatrix,
                    b_prime: DistMatrix, b_delta: DistMatrix,
                    a_prime: DistMatrix, ell: int = 64,
                    phases=NULL_PHASES) -> tuple[DcsrBlock, DynamicBlock]:
    """Locate every output position a batch can touch.

    a_delta and b_delta list, structurally, each inserted, modified or
    deleted operand position (their values are ignored). Returns per rank:

    * the touched-position structure struct(a_delta . b_prime) union
      struct(a . b_delta) of the local output block, and
    * the bitfield block bloom(a_delta . b_prime) | bloom(a_prime . b_delta)
      of summation indices the batch adds to those positions.

    Costs 2q broadcasts, 3q aggregations and 2 transpose exchanges per rank.
    """
    q, i, j = comm.q, comm.grid_row, comm.grid_col
    _check_inner(a.part, b_prime.part, q)
    _require_update_matrix(a_delta, "a_delta")
    _require_update_matrix(b_delta, "b_delta")
    inner_starts = a.part.col_starts
    bcodec = bloom_codec(ell)

    with phases.phase("transpose_exchange"):
        a_bytes = comm.transpose_exchange(_structure_wire(a_delta.block))
        b_bytes = comm.transpose_exchange(_structure_wire(b_delta.block))

    x_pat = y_pat = y_bits = None
    for k in range(q):
        with phases.phase("broadcast"):
            a_buf = comm.row_broadcast(k, a_bytes if j == k else None)
            b_buf = comm.col_broadcast(k, b_bytes if i == k else None)
        a_blk = dcsr_deserialize(a_buf, STRUCTURE_CODEC)
        b_blk = dcsr_deserialize(b_buf, STRUCTURE_CODEC)
        with phases.phase("local_multiply"):
            _, p_new = pattern_multiply(a_blk, b_prime.block,
                                        inner_starts[i], ell)
            p_old, _ = pattern_multiply(a.block, b_blk, inner_starts[j], ell)
            _, p_cur = pattern_multiply(a_prime.block, b_blk,
                                        inner_starts[j], ell)
        with phases.phase("aggregate"):
            r_new = comm.aggregate_sparse("col", k, p_new, _bit_or, bcodec,
                                          bloom_ell=ell)
            r_old = comm.aggregate_sparse("row", k, p_old, None, STRUCTURE_CODEC)
            r_cur = comm.aggregate_sparse("row", k, p_cur, _bit_or, bcodec,
                                          bloom_ell=ell)
        if r_new is not None:
            x_pat = r_new
        if r_old is not None:
            y_pat = r_old
        if r_cur is not None:
            y_bits = r_cur

    n_r, n_c = x_pat.n_rows, x_pat.n_cols
    rows: dict[int, dict] = {}
    for blk in (x_pat, y_pat):
        for r, cols, _ in blk.iter_rows():
            d = rows.setdefault(r, {})
            for c in cols:
                d[c] = None
    touched = dcsr_from_row_map(n_r, n_c, rows, structure_only=True)
    new_bits = DynamicBlock(n_r, n_c)
    or_into(new_bits, x_pat)
    or_into(new_bits, y_bits)
    return touched, new_bits


def spgemm_general_update(comm, state: SpgemmState, a_prime: DistMatrix,
                          a_delta: DistMatrix, b_prime: DistMatrix,
                          b_delta: DistMatrix, a: DistMatrix, b=None,
                          workers: int = 1, phases=NULL_PHASES) -> dict:
    """Fold a batch of inserts, modifies and deletes into the maintained
    product under any semiring.

    a is the left operand before the batch, a_prime/b_prime the operands
    after it, and a_delta/b_delta the structural change sets (values unused).
    b, the right operand before the batch, is accepted for symmetry but not
    needed. Touched output positions are recomputed from scratch, but only
    over the left-operand rows and summation indices whose bitfields say
    they can matter; touched positions left with no contribution are deleted
    from the product. state.C and state.F are updated in place. Returns
    local batch statistics.
    """
    if state.transpose_a or state.transpose_b:
        raise UnsupportedFeatureError(
            "general updates support untransposed operands only")
    q, i, j = comm.q, comm.grid_row, comm.grid_col
    sr, ell = state.sr, state.ell
    _check_inner(a_prime.part, b_prime.part, q)
    codec = semiring_codec(sr)
    bcodec = bloom_codec(ell)
    inner_starts = a_prime.part.col_starts

    touched, new_bits = compute_pattern(comm, a, a_delta, b_prime, b_delta,
                                        a_prime, ell, phases)

    # Per local output row, the union of candidate summation-index bitfields
    # over its touched positions; reduced across the grid row so every rank
    # holding a piece of those rows can filter its slice of a_prime.
    f_local: DynamicBlock = state.F.block
    n_lr, n_lc = state.C.local_shape
    assert (touched.n_rows, touched.n_cols) == (n_lr, n_lc)
    with phases.phase("local_multiply"):
        row_bits = [0] * n_lr
        fget, nget = f_local.get, new_bits.get
        for r, cols, _ in touched.iter_rows():
            acc = 0
            for c in cols:
                v = fget(r, c)
                if v:
                    acc |= v
                v = nget(r, c)
                if v:
                    acc |= v
            row_bits[r] |= acc
        nz = [r for r in range(n_lr) if row_bits[r]]
        vec = DcsrBlock(n_lr, 1, nz, list(range(len(nz) + 1)),
                        [0] * len(nz), [row_bits[r] for r in nz])
    with phases.phase("aggregate"):
        vr = comm.aggregate_sparse("row", 0, vec, _bit_or, bcodec, bloom_ell=ell)
    with phases.phase("broadcast"):
        v_buf = comm.row_broadcast(
            0, dcsr_serialize(vr, bcodec) if vr is not None else None)
    r_blk = dcsr_deserialize(v_buf, bcodec, bloom_ell=ell)
    r_vec = [0] * n_lr
    for r, _cols, vals in r_blk.iter_rows():
        r_vec[r] = vals[0]

    with phases.phase("local_multiply"):
        a_rows = filter_rows_by_bloom(a_prime.block, r_vec,
                                      inner_starts[j], ell)
    with phases.phase("transpose_exchange"):
        ar_bytes = comm.transpose_exchange(dcsr_serialize(a_rows, codec))
    mask_bytes = _structure_wire(touched)

    z_mine = h_mine = None
    for k in range(q):
        with phases.phase("broadcast"):
            a_buf = comm.row_broadcast(k, ar_bytes if j == k else None)
            m_buf = comm.col_broadcast(k, mask_bytes if i == k else None)
        a_blk = dcsr_deserialize(a_buf, codec)
        mask = dcsr_deserialize(m_buf, STRUCTURE_CODEC)
        with phases.phase("local_multiply"):
            z_part, h_part = masked_multiply(a_blk, b_prime.block, mask, sr,
                                             inner_starts[i], ell)
        with phases.phase("aggregate"):
            zr = comm.aggregate_sparse("col", k, z_part, sr.add, codec)
            hr = comm.aggregate_sparse("col", k, h_part, _bit_or, bcodec,
                                       bloom_ell=ell)
        if zr is not None:
            z_mine = zr
        if hr is not None:
            h_mine = hr

    c_local: DynamicBlock = state.C.block
    with phases.phase("merge"):
        z_map = z_mine.entry_map()
        h_map = h_mine.entry_map()
        recomputed = deleted = 0
        for r, cols, _ in touched.iter_rows():
            for c in cols:
                v = z_map.get((r, c))
                if v is None:
                    if c_local.delete(r, c):
                        deleted += 1
                    f_local.delete(r, c)
                else:
                    c_local.upsert(r, c, v)
                    f_local.upsert(r, c, h_map[(r, c)])
                    recomputed += 1
    return {
        "n_touched": touched.nnz,
        "n_recomputed": recomputed,
        "n_deleted": deleted,
        "nnz_filtered": a_rows.nnz,
    }

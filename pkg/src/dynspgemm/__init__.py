"""Batch-dynamic sparse matrix storage and distributed sparse matrix products
over semirings, on a simulated message-passing process grid."""

from .semiring import (
    BOOLEAN,
    MIN_PLUS,
    PLUS_TIMES_F64,
    PLUS_TIMES_I64,
    REGISTRY,
    Semiring,
    by_name,
)
from .storage import (
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
from .grid import BlockPartition, ProcessGrid, split_range
from .transport import (
    AbortedError,
    Communicator,
    Counters,
    DeadlockError,
    NULL_PHASES,
    PHASE_NAMES,
    PhaseRecorder,
    SimCluster,
    TransportError,
    run_spmd,
)
from .redistribute import (
    IndexPermutation,
    OP_DELETE,
    OP_UPSERT,
    UpdateTuple,
    apply_batch,
    counting_sort,
    decode_tuples,
    delete,
    encode_tuples,
    redistribute_updates,
    upsert,
)
from .kernels import gustavson_multiply, masked_multiply, pattern_multiply
from .distmm import (
    DistMatrix,
    SpgemmState,
    UnsupportedFeatureError,
    compute_pattern,
    spgemm_algebraic_init,
    spgemm_algebraic_update,
    spgemm_general_update,
    summa_static,
)
from .bench import (
    ConfigError,
    ExperimentConfig,
    MetricsRecord,
    ResourceCapError,
    VerificationError,
    emit_csv,
    load_edges,
    parse_csv,
    rmat_generate,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "AbortedError", "BOOLEAN", "BloomBlock", "BlockPartition", "Communicator",
    "ConfigError", "Counters", "CsrBlock", "DcsrBlock", "DeadlockError",
    "DecodeError", "DistMatrix", "DynamicBlock", "ExperimentConfig",
    "IndexPermutation", "MIN_PLUS", "MetricsRecord", "NULL_PHASES",
    "OP_DELETE", "OP_UPSERT",
    "PHASE_NAMES", "PLUS_TIMES_F64", "PLUS_TIMES_I64", "PhaseRecorder",
    "ProcessGrid", "REGISTRY", "ResourceCapError", "STRUCTURE_CODEC",
    "Semiring", "SimCluster", "SpgemmState", "TransportError",
    "UnsupportedFeatureError", "UpdateTuple", "VerificationError", "add_into",
    "apply_batch", "bloom_codec", "by_name", "compute_pattern",
    "counting_sort", "csr_from_triples", "dcsr_deserialize", "dcsr_from_row_map",
    "dcsr_serialize", "decode_tuples", "delete", "emit_csv", "encode_tuples",
    "filter_rows_by_bloom", "gustavson_multiply", "load_edges",
    "mask_out", "masked_multiply", "merge_into", "or_into", "parse_csv",
    "pattern_multiply", "redistribute_updates", "rmat_generate",
    "run_experiment", "run_spmd", "semiring_codec", "spgemm_algebraic_init",
    "spgemm_algebraic_update", "spgemm_general_update", "split_range",
    "summa_static", "upsert",
]

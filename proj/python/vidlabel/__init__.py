"""Python bindings for the vidlabel C++ core."""

from ._core import (
    DataError,
    NumericalError,
    UsageError,
    average_precision,
    encode_stats,
    evaluate,
    generate,
    hit_at_k,
    mean_average_precision,
    moe_predict,
    perr,
    predict,
    preprocess,
    rank_labels,
    sampling_weights,
    train,
    whiten,
)

__all__ = [
    "DataError",
    "NumericalError",
    "UsageError",
    "average_precision",
    "encode_stats",
    "evaluate",
    "generate",
    "hit_at_k",
    "mean_average_precision",
    "moe_predict",
    "perr",
    "predict",
    "preprocess",
    "rank_labels",
    "sampling_weights",
    "train",
    "whiten",
]

"""Exact conservation correction for neural PDE surrogates."""

from ._core import (
    DataError,
    NumericalError,
    bench,
    config_keys,
    eval,
    gen,
    generate_split,
    linear_correct,
    project_linear,
    project_quadratic,
    quadratic_correct,
    quantity_linear,
    quantity_quadratic,
    read_dataset,
    relative_l2,
    sweep,
    train,
)

__all__ = [
    "DataError",
    "NumericalError",
    "bench",
    "config_keys",
    "eval",
    "gen",
    "generate_split",
    "linear_correct",
    "project_linear",
    "project_quadratic",
    "quadratic_correct",
    "quantity_linear",
    "quantity_quadratic",
    "read_dataset",
    "relative_l2",
    "sweep",
    "train",
]

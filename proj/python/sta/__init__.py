"""Sparse training with an analytical accelerator cost model.

Thin re-export of the compiled ``_core`` extension.
"""

from ._core import (
    ConfigError,
    CsbTensor,
    DivergenceError,
    FormatError,
    InfeasibleError,
    Network,
    LayerShape,
    Phase,
    QuantileEstimator,
    RunConfig,
    Scheme,
    ShapeError,
    WeightRecompute,
    balance_overhead,
    dense_macs,
    parse_network,
    preset_names,
    preset_network,
    simulate,
    train,
)

__all__ = [
    "ConfigError",
    "CsbTensor",
    "DivergenceError",
    "FormatError",
    "InfeasibleError",
    "LayerShape",
    "Network",
    "Phase",
    "QuantileEstimator",
    "RunConfig",
    "Scheme",
    "ShapeError",
    "WeightRecompute",
    "balance_overhead",
    "dense_macs",
    "parse_network",
    "preset_names",
    "preset_network",
    "simulate",
    "train",
]

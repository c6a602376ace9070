"""flowgat: demand forecasting over per-interval commuting graphs.

The pipeline: trip records -> region demand counts + per-interval directed
commuting graphs -> windowed dataset -> graph-attention + LSTM forecaster,
with classical baselines and ablation/sweep tooling alongside.
"""

__version__ = "0.1.0"

from . import autodiff, evaluation, kernels, model, training
from .data import (
    GridSpec,
    SynthConfig,
    TripRecord,
    WindowedDataset,
    build_demand,
    build_dynamic_graphs,
    build_fixed_graph,
    generate_synthetic_city,
    make_windows,
    parse_trips,
)

__all__ = [
    "GridSpec",
    "SynthConfig",
    "TripRecord",
    "WindowedDataset",
    "autodiff",
    "build_demand",
    "build_dynamic_graphs",
    "build_fixed_graph",
    "evaluation",
    "generate_synthetic_city",
    "kernels",
    "make_windows",
    "model",
    "parse_trips",
    "training",
]

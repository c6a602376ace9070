"""Data pipeline: trips, demand counts, commuting graphs, windows, synthesis."""

from .container import load_dataset, save_dataset
from .demand import DemandSeries, MaxScaler, build_demand
from .graphs import (
    DynamicGraphSequence,
    FixedGraph,
    build_dynamic_graphs,
    build_fixed_graph,
    pad_neighbor_lists,
    stack_padded,
)
from .synth import SynthConfig, generate_synthetic_city, synthesize_trip_arrays
from .trips import (
    GridSpec,
    RawBinning,
    TripRecord,
    parse_trips,
    parse_trips_raw,
    trips_to_array,
    write_trips,
)
from .windows import Calendar, Window, WindowedDataset, make_windows

__all__ = [
    "Calendar",
    "DemandSeries",
    "DynamicGraphSequence",
    "FixedGraph",
    "GridSpec",
    "MaxScaler",
    "RawBinning",
    "SynthConfig",
    "TripRecord",
    "Window",
    "WindowedDataset",
    "build_demand",
    "build_dynamic_graphs",
    "build_fixed_graph",
    "generate_synthetic_city",
    "load_dataset",
    "make_windows",
    "pad_neighbor_lists",
    "parse_trips",
    "parse_trips_raw",
    "save_dataset",
    "stack_padded",
    "synthesize_trip_arrays",
    "trips_to_array",
    "write_trips",
]

"""Chronological train/val/test windows over the demand series.

A sample is keyed by its last input interval t: inputs are the demand
slices and graphs for t-L+1 .. t, the target is the demand at t+1. A
sample belongs to a split only when all of t-L+1 .. t+1 lie inside that
split's interval range, so no window straddles a split boundary. Inputs
and targets are scaled by the training-split maximum; metrics are
computed after inverting the scaling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ConfigError
from .demand import DemandSeries, MaxScaler
from .graphs import DynamicGraphSequence, FixedGraph
from .trips import GridSpec

SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class Calendar:
    """Maps interval indices to time-of-day slots and days of the week."""

    intervals_per_day: int
    start_weekday: int = 0  # 0 = Monday

    def slot(self, t: int) -> int:
        return t % self.intervals_per_day

    def day_of_week(self, t) -> np.ndarray | int:
        return (np.asarray(t) // self.intervals_per_day + self.start_weekday) % 7

    def is_weekend(self, t) -> np.ndarray | bool:
        return self.day_of_week(t) >= 5


@dataclass(frozen=True)
class Window:
    """One training sample: scaled input block, raw lags, and its graphs."""

    t: int                      # last input interval
    x: np.ndarray               # (L, N) scaled demand, oldest row first
    x_raw: np.ndarray           # (L, N) raw counts as float64
    target: np.ndarray          # (N,) scaled demand at t+1
    neighbors: list             # per input interval: per-node in-neighbor arrays
    padded: list                # per input interval: (idx, mask) from the graph cache


@dataclass
class WindowedDataset:
    """Demand, graphs, and chronological splits packaged for training."""

    grid: GridSpec
    demand: DemandSeries
    graphs: DynamicGraphSequence
    fixed: FixedGraph
    seq_len: int
    split_fractions: tuple[float, float, float]
    scaler: MaxScaler
    demand_scaled: np.ndarray                # (N, T) float64
    splits: dict[str, np.ndarray]            # split -> sorted array of window keys t
    split_ranges: dict[str, tuple[int, int]]  # split -> [start, stop) interval range
    calendar: Calendar | None = None

    @property
    def n_regions(self) -> int:
        return self.grid.n_regions

    def window(self, t: int) -> Window:
        lo = t - self.seq_len + 1
        return Window(
            t=t,
            x=self.demand_scaled[:, lo : t + 1].T.copy(),
            x_raw=self.demand.values[:, lo : t + 1].T.astype(np.float64),
            target=self.demand_scaled[:, t + 1].copy(),
            neighbors=[self.graphs.neighbors_in[i] for i in range(lo, t + 1)],
            padded=[self.graphs.padded(i) for i in range(lo, t + 1)],
        )

    def target_raw(self, t: int) -> np.ndarray:
        return self.demand.values[:, t + 1].astype(np.float64)

    def with_seq_len(self, seq_len: int) -> "WindowedDataset":
        """Same data, rebuilt with a different input window length."""
        return make_windows(
            self.demand,
            self.graphs,
            self.fixed,
            self.grid,
            seq_len,
            self.split_fractions,
            calendar=self.calendar,
        )


def split_interval_ranges(n_intervals: int, fractions) -> dict[str, tuple[int, int]]:
    f = tuple(float(x) for x in fractions)
    if len(f) != 3 or min(f) < 0 or sum(f) > 1.0 + 1e-9:
        raise ConfigError(f"split fractions must be three non-negative values summing to <= 1, got {f}")
    n_train = int(n_intervals * f[0])
    n_val = int(n_intervals * f[1])
    if abs(sum(f) - 1.0) <= 1e-9:
        n_test = n_intervals - n_train - n_val
    else:
        n_test = int(n_intervals * f[2])
    return {
        "train": (0, n_train),
        "val": (n_train, n_train + n_val),
        "test": (n_train + n_val, n_train + n_val + n_test),
    }


def make_windows(
    demand: DemandSeries,
    graphs: DynamicGraphSequence,
    fixed: FixedGraph,
    grid: GridSpec,
    seq_len: int,
    split_fractions=(0.64, 0.16, 0.20),
    calendar: Calendar | None = None,
) -> WindowedDataset:
    """Assemble the windowed dataset; the scaler is fit on the train range only."""
    n_t = demand.n_intervals
    if seq_len < 1:
        raise ConfigError(f"seq_len must be >= 1, got {seq_len}")
    if n_t < seq_len + 1:
        raise ConfigError(f"need at least seq_len+1={seq_len + 1} intervals, got {n_t}")
    ranges = split_interval_ranges(n_t, split_fractions)

    splits = {}
    for name, (lo, hi) in ranges.items():
        first = lo + seq_len - 1
        last = hi - 2
        splits[name] = np.arange(first, last + 1, dtype=np.int64) if last >= first else np.empty(0, dtype=np.int64)

    train_hi = ranges["train"][1]
    scaler = MaxScaler.fit(demand.values[:, :train_hi])
    return WindowedDataset(
        grid=grid,
        demand=demand,
        graphs=graphs,
        fixed=fixed,
        seq_len=seq_len,
        split_fractions=tuple(float(x) for x in split_fractions),
        scaler=scaler,
        demand_scaled=scaler.transform(demand.values),
        splits=splits,
        split_ranges=ranges,
        calendar=calendar,
    )

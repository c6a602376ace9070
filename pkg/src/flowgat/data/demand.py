"""Region-by-interval demand counts built from trip records."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ValidationError
from .trips import GridSpec, TripRecord, trips_to_array


@dataclass
class DemandSeries:
    """Non-negative order counts, one row per region, one column per interval."""

    values: np.ndarray  # (N, T) int64

    @property
    def n_regions(self) -> int:
        return self.values.shape[0]

    @property
    def n_intervals(self) -> int:
        return self.values.shape[1]

    def total(self) -> int:
        return int(self.values.sum())


def build_demand(trips: Sequence[TripRecord], grid: GridSpec) -> DemandSeries:
    """Count trips per (origin region, start interval); total count is preserved."""
    arr = trips_to_array(trips)
    n, t = grid.n_regions, grid.n_intervals
    if arr.shape[0]:
        if arr[:, 0].min() < 0 or arr[:, 0].max() >= n or arr[:, 2].min() < 0 or arr[:, 2].max() >= t:
            raise ValidationError("trip record outside the grid bounds")
        flat = np.bincount(arr[:, 0] * t + arr[:, 2], minlength=n * t)
        values = flat.reshape(n, t).astype(np.int64)
    else:
        values = np.zeros((n, t), dtype=np.int64)
    return DemandSeries(values)


@dataclass(frozen=True)
class MaxScaler:
    """Scale demand by the training-split maximum; inverse restores raw units."""

    scale: float

    @classmethod
    def fit(cls, values: np.ndarray) -> "MaxScaler":
        top = float(values.max()) if values.size else 0.0
        return cls(scale=top if top > 0.0 else 1.0)

    def transform(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) / self.scale

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.scale

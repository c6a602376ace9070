"""Per-interval commuting graphs and the static geographic-neighborhood graph.

A trip from region j to region i during interval t creates the directed
edge j -> i at t (i aggregates over the sources of flow into it). An edge
exists iff at least ``theta`` trips share that (origin, destination,
interval) triple. Every node additionally carries a self-loop at every
interval, so neighbor sets are never empty.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ValidationError
from .trips import GridSpec, TripRecord, trips_to_array


def pad_neighbor_lists(lists: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Pack ragged per-node neighbor arrays into (idx, mask) with a common width."""
    n = len(lists)
    width = max(len(v) for v in lists)
    idx = np.zeros((n, width), dtype=np.int64)
    mask = np.zeros((n, width), dtype=bool)
    for i, v in enumerate(lists):
        idx[i, : len(v)] = v
        mask[i, : len(v)] = True
    return idx, mask


def stack_padded(pairs: Sequence[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    """Stack per-instance (idx, mask) pairs, re-padding to the batch maximum width."""
    n_inst = len(pairs)
    n = pairs[0][0].shape[0]
    width = max(p[0].shape[1] for p in pairs)
    idx = np.zeros((n_inst, n, width), dtype=np.int64)
    mask = np.zeros((n_inst, n, width), dtype=bool)
    for b, (i_arr, m_arr) in enumerate(pairs):
        idx[b, :, : i_arr.shape[1]] = i_arr
        mask[b, :, : m_arr.shape[1]] = m_arr
    return idx, mask


@dataclass
class DynamicGraphSequence:
    """Directed in-neighbor structure per interval, built from commuting flows.

    ``edges[t]`` holds (src, dst, count) rows sorted by (dst, src) for the
    pairs with count >= theta; ``neighbors_in[t][i]`` is the sorted array of
    in-neighbors of node i including i itself. Counts are retained for
    inspection but the model only consumes neighbor membership.
    """

    n_nodes: int
    theta: int
    edges: list[np.ndarray]
    neighbors_in: list[list[np.ndarray]]
    _padded: dict = field(default_factory=dict, repr=False)

    @property
    def n_intervals(self) -> int:
        return len(self.neighbors_in)

    def edge_count(self) -> int:
        return int(sum(e.shape[0] for e in self.edges))

    def padded(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        cached = self._padded.get(t)
        if cached is None:
            cached = pad_neighbor_lists(self.neighbors_in[t])
            self._padded[t] = cached
        return cached


@dataclass
class FixedGraph:
    """Self plus geographic 8-neighborhood, identical at every interval."""

    n_nodes: int
    neighbors_in: list[np.ndarray]
    _padded: tuple | None = field(default=None, repr=False)

    def padded(self) -> tuple[np.ndarray, np.ndarray]:
        if self._padded is None:
            self._padded = pad_neighbor_lists(self.neighbors_in)
        return self._padded


def build_dynamic_graphs(trips: Sequence[TripRecord], grid: GridSpec, theta: int = 1) -> DynamicGraphSequence:
    """Group trips into per-interval directed edges thresholded at ``theta``."""
    if theta < 1:
        raise ValidationError(f"theta must be >= 1, got {theta}")
    arr = trips_to_array(trips)
    n, n_t = grid.n_regions, grid.n_intervals

    if arr.shape[0]:
        keys = (arr[:, 2] * n + arr[:, 0]) * n + arr[:, 1]
        uniq, counts = np.unique(keys, return_counts=True)
        keep = counts >= theta
        uniq, counts = uniq[keep], counts[keep]
        dst = uniq % n
        src = (uniq // n) % n
        t_of = uniq // (n * n)
        order = np.lexsort((src, dst, t_of))
        dst, src, t_of, counts = dst[order], src[order], t_of[order], counts[order]
    else:
        dst = src = t_of = counts = np.empty(0, dtype=np.int64)

    self_arrays = [np.array([i], dtype=np.int64) for i in range(n)]
    empty_edges = np.empty((0, 3), dtype=np.int64)
    bounds = np.searchsorted(t_of, np.arange(n_t + 1))

    edges: list[np.ndarray] = []
    neighbors: list[list[np.ndarray]] = []
    for t in range(n_t):
        lo, hi = bounds[t], bounds[t + 1]
        if lo == hi:
            edges.append(empty_edges)
            neighbors.append(list(self_arrays))
            continue
        block = np.column_stack((src[lo:hi], dst[lo:hi], counts[lo:hi]))
        edges.append(block)
        per_node = list(self_arrays)
        d_slice, s_slice = dst[lo:hi], src[lo:hi]
        starts = np.searchsorted(d_slice, np.arange(n + 1))
        for i in range(n):
            a, b = starts[i], starts[i + 1]
            if a == b:
                continue
            sources = s_slice[a:b]
            pos = np.searchsorted(sources, i)
            if pos < len(sources) and sources[pos] == i:
                per_node[i] = sources.copy()
            else:
                per_node[i] = np.insert(sources, pos, i)
        neighbors.append(per_node)
    return DynamicGraphSequence(n_nodes=n, theta=theta, edges=edges, neighbors_in=neighbors)


def build_fixed_graph(grid: GridSpec) -> FixedGraph:
    """Adjacency of each grid cell with its (up to) 8 surrounding cells plus itself."""
    n_rows, n_cols = grid.n_rows, grid.n_cols
    neighbors: list[np.ndarray] = []
    for r in range(n_rows):
        for c in range(n_cols):
            cell = []
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < n_rows and 0 <= cc < n_cols:
                        cell.append(rr * n_cols + cc)
            neighbors.append(np.array(sorted(cell), dtype=np.int64))
    return FixedGraph(n_nodes=grid.n_regions, neighbors_in=neighbors)

"""Binary dataset artifact: demand matrix + per-interval edge lists.

Layout: ``FGDS`` magic, u16 major/minor version, u32 header length, a
canonical-JSON header, then the payload blocks in fixed order:

    demand      N*T int64 little-endian, row-major
    edges       per interval: u32 edge count, then count*(src,dst,count) int64

Windows, splits, and the scaler are rebuilt deterministically from the
header fields on load, so a load/save cycle is byte-identical.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..ioutil import format_version_string, pack_container, unpack_container, write_atomic
from .demand import DemandSeries
from .graphs import DynamicGraphSequence, FixedGraph, build_fixed_graph
from .trips import GridSpec
from .windows import Calendar, WindowedDataset, make_windows

MAGIC = b"FGDS"


def dataset_to_bytes(ds: WindowedDataset, config_echo: dict | None = None) -> bytes:
    grid = ds.grid
    header = {
        "format_version": format_version_string(),
        "kind": "dataset",
        "n_rows": grid.n_rows,
        "n_cols": grid.n_cols,
        "n_intervals": grid.n_intervals,
        "interval_minutes": grid.interval_minutes,
        "theta": ds.graphs.theta,
        "seq_len": ds.seq_len,
        "split_fractions": list(ds.split_fractions),
        "start_weekday": ds.calendar.start_weekday if ds.calendar else None,
        "n_trips": ds.demand.total(),
        "config_echo": config_echo or {},
    }
    parts = [np.ascontiguousarray(ds.demand.values, dtype="<i8").tobytes()]
    for e in ds.graphs.edges:
        parts.append(struct.pack("<I", e.shape[0]))
        parts.append(np.ascontiguousarray(e, dtype="<i8").tobytes())
    return pack_container(MAGIC, header, b"".join(parts))


def dataset_from_bytes(blob: bytes) -> WindowedDataset:
    header, payload = unpack_container(blob, MAGIC)
    grid = GridSpec(
        n_rows=header["n_rows"],
        n_cols=header["n_cols"],
        n_intervals=header["n_intervals"],
        interval_minutes=header["interval_minutes"],
    )
    n, n_t = grid.n_regions, grid.n_intervals
    need = n * n_t * 8
    if len(payload) < need:
        raise FormatError("dataset payload truncated in demand block")
    demand = DemandSeries(np.frombuffer(payload[:need], dtype="<i8").reshape(n, n_t).astype(np.int64))
    offset = need

    edges = []
    for _ in range(n_t):
        (count,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        block = np.frombuffer(payload, dtype="<i8", count=count * 3, offset=offset)
        edges.append(block.reshape(count, 3).astype(np.int64))
        offset += count * 3 * 8
    if offset != len(payload):
        raise FormatError("dataset payload has trailing bytes")

    graphs = _graphs_from_edges(n, n_t, header["theta"], edges)
    calendar = None
    if header["start_weekday"] is not None and grid.intervals_per_day:
        calendar = Calendar(grid.intervals_per_day, header["start_weekday"])
    return make_windows(
        demand,
        graphs,
        build_fixed_graph(grid),
        grid,
        header["seq_len"],
        tuple(header["split_fractions"]),
        calendar=calendar,
    )


def _graphs_from_edges(n: int, n_t: int, theta: int, edges: list[np.ndarray]) -> DynamicGraphSequence:
    self_arrays = [np.array([i], dtype=np.int64) for i in range(n)]
    neighbors = []
    for e in edges:
        per_node = list(self_arrays)
        if e.shape[0]:
            order = np.lexsort((e[:, 0], e[:, 1]))
            src, dst = e[order, 0], e[order, 1]
            starts = np.searchsorted(dst, np.arange(n + 1))
            for i in range(n):
                a, b = starts[i], starts[i + 1]
                if a == b:
                    continue
                sources = src[a:b]
                pos = np.searchsorted(sources, i)
                if pos < len(sources) and sources[pos] == i:
                    per_node[i] = sources.copy()
                else:
                    per_node[i] = np.insert(sources, pos, i)
        neighbors.append(per_node)
    return DynamicGraphSequence(n_nodes=n, theta=theta, edges=edges, neighbors_in=neighbors)


def save_dataset(path, ds: WindowedDataset, config_echo: dict | None = None) -> None:
    write_atomic(Path(path), dataset_to_bytes(ds, config_echo))


def load_dataset(path) -> WindowedDataset:
    return dataset_from_bytes(Path(path).read_bytes())

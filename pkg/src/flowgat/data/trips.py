"""Trip records, the region/interval grid, and the trips file format.

A trips file is UTF-8 text, one record per line, with the header
``origin,dest,interval`` and comma-separated non-negative integers.
The alternative raw mode has the header
``start_time,origin_lat,origin_lng,dest_lat,dest_lng`` with ISO-8601
timestamps; rows are binned onto the grid through a bounding box and the
configured interval length. Destination regions are mandatory in both
modes: commuting edges between region pairs cannot be built without them.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from ..errors import ParseError, ValidationError

TRIPS_HEADER = "origin,dest,interval"
RAW_HEADER = "start_time,origin_lat,origin_lng,dest_lat,dest_lng"


class TripRecord(NamedTuple):
    """One ride-hailing order: where it started, where it went, and when."""

    origin_region: int
    dest_region: int
    start_interval: int


@dataclass(frozen=True)
class GridSpec:
    """Rectangular region grid plus the time axis it shares with the demand data."""

    n_rows: int
    n_cols: int
    n_intervals: int
    interval_minutes: int = 60

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValidationError(f"grid must have positive dimensions, got {self.n_rows}x{self.n_cols}")
        if self.n_intervals < 1:
            raise ValidationError(f"n_intervals must be positive, got {self.n_intervals}")
        if self.interval_minutes < 1:
            raise ValidationError(f"interval_minutes must be positive, got {self.interval_minutes}")

    @property
    def n_regions(self) -> int:
        return self.n_rows * self.n_cols

    @property
    def intervals_per_day(self) -> int | None:
        """Intervals per calendar day, or None when the interval does not divide a day."""
        day = 24 * 60
        return day // self.interval_minutes if day % self.interval_minutes == 0 else None


@dataclass(frozen=True)
class RawBinning:
    """Bounding box and epoch for binning raw coordinate/timestamp trips."""

    lat_min: float
    lat_max: float
    lng_min: float
    lng_max: float
    start_time: datetime

    def __post_init__(self):
        if not (self.lat_max > self.lat_min and self.lng_max > self.lng_min):
            raise ValidationError("raw binning bounding box is empty")


def _check_bounds(origin, dest, interval, grid, line_no):
    n = grid.n_regions
    if not 0 <= origin < n:
        raise ValidationError(f"line {line_no}: origin region {origin} out of range [0, {n})")
    if not 0 <= dest < n:
        raise ValidationError(f"line {line_no}: dest region {dest} out of range [0, {n})")
    if not 0 <= interval < grid.n_intervals:
        raise ValidationError(
            f"line {line_no}: interval {interval} out of range [0, {grid.n_intervals})"
        )


def parse_trips(stream: Iterable[str], grid: GridSpec) -> list[TripRecord]:
    """Parse the integer trips format into records, validating every index.

    An empty stream yields an empty list. A header without the destination
    column is rejected outright: per-interval commuting edges are defined by
    origin/destination region pairs, so destinations are not optional.
    """
    records: list[TripRecord] = []
    header_seen = False
    for line_no, line in enumerate(stream, start=1):
        text = line.strip()
        if not text:
            continue
        if not header_seen:
            header = text.replace(" ", "").lower()
            if header == TRIPS_HEADER:
                header_seen = True
                continue
            if header == RAW_HEADER:
                raise ParseError("raw-format header found; use the raw-mode parser", line_no)
            if "dest" not in header.split(","):
                raise ParseError(
                    f"header {text!r} lacks the dest column; destination regions are required "
                    "to build commuting edges between region pairs",
                    line_no,
                )
            raise ParseError(f"unrecognized header {text!r}, expected {TRIPS_HEADER!r}", line_no)
        parts = text.split(",")
        if len(parts) != 3:
            raise ParseError(f"expected 3 comma-separated fields, got {len(parts)}", line_no)
        try:
            origin, dest, interval = (int(p) for p in parts)
        except ValueError:
            raise ParseError(f"non-integer field in row {text!r}", line_no) from None
        if min(origin, dest, interval) < 0:
            raise ParseError(f"negative field in row {text!r}", line_no)
        _check_bounds(origin, dest, interval, grid, line_no)
        records.append(TripRecord(origin, dest, interval))
    return records


def parse_trips_raw(stream: Iterable[str], grid: GridSpec, binning: RawBinning) -> list[TripRecord]:
    """Parse the raw coordinate format, binning each row onto the grid."""
    records: list[TripRecord] = []
    header_seen = False
    lat_span = binning.lat_max - binning.lat_min
    lng_span = binning.lng_max - binning.lng_min
    seconds = grid.interval_minutes * 60
    for line_no, line in enumerate(stream, start=1):
        text = line.strip()
        if not text:
            continue
        if not header_seen:
            if text.replace(" ", "").lower() != RAW_HEADER:
                raise ParseError(f"unrecognized header {text!r}, expected {RAW_HEADER!r}", line_no)
            header_seen = True
            continue
        parts = text.split(",")
        if len(parts) != 5:
            raise ParseError(f"expected 5 comma-separated fields, got {len(parts)}", line_no)
        try:
            ts = datetime.fromisoformat(parts[0])
            o_lat, o_lng, d_lat, d_lng = (float(p) for p in parts[1:])
        except ValueError:
            raise ParseError(f"malformed timestamp or coordinate in row {text!r}", line_no) from None
        interval = int((ts - binning.start_time).total_seconds() // seconds)
        origin = _bin_point(o_lat, o_lng, grid, binning, lat_span, lng_span, line_no)
        dest = _bin_point(d_lat, d_lng, grid, binning, lat_span, lng_span, line_no)
        _check_bounds(origin, dest, interval, grid, line_no)
        records.append(TripRecord(origin, dest, interval))
    return records


def _bin_point(lat, lng, grid, binning, lat_span, lng_span, line_no):
    if not (binning.lat_min <= lat <= binning.lat_max and binning.lng_min <= lng <= binning.lng_max):
        raise ValidationError(f"line {line_no}: point ({lat}, {lng}) outside the bounding box")
    row = min(int((lat - binning.lat_min) / lat_span * grid.n_rows), grid.n_rows - 1)
    col = min(int((lng - binning.lng_min) / lng_span * grid.n_cols), grid.n_cols - 1)
    return row * grid.n_cols + col


def write_trips(fh, trips: Sequence[TripRecord]) -> None:
    """Write records in the integer trips format to an open text file."""
    fh.write(TRIPS_HEADER + "\n")
    for origin, dest, interval in trips:
        fh.write(f"{origin},{dest},{interval}\n")


def trips_to_array(trips: Sequence[TripRecord]) -> np.ndarray:
    """Records as an (M, 3) int64 array of (origin, dest, interval) rows."""
    if len(trips) == 0:
        return np.empty((0, 3), dtype=np.int64)
    return np.asarray(trips, dtype=np.int64)

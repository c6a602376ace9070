"""Synthetic grid-city trip generator with commuting structure.

Each region is a business, residential, or park archetype. People move
between regions following hour-of-day departure schedules: residential ->
business flows peak in the morning, business -> residential in the
evening, park flows are low and midday-weighted. Flows are drawn from an
occupancy model: every region tracks how many people are currently in it,
and the hourly outflow to each destination is Poisson with rate

    occupancy(origin) * schedule(archetypes, hour) * share(origin, dest)
    * weekend_modifier * day_factor * noise

where ``share`` splits a flow across the destination class (residential
regions commute mostly to a few preferred business regions), day_factor
is one multiplicative lognormal draw per day, and noise is a lognormal
draw per (hour, region pair). Weekday patterns repeat daily; weekends
damp commuting and boost park visits. Everything is driven by one seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from ..errors import ConfigError, ValidationError
from .trips import GridSpec, TripRecord

BUSINESS, RESIDENTIAL, PARK = "business", "residential", "park"
ARCHETYPES = (BUSINESS, RESIDENTIAL, PARK)
_ARCH_CODE = {BUSINESS: "b", RESIDENTIAL: "r", PARK: "p"}
_CODE_ARCH = {v: k for k, v in _ARCH_CODE.items()}


@dataclass(frozen=True)
class SynthConfig:
    """Knobs of the generator; defaults give a 6x6 city with hourly intervals."""

    n_rows: int = 6
    n_cols: int = 6
    n_days: int = 90
    intervals_per_day: int = 24
    seed: int = 0
    start_weekday: int = 0
    archetype_map: tuple[str, ...] | None = None  # explicit per-region archetypes
    business_frac: float = 0.30
    park_frac: float = 0.20
    residents: float = 260.0   # initial occupancy of a residential region
    workers: float = 40.0      # initial occupancy of a business region
    visitors: float = 30.0     # initial occupancy of a park region
    day_sigma: float = 0.18    # sigma of the per-day lognormal factor
    noise_sigma: float = 0.15  # sigma of the per-(hour, pair) lognormal factor
    commute_links: int = 3     # preferred business regions per residential region
    link_strength: float = 6.0  # affinity multiplier on preferred links
    park_park_rate: float = 0.02  # flat hourly departure fraction between parks

    def validate(self) -> None:
        if self.n_days < 1:
            raise ConfigError(f"n_days must be >= 1, got {self.n_days}")
        if self.n_rows < 1 or self.n_cols < 1:
            raise ConfigError("grid dimensions must be positive")
        if not 0 <= self.business_frac + self.park_frac <= 1:
            raise ConfigError("archetype fractions must lie in [0, 1] and sum to <= 1")
        if self.intervals_per_day != 24:
            raise ConfigError("schedules are hourly; intervals_per_day must be 24")

    @property
    def n_regions(self) -> int:
        return self.n_rows * self.n_cols

    def grid(self) -> GridSpec:
        return GridSpec(
            n_rows=self.n_rows,
            n_cols=self.n_cols,
            n_intervals=self.n_days * self.intervals_per_day,
            interval_minutes=24 * 60 // self.intervals_per_day,
        )


def _bump(hours: np.ndarray, center: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((hours - center) / width) ** 2)


def _schedules(park_park_rate: float) -> dict[tuple[str, str], np.ndarray]:
    """Hourly departure fractions per (origin, destination) archetype pair."""
    h = np.arange(24, dtype=np.float64)
    return {
        (RESIDENTIAL, BUSINESS): 0.010 + 0.140 * _bump(h, 8.0, 1.3),
        (BUSINESS, RESIDENTIAL): 0.020 + 0.280 * _bump(h, 18.0, 1.5),
        (RESIDENTIAL, RESIDENTIAL): 0.012 + 0.010 * _bump(h, 13.0, 3.0),
        (BUSINESS, BUSINESS): 0.015 + 0.050 * _bump(h, 13.0, 2.0),
        (RESIDENTIAL, PARK): 0.003 + 0.020 * _bump(h, 14.0, 2.5),
        (PARK, RESIDENTIAL): 0.030 + 0.080 * _bump(h, 15.0, 3.0),
        (BUSINESS, PARK): 0.002 + 0.010 * _bump(h, 13.0, 2.0),
        (PARK, BUSINESS): 0.004 + 0.015 * _bump(h, 9.0, 2.0),
        (PARK, PARK): np.full(24, park_park_rate),
    }


# Weekend multipliers; pairs not listed keep their weekday schedule.
_WEEKEND = {
    (RESIDENTIAL, BUSINESS): 0.30,
    (BUSINESS, RESIDENTIAL): 0.45,
    (BUSINESS, BUSINESS): 0.40,
    (RESIDENTIAL, RESIDENTIAL): 1.20,
    (RESIDENTIAL, PARK): 2.00,
    (PARK, RESIDENTIAL): 1.60,
    (BUSINESS, PARK): 1.30,
    (PARK, BUSINESS): 0.50,
    (PARK, PARK): 1.00,
}


def assign_archetypes(cfg: SynthConfig, rng: np.random.Generator) -> list[str]:
    if cfg.archetype_map is not None:
        arche = [(_CODE_ARCH.get(a, a) if len(a) == 1 else a) for a in cfg.archetype_map]
        if len(arche) != cfg.n_regions:
            raise ValidationError(f"archetype map has {len(arche)} entries for {cfg.n_regions} regions")
        bad = [a for a in arche if a not in ARCHETYPES]
        if bad:
            raise ValidationError(f"unknown archetypes: {sorted(set(bad))}")
        return arche
    n = cfg.n_regions
    n_bus = int(round(cfg.business_frac * n))
    n_park = int(round(cfg.park_frac * n))
    n_bus = min(n_bus, n)
    n_park = min(n_park, n - n_bus)
    arche = [BUSINESS] * n_bus + [PARK] * n_park + [RESIDENTIAL] * (n - n_bus - n_park)
    order = rng.permutation(n)
    return [arche[order[i]] for i in range(n)]


def _affinity_shares(arche: list[str], cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """(N, N) matrix of destination shares; rows sum to 1 within each destination class."""
    n = len(arche)
    arch_idx = {a: np.flatnonzero([x == a for x in arche]) for a in ARCHETYPES}
    shares = np.zeros((n, n))
    links: dict[int, np.ndarray] = {}
    bus = arch_idx[BUSINESS]
    for o in range(n):
        if arche[o] == RESIDENTIAL and bus.size:
            k = min(cfg.commute_links, bus.size)
            links[o] = np.sort(rng.choice(bus, size=k, replace=False))
    for o in range(n):
        for a_d in ARCHETYPES:
            dests = arch_idx[a_d]
            if dests.size == 0:
                continue
            w = np.ones(dests.size)
            if arche[o] == RESIDENTIAL and a_d == BUSINESS:
                w[np.isin(dests, links[o])] = cfg.link_strength
            elif arche[o] == BUSINESS and a_d == RESIDENTIAL:
                # workers return along the same preferred links
                for pos, r in enumerate(dests):
                    if r in links and o in links[r]:
                        w[pos] = cfg.link_strength
            shares[o, dests] = w / w.sum()
    return shares


def synthesize_trip_arrays(cfg: SynthConfig) -> tuple[np.ndarray, dict]:
    """Generate (M, 3) int64 trip rows (origin, dest, interval) plus pattern metadata."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_regions
    arche = assign_archetypes(cfg, rng)
    shares = _affinity_shares(arche, cfg, rng)
    sched = _schedules(cfg.park_park_rate)

    arch_arr = np.array([ARCHETYPES.index(a) for a in arche])
    # base[w, h, o, d]: schedule x weekend modifier x destination share
    base = np.zeros((2, 24, n, n))
    for (a_o, a_d), hours in sched.items():
        rows = arch_arr == ARCHETYPES.index(a_o)
        cols = arch_arr == ARCHETYPES.index(a_d)
        pair_share = shares * (rows[:, None] & cols[None, :])
        for w, mult in ((0, 1.0), (1, _WEEKEND[(a_o, a_d)])):
            base[w] += hours[:, None, None] * mult * pair_share[None, :, :]

    occ0 = {BUSINESS: cfg.workers, RESIDENTIAL: cfg.residents, PARK: cfg.visitors}
    occ = np.array([occ0[a] for a in arche], dtype=np.float64)

    day_factors = np.exp(rng.normal(0.0, cfg.day_sigma, size=cfg.n_days))
    origins, dests, times = [], [], []
    for day in range(cfg.n_days):
        weekend = int((day + cfg.start_weekday) % 7 >= 5)
        for h in range(cfg.intervals_per_day):
            noise = np.exp(rng.normal(0.0, cfg.noise_sigma, size=(n, n)))
            rate = occ[:, None] * base[weekend, h] * day_factors[day] * noise
            counts = rng.poisson(rate)
            out_total = counts.sum(axis=1)
            over = out_total > occ
            if np.any(over):
                scale = occ[over] / out_total[over]
                counts[over] = np.floor(counts[over] * scale[:, None]).astype(counts.dtype)
                out_total = counts.sum(axis=1)
            o_idx, d_idx = np.nonzero(counts)
            if o_idx.size:
                reps = counts[o_idx, d_idx]
                origins.append(np.repeat(o_idx, reps))
                dests.append(np.repeat(d_idx, reps))
                times.append(np.full(int(reps.sum()), day * cfg.intervals_per_day + h, dtype=np.int64))
            occ = occ - out_total + counts.sum(axis=0)

    if origins:
        rows = np.column_stack(
            (np.concatenate(origins), np.concatenate(dests), np.concatenate(times))
        ).astype(np.int64)
    else:
        rows = np.empty((0, 3), dtype=np.int64)

    metadata = {
        "config": asdict(cfg) | {"archetype_map": "".join(_ARCH_CODE[a] for a in arche)},
        "archetypes": arche,
        "day_factors": day_factors.tolist(),
        "n_trips": int(rows.shape[0]),
        "start_weekday": cfg.start_weekday,
    }
    return rows, metadata


def generate_synthetic_city(cfg: SynthConfig) -> tuple[list[TripRecord], dict]:
    """Deterministic trip records for a seeded synthetic city, plus metadata."""
    rows, metadata = synthesize_trip_arrays(cfg)
    records = [TripRecord(int(o), int(d), int(t)) for o, d, t in rows]
    return records, metadata

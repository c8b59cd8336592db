"""Synthetic GPS trace generator with known home locations.

Agents live in a grid city of residential and commercial blocks, sleep at home
with a configurable probability, commute, and emit noisy pings. The output is
the exact trace CSV schema the ingest module reads, plus a ground-truth home
table, a land-use map, and a zone map, which together make every metric
checkable against a known answer.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from math import cos, pi, sin

import numpy as np

from homedetect.geo import GeoPoint, LocalFrame
from homedetect.ingest import NightWindow, Trace

DEFAULT_START_EPOCH_S = 1_599_955_200.0  # a UTC midnight

PERSONAS = ("resident", "night_shift", "work_from_home", "traveler")

DAY_START_H = 9.0
DAY_END_H = 17.0


@dataclass(frozen=True)
class AgentSpec:
    """One simulated device: its anchors, noise, density, and quirks.

    ``night_pings`` / ``day_pings`` are ("poisson", mean) or ("fixed", count).
    An excursion relocates that fraction of each night's pings to a fixed
    point ``excursion_distance_m`` from home; a burst emits ``burst_count``
    pings during one slow drive on night ``burst_night``.
    """

    device_id: str
    home: GeoPoint
    work: GeoPoint
    seed: int
    persona: str = "resident"
    p_home_night: float = 1.0
    noise_sigma_m: float = 10.0
    night_pings: tuple = ("poisson", 20.0)
    day_pings: tuple = ("poisson", 6.0)
    commute_pings: int = 4
    commute_speed_mps: float = 12.0
    excursion_distance_m: float = 0.0
    excursion_fraction: float = 0.0
    burst_night: int | None = None
    burst_count: int = 60
    burst_duration_s: float = 1200.0
    burst_offset_m: float = 2000.0
    burst_speed_mps: float = 0.25
    burst_start_frac: float = 0.25

    def __post_init__(self):
        if self.persona not in PERSONAS:
            raise ValueError(f"unknown persona {self.persona!r}")
        if not (0.0 <= self.p_home_night <= 1.0 and 0.0 <= self.excursion_fraction <= 1.0):
            raise ValueError("probabilities must lie in [0, 1]")
        if self.noise_sigma_m < 0.0:
            raise ValueError("noise sigma must be non-negative")


@dataclass
class AgentTrace:
    device_id: str
    rows: np.ndarray  # columns lat, lon, t, err; sorted by t
    nights_at_home: list[bool]

    def to_trace(self) -> Trace:
        return Trace(self.device_id, self.rows[:, 0], self.rows[:, 1], self.rows[:, 2], self.rows[:, 3])


def _count(dist: tuple, rng) -> int:
    kind = dist[0]
    if kind == "fixed":
        return int(dist[1])
    if kind == "poisson":
        return int(rng.poisson(dist[1]))
    raise ValueError(f"unknown ping-count distribution {kind!r}")


def _stratified_times(n: int, length: float, rng) -> np.ndarray:
    """n jittered times in [0, length) with gaps of at least 0.4 slots.

    The guaranteed spacing keeps segment speeds finite for city-scale jumps,
    so clean agents survive the kinematic filters.
    """
    if n <= 0:
        return np.empty(0)
    return (np.arange(n) + rng.uniform(0.2, 0.8, n)) * (length / n)


def _noisy(xy: np.ndarray, sigma: float, rng) -> np.ndarray:
    if sigma <= 0.0:
        return xy
    return xy + np.clip(rng.normal(0.0, sigma, xy.shape), -3.0 * sigma, 3.0 * sigma)


def generate_agent(
    spec: AgentSpec,
    n_nights: int,
    window: NightWindow,
    start_epoch_s: float = DEFAULT_START_EPOCH_S,
) -> AgentTrace:
    """Simulate one agent over ``n_nights`` nights (plus the matching days)."""
    rng = np.random.default_rng(spec.seed)
    frame = LocalFrame(spec.home, max_range_m=None)
    home = np.zeros(2)
    work = np.array(frame.project(spec.work))
    off_s = window.utc_offset_minutes * 60.0
    day0 = int((start_epoch_s + off_s) // 86400.0)
    length = window.duration_s
    theta = rng.uniform(0.0, 2.0 * pi)  # excursion and burst bearing
    heading = np.array([cos(theta), sin(theta)])
    excursion = home + spec.excursion_distance_m * heading

    chunks_t: list[np.ndarray] = []
    chunks_xy: list[np.ndarray] = []
    nights_at_home: list[bool] = []

    def emit(times_local: np.ndarray, xy: np.ndarray, day: int):
        # times are seconds after local midnight of `day`
        chunks_t.append(day * 86400.0 + times_local - off_s)
        chunks_xy.append(xy)

    for k in range(n_nights):
        day = day0 + k
        if spec.persona == "resident":
            at_home = bool(rng.random() < spec.p_home_night)
            anchor = home if at_home else work
        elif spec.persona == "night_shift":
            at_work = bool(rng.random() < spec.p_home_night)
            at_home = not at_work
            anchor = work if at_work else home
        elif spec.persona == "work_from_home":
            at_home, anchor = True, home
        else:  # traveler: a fresh anchor every night
            at_home = False
            r = rng.uniform(2000.0, 8000.0)
            a = rng.uniform(0.0, 2.0 * pi)
            anchor = home + r * np.array([cos(a), sin(a)])
        nights_at_home.append(at_home)

        n_night = _count(spec.night_pings, rng)
        if spec.burst_night == k and spec.burst_count > 0:
            # keep a guard band around the burst so speeds stay legal
            bs = spec.burst_start_frac * length
            forbidden = (max(0.0, bs - 900.0), min(length, bs + spec.burst_duration_s + 900.0))
            gap = forbidden[1] - forbidden[0]
            times = _stratified_times(n_night, max(length - gap, 1.0), rng)
            times = np.where(times < forbidden[0], times, times + gap)
        else:
            times = _stratified_times(n_night, length, rng)
        pos = np.tile(anchor, (n_night, 1))
        if spec.excursion_fraction > 0.0 and n_night:
            away = rng.random(n_night) < spec.excursion_fraction
            pos[away] = excursion
        emit(window.start_hour * 3600.0 + times, _noisy(pos, spec.noise_sigma_m, rng), day)

        if spec.burst_night == k and spec.burst_count > 0:
            bt = np.linspace(0.0, spec.burst_duration_s, spec.burst_count)
            start = home + spec.burst_offset_m * heading
            bxy = start + np.outer(bt * spec.burst_speed_mps, heading)
            emit(
                window.start_hour * 3600.0 + spec.burst_start_frac * length + bt,
                _noisy(bxy, spec.noise_sigma_m, rng),
                day,
            )

        if spec.persona == "resident":
            day_anchor = work
        elif spec.persona == "traveler":
            day_anchor = anchor
        else:
            day_anchor = home
        n_day = _count(spec.day_pings, rng)
        if n_day:
            times = _stratified_times(n_day, (DAY_END_H - DAY_START_H) * 3600.0, rng)
            pos = np.tile(day_anchor, (n_day, 1))
            emit(DAY_START_H * 3600.0 + times, _noisy(pos, spec.noise_sigma_m, rng), day)

        if spec.commute_pings > 0 and spec.persona in ("resident", "night_shift"):
            legs = [(home, work, 7.5), (work, home, 17.5)]
            if spec.persona == "night_shift":
                legs = [(work, home, 5.5), (home, work, 19.0)]
            for a, b, start_h in legs:
                dist = float(np.hypot(*(b - a)))
                duration = dist / spec.commute_speed_mps
                s = np.linspace(0.0, 1.0, spec.commute_pings)
                emit(
                    start_h * 3600.0 + s * duration,
                    _noisy(a + np.outer(s, b - a), spec.noise_sigma_m, rng),
                    day,
                )

    t = np.concatenate(chunks_t) if chunks_t else np.empty(0)
    xy = np.vstack(chunks_xy) if chunks_xy else np.empty((0, 2))
    order = np.argsort(t, kind="stable")
    lat, lon = frame.unproject_xy(xy[order, 0], xy[order, 1])
    rows = np.column_stack([lat, lon, t[order], np.full(len(t), float(spec.noise_sigma_m))])
    return AgentTrace(spec.device_id, rows, nights_at_home)


@dataclass
class GenerateSummary:
    n_agents: int
    n_pings: int
    trace_path: str
    truth_path: str


def generate(
    specs: list[AgentSpec],
    n_nights: int,
    window: NightWindow,
    trace_path,
    truth_path,
    start_epoch_s: float = DEFAULT_START_EPOCH_S,
) -> GenerateSummary:
    """Write the trace CSV and ground-truth home CSV for all agents.

    Deterministic: every agent carries its own seed, and files are assembled
    in device order, so a fixed spec list reproduces byte-identical files.
    """
    if not specs:
        raise ValueError("no agent specs given")
    n_pings = 0
    with open(trace_path, "w", newline="") as tf, open(truth_path, "w", newline="") as gf:
        tw = csv.writer(tf)
        gw = csv.writer(gf)
        tw.writerow(["device_id", "longitude", "latitude", "timestamp", "error_radius"])
        gw.writerow(["device_id", "lat", "lon"])
        for spec in sorted(specs, key=lambda s: s.device_id):
            agent = generate_agent(spec, n_nights, window, start_epoch_s)
            for lat, lon, t, err in agent.rows:
                tw.writerow([spec.device_id, repr(float(lon)), repr(float(lat)), repr(float(t)), repr(float(err))])
            gw.writerow([spec.device_id, repr(spec.home.lat), repr(spec.home.lon)])
            n_pings += len(agent.rows)
    return GenerateSummary(len(specs), n_pings, str(trace_path), str(truth_path))


@dataclass
class SyntheticCity:
    """Grid city: square blocks separated by streets, each block residential
    or commercial, with rectangular income zones overlaid."""

    origin: GeoPoint
    n_rows: int
    n_cols: int
    block_m: float
    street_m: float
    categories: list[list[str]]
    frame: LocalFrame = field(init=False)

    def __post_init__(self):
        self.frame = LocalFrame(self.origin, max_range_m=None)

    @property
    def extent_m(self) -> tuple[float, float]:
        pitch = self.block_m + self.street_m
        return (self.n_cols * pitch + self.street_m, self.n_rows * pitch + self.street_m)

    def block_corner(self, row: int, col: int) -> tuple[float, float]:
        pitch = self.block_m + self.street_m
        return (self.street_m + col * pitch, self.street_m + row * pitch)

    def blocks(self, category: str | None = None) -> list[tuple[int, int]]:
        return [
            (r, c)
            for r in range(self.n_rows)
            for c in range(self.n_cols)
            if category is None or self.categories[r][c] == category
        ]

    def _ring_ll(self, x0, y0, x1, y1) -> list[list[float]]:
        xs = np.array([x0, x1, x1, x0, x0])
        ys = np.array([y0, y0, y1, y1, y0])
        lat, lon = self.frame.unproject_xy(xs, ys)
        return [[float(a), float(b)] for a, b in zip(lon, lat)]

    def point_in_block(self, row: int, col: int, rng, margin_m: float = 20.0) -> GeoPoint:
        x0, y0 = self.block_corner(row, col)
        x = rng.uniform(x0 + margin_m, x0 + self.block_m - margin_m)
        y = rng.uniform(y0 + margin_m, y0 + self.block_m - margin_m)
        return self.frame.unproject(x, y)

    def landuse_geojson(self, category_key: str = "landuse") -> dict:
        features = []
        for r, c in self.blocks():
            x0, y0 = self.block_corner(r, c)
            features.append(
                {
                    "type": "Feature",
                    "properties": {category_key: self.categories[r][c]},
                    "geometry": {
                        "type": "Polygon",
                        "coordinates": [self._ring_ll(x0, y0, x0 + self.block_m, y0 + self.block_m)],
                    },
                }
            )
        return {"type": "FeatureCollection", "features": features}

    def zones_geojson(self, splits: int = 2, incomes=(1000.0, 2000.0, 2800.0, 4000.0)) -> dict:
        """Partition the full extent into splits x splits income zones."""
        w, h = self.extent_m
        features = []
        for i in range(splits):
            for j in range(splits):
                features.append(
                    {
                        "type": "Feature",
                        "properties": {
                            "zone_id": f"z{i}{j}",
                            "median_income_monthly": float(incomes[(i * splits + j) % len(incomes)]),
                        },
                        "geometry": {
                            "type": "Polygon",
                            "coordinates": [
                                self._ring_ll(
                                    j * w / splits, i * h / splits,
                                    (j + 1) * w / splits, (i + 1) * h / splits,
                                )
                            ],
                        },
                    }
                )
        return {"type": "FeatureCollection", "features": features}


def make_city(
    origin: GeoPoint = GeoPoint(40.0, -86.2),
    n_rows: int = 10,
    n_cols: int = 10,
    block_m: float = 180.0,
    street_m: float = 40.0,
    commercial_every: int = 3,
) -> SyntheticCity:
    """Deterministic city layout; every third diagonal of blocks is commercial."""
    cats = [
        ["commercial" if (r + c) % commercial_every == 0 else "residential" for c in range(n_cols)]
        for r in range(n_rows)
    ]
    return SyntheticCity(origin, n_rows, n_cols, block_m, street_m, cats)


def write_city(city: SyntheticCity, landuse_path, zones_path) -> None:
    with open(landuse_path, "w") as fh:
        json.dump(city.landuse_geojson(), fh, sort_keys=True)
    with open(zones_path, "w") as fh:
        json.dump(city.zones_geojson(), fh, sort_keys=True)


def sample_agents(
    city: SyntheticCity,
    n: int,
    seed: int,
    device_prefix: str = "agent",
    **overrides,
) -> list[AgentSpec]:
    """n agents with homes in residential blocks and works in commercial ones.

    Extra keyword arguments override AgentSpec fields (noise, densities,
    persona, excursions, ...). Each agent gets an independent substream seed.
    """
    if n <= 0:
        raise ValueError("need at least one agent")
    rng = np.random.default_rng(seed)
    agent_seeds = np.random.SeedSequence(seed).generate_state(n, np.uint64)
    residential = city.blocks("residential")
    commercial = city.blocks("commercial")
    if not residential or not commercial:
        raise ValueError("city needs both residential and commercial blocks")
    specs = []
    for i in range(n):
        hb = residential[int(rng.integers(len(residential)))]
        wb = commercial[int(rng.integers(len(commercial)))]
        specs.append(
            AgentSpec(
                device_id=f"{device_prefix}{i:05d}",
                home=city.point_in_block(*hb, rng),
                work=city.point_in_block(*wb, rng),
                seed=int(agent_seeds[i]),
                **overrides,
            )
        )
    return specs

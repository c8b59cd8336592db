"""The five home detection algorithms and the multi-user harness.

a1  centroid (or medoid) of all night pings
a2  mean of the pings in the busiest 20 m grid cell
a3  mode of the largest mean-shift cluster over all night pings
a4  like a3 but over 30-minute bin centroids, weighting time slots equally
a5  stay-point detection, stay-region clustering, nighttime dwell ranking
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from homedetect.clustering import (
    Cluster,
    build_stay_regions,
    detect_stay_points,
    mean_shift,
)
from homedetect.geo import GeoPoint, LocalFrame, centroid_ll, medoid_ll
from homedetect.ingest import NightWindow, Trace, night_pings

log = logging.getLogger(__name__)

ALGORITHMS = ("a1", "a2", "a3", "a4", "a5")


@dataclass(frozen=True)
class HdaConfig:
    bandwidth_m: float = 250.0
    grid_cell_m: float = 20.0
    bin_period_s: float = 1800.0
    stay_dist_m: float = 200.0
    stay_time_s: float = 1800.0
    region_cut_m: float = 250.0
    region_linkage: str = "average"
    a5_min_night_dwell_s: float = 3.0 * 3600.0
    a5_min_total_dwell_s: float = 24.0 * 3600.0
    a5_rank_by: str = "night_dwell"  # or "visit_count"
    a1_use_medoid: bool = False
    night_window: NightWindow = field(default_factory=NightWindow)


@dataclass
class HomeLocation:
    """A detected home; support counts the pings, bins, or stay seconds behind it."""

    device_id: str
    point: GeoPoint
    algorithm: str
    support: int


def _user_frame(night: Trace) -> LocalFrame:
    return LocalFrame(GeoPoint(float(night.lat[0]), float(night.lon[0])), max_range_m=None)


def _largest_cluster(clusters: list[Cluster]) -> Cluster:
    # size, then in-bandwidth kernel support of the mode, then earliest member
    return max(clusters, key=lambda c: (c.size, c.support, -int(c.member_indices[0])))


def a1_centroid(night: Trace, use_medoid: bool = False) -> HomeLocation | None:
    """Centroid (or medoid) of all nighttime pings over the study period."""
    if len(night) == 0:
        return None
    if use_medoid:
        point = medoid_ll(night.lat, night.lon)
    else:
        point = centroid_ll(night.lat, night.lon)
    return HomeLocation(night.device_id, point, "a1", len(night))


def a2_grid_frequency(
    night: Trace,
    night_ids: np.ndarray,
    anchor: GeoPoint | None = None,
    cell_m: float = 20.0,
) -> HomeLocation | None:
    """Mean location of the pings in the cell with the most night pings.

    The square grid is anchored at ``anchor`` (normally the dataset bounding
    box southwest corner so every user shares the same cells; falls back to
    the user's own southwest corner). Count ties go to the cell spanning the
    most distinct nights, then the lowest (row, col).
    """
    if len(night) == 0:
        return None
    if anchor is None:
        anchor = GeoPoint(float(night.lat.min()), float(night.lon.min()))
    frame = LocalFrame(anchor, max_range_m=None)
    x, y = frame.project_ll(night.lat, night.lon)
    cells = np.column_stack(
        [np.floor_divide(y, cell_m), np.floor_divide(x, cell_m)]
    ).astype(np.int64)
    uniq, inv = np.unique(cells, axis=0, return_inverse=True)
    counts = np.bincount(inv, minlength=len(uniq))
    cand = np.flatnonzero(counts == counts.max())
    if len(cand) > 1:
        pairs = np.unique(np.column_stack([inv, night_ids]), axis=0)
        nights_per_cell = np.bincount(pairs[:, 0], minlength=len(uniq))
        cand = cand[nights_per_cell[cand] == nights_per_cell[cand].max()]
    best = int(cand[0])  # uniq rows are sorted, so this is the lowest (row, col)
    sel = inv == best
    home = frame.unproject(float(x[sel].mean()), float(y[sel].mean()))
    return HomeLocation(night.device_id, home, "a2", int(counts[best]))


def a3_alltime_meanshift(night: Trace, bandwidth_m: float = 250.0) -> HomeLocation | None:
    """Mode of the largest mean-shift cluster over all night pings at once."""
    if len(night) == 0:
        return None
    frame = _user_frame(night)
    x, y = frame.project_ll(night.lat, night.lon)
    best = _largest_cluster(mean_shift(np.column_stack([x, y]), bandwidth_m))
    home = frame.unproject(float(best.mode[0]), float(best.mode[1]))
    return HomeLocation(night.device_id, home, "a3", best.size)


def _bin_centroids(
    night: Trace,
    night_ids: np.ndarray,
    window: NightWindow,
    bin_period_s: float,
    frame: LocalFrame,
) -> np.ndarray:
    """Per-bin centroid of each night's pings, bins aligned to the window start."""
    loc = night.t + window.utc_offset_minutes * 60.0
    offset = loc - (night_ids.astype(float) * 86400.0 + window.start_hour * 3600.0)
    bins = np.floor_divide(offset, bin_period_s).astype(np.int64)
    x, y = frame.project_ll(night.lat, night.lon)
    keys = np.column_stack([night_ids, bins])
    _, inv = np.unique(keys, axis=0, return_inverse=True)
    n_bins = int(inv.max()) + 1
    cx = np.bincount(inv, weights=x, minlength=n_bins) / np.bincount(inv, minlength=n_bins)
    cy = np.bincount(inv, weights=y, minlength=n_bins) / np.bincount(inv, minlength=n_bins)
    return np.column_stack([cx, cy])


def a4_binned_meanshift(
    night: Trace,
    night_ids: np.ndarray,
    window: NightWindow,
    bin_period_s: float = 1800.0,
    bandwidth_m: float = 250.0,
) -> HomeLocation | None:
    """Mean shift over fixed-interval bin centroids; cluster size counts bins.

    Each night is split into consecutive bins aligned to the night-window
    start; empty bins are skipped. Binning gives every time slot equal weight,
    so a burst of pings during one short movement cannot outvote nights of
    sparse but steady home presence.
    """
    if len(night) == 0:
        return None
    if bin_period_s <= 0.0:
        raise ValueError("bin_period_s must be positive")
    frame = _user_frame(night)
    centroids = _bin_centroids(night, night_ids, window, bin_period_s, frame)
    best = _largest_cluster(mean_shift(centroids, bandwidth_m))
    home = frame.unproject(float(best.mode[0]), float(best.mode[1]))
    return HomeLocation(night.device_id, home, "a4", best.size)


def a5_staypoint(t: Trace, cfg: HdaConfig) -> HomeLocation | None:
    """Best nighttime stay region of the full filtered trace.

    Stay points come from the whole trace (dwell detection needs temporal
    continuity); regions qualify with at least the configured nighttime dwell
    or total dwell, and the winner has the most nighttime dwell (or visits,
    per ``a5_rank_by``). Support is the winner's total stay seconds.
    """
    if len(t) == 0:
        return None
    sps = detect_stay_points(t, cfg.stay_dist_m, cfg.stay_time_s)
    if not sps:
        return None
    regions = build_stay_regions(sps, cfg.night_window, cfg.region_cut_m, cfg.region_linkage)
    candidates = [
        r
        for r in regions
        if r.night_duration >= cfg.a5_min_night_dwell_s
        or r.total_duration >= cfg.a5_min_total_dwell_s
    ]
    if not candidates:
        return None
    if cfg.a5_rank_by == "visit_count":
        best = max(candidates, key=lambda r: (r.visit_count, r.night_duration, r.total_duration))
    else:
        best = max(candidates, key=lambda r: (r.night_duration, r.total_duration))
    return HomeLocation(t.device_id, best.centroid, "a5", int(round(best.total_duration)))


def detect_homes(
    t: Trace,
    cfg: HdaConfig,
    algorithms=ALGORITHMS,
    grid_anchor: GeoPoint | None = None,
) -> dict[str, HomeLocation | None]:
    """Run the requested algorithms on one filtered trace."""
    night, ids = night_pings(t, cfg.night_window)
    out: dict[str, HomeLocation | None] = {}
    for alg in algorithms:
        if alg == "a1":
            out[alg] = a1_centroid(night, cfg.a1_use_medoid)
        elif alg == "a2":
            out[alg] = a2_grid_frequency(night, ids, grid_anchor, cfg.grid_cell_m)
        elif alg == "a3":
            out[alg] = a3_alltime_meanshift(night, cfg.bandwidth_m)
        elif alg == "a4":
            out[alg] = a4_binned_meanshift(
                night, ids, cfg.night_window, cfg.bin_period_s, cfg.bandwidth_m
            )
        elif alg == "a5":
            out[alg] = a5_staypoint(t, cfg)
        else:
            raise ValueError(f"unknown algorithm {alg!r}")
    return out


@dataclass
class RunResult:
    tables: dict[str, dict[str, HomeLocation]]
    common_users: list[str]
    no_home_counts: dict[str, int]
    n_users: int


def dataset_anchor(traces: dict[str, Trace]) -> GeoPoint | None:
    """Southwest corner of the bounding box over all pings."""
    lat = min((float(t.lat.min()) for t in traces.values() if len(t)), default=None)
    lon = min((float(t.lon.min()) for t in traces.values() if len(t)), default=None)
    if lat is None or lon is None:
        return None
    return GeoPoint(lat, lon)


def _detect_one(args) -> tuple[str, dict[str, HomeLocation | None]]:
    t, cfg, algorithms, anchor = args
    return t.device_id, detect_homes(t, cfg, algorithms, anchor)


def run_all(
    traces: dict[str, Trace],
    cfg: HdaConfig,
    algorithms=ALGORITHMS,
    workers: int = 1,
) -> RunResult:
    """Run the chosen algorithms over all users and intersect their user sets.

    Users whose trace yields no home for an algorithm are excluded from that
    table and counted, never defaulted. Results are independent of the worker
    count: per-user work is pure and merged in device order.
    """
    algorithms = tuple(algorithms)
    for alg in algorithms:
        if alg not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {alg!r}")
    anchor = dataset_anchor(traces)
    devices = sorted(traces)
    tables: dict[str, dict[str, HomeLocation]] = {alg: {} for alg in algorithms}
    no_home = {alg: 0 for alg in algorithms}
    jobs = ((traces[d], cfg, algorithms, anchor) for d in devices)
    if workers > 1 and len(devices) > 1:
        chunk = max(1, len(devices) // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_detect_one, jobs, chunksize=chunk))
    else:
        results = [_detect_one(j) for j in jobs]
    for device, homes in results:
        for alg in algorithms:
            home = homes[alg]
            if home is None:
                no_home[alg] += 1
            else:
                tables[alg][device] = home
    common = sorted(set.intersection(*(set(tables[alg]) for alg in algorithms))) if algorithms else []
    if not common and devices:
        log.warning("no user produced a home under every algorithm; metrics fall back to per-algorithm user sets")
    return RunResult(tables, common, no_home, len(devices))

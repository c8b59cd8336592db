"""Clustering engines: flat-kernel mean shift, distance-cut agglomerative
clustering, and stay-point / stay-region detection for GPS traces."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from homedetect.geo import GeoPoint, LocalFrame, centroid_ll, haversine_ll
from homedetect.ingest import NightWindow, Trace

LINKAGES = ("single", "complete", "average")


def _group_rows_by_key(keys: np.ndarray) -> list[np.ndarray]:
    """Index groups sharing an identical key row, each group sorted ascending."""
    order = np.lexsort((keys[:, 1], keys[:, 0]))
    sorted_keys = keys[order]
    breaks = np.flatnonzero(np.any(np.diff(sorted_keys, axis=0) != 0, axis=1)) + 1
    return np.split(order, breaks)


class GridIndex:
    """Uniform grid hash over planar points with cell size equal to the query
    radius, so a radius query only touches the 3x3 cell neighborhood. Queries
    return exact neighbor sets, not approximations."""

    def __init__(self, points: np.ndarray, cell_size: float):
        self.points = points
        self.cell_size = float(cell_size)
        keys = np.floor_divide(points, self.cell_size).astype(np.int64)
        self._cells: dict[tuple[int, int], np.ndarray] = {}
        for idx in _group_rows_by_key(keys):
            self._cells[(int(keys[idx[0], 0]), int(keys[idx[0], 1]))] = idx
        self._hood_cache: dict[tuple[int, int], np.ndarray] = {}

    def cell_of(self, p: np.ndarray) -> tuple[int, int]:
        return (int(np.floor(p[0] / self.cell_size)), int(np.floor(p[1] / self.cell_size)))

    def neighborhood(self, cell: tuple[int, int]) -> np.ndarray:
        """Candidate point indices from the 3x3 cells around ``cell``."""
        cached = self._hood_cache.get(cell)
        if cached is not None:
            return cached
        cx, cy = cell
        parts = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                got = self._cells.get((cx + dx, cy + dy))
                if got is not None:
                    parts.append(got)
        out = np.concatenate(parts) if parts else np.empty(0, dtype=np.intp)
        self._hood_cache[cell] = out
        return out

    def query_radius(self, p: np.ndarray, radius: float) -> np.ndarray:
        """Indices of points within ``radius`` (inclusive) of ``p``; radius <= cell size."""
        cand = self.neighborhood(self.cell_of(p))
        if cand.size == 0:
            return cand
        d2 = np.sum((self.points[cand] - p) ** 2, axis=1)
        return cand[d2 <= radius * radius]


@dataclass
class Cluster:
    """A mean-shift cluster: the converged mode, its members, and the flat-kernel
    support (point count within one bandwidth of the mode)."""

    member_indices: np.ndarray
    mode: np.ndarray
    size: int
    support: int


def mean_shift(
    points: np.ndarray,
    bandwidth: float = 250.0,
    tol: float = 0.1,
    max_iter: int = 300,
) -> list[Cluster]:
    """Flat-kernel mean shift over planar points (meters).

    Every point seeds a hill climb that repeatedly moves to the mean of the
    points within ``bandwidth`` until the candidate shift drops below ``tol``
    (the reported mode is the pre-shift position, so the mean of its
    in-bandwidth neighbors moves it less than ``tol``) or ``max_iter`` passes.
    Converged modes closer than ``bandwidth`` merge, higher kernel support
    winning (seed-index tie-break); every point is labeled to its nearest
    surviving mode. Clusters come back sorted by size descending, ties broken
    by earliest member index.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
        raise ValueError("mean_shift needs a nonempty (n, 2) point array")
    if bandwidth <= 0.0:
        raise ValueError("bandwidth must be positive")
    n = pts.shape[0]
    grid = GridIndex(pts, bandwidth)
    b2 = bandwidth * bandwidth

    seeds = pts.copy()
    active = np.arange(n)
    for _ in range(max_iter):
        if active.size == 0:
            break
        cells = np.floor_divide(seeds[active], bandwidth).astype(np.int64)
        still = []
        for group in _group_rows_by_key(cells):
            idx = active[group]
            cand = grid.neighborhood((int(cells[group[0], 0]), int(cells[group[0], 1])))
            cpts = pts[cand]
            d2 = (
                np.sum(seeds[idx] ** 2, axis=1)[:, None]
                - 2.0 * seeds[idx] @ cpts.T
                + np.sum(cpts**2, axis=1)[None, :]
            )
            mask = d2 <= b2
            counts = mask.sum(axis=1)
            means = (mask @ cpts) / counts[:, None]
            shift2 = np.sum((means - seeds[idx]) ** 2, axis=1)
            moved = shift2 >= tol * tol
            seeds[idx[moved]] = means[moved]  # converged seeds keep their pre-shift position
            still.append(idx[moved])
        active = np.concatenate(still) if still else np.empty(0, dtype=np.intp)

    support = np.empty(n, dtype=np.intp)
    for i in range(n):
        support[i] = grid.query_radius(seeds[i], bandwidth).size

    # merge converged modes closer than one bandwidth; higher support wins
    order = np.lexsort((np.arange(n), -support))
    kept: list[int] = []
    for i in order:
        p = seeds[i]
        absorbed = False
        for k in kept:
            if np.sum((seeds[k] - p) ** 2) < b2:
                absorbed = True
                break
        if not absorbed:
            kept.append(int(i))
    modes = seeds[kept]

    d2 = (
        np.sum(pts**2, axis=1)[:, None]
        - 2.0 * pts @ modes.T
        + np.sum(modes**2, axis=1)[None, :]
    )
    labels = np.argmin(d2, axis=1)

    clusters = []
    for k in range(len(kept)):
        members = np.flatnonzero(labels == k)
        if members.size == 0:
            continue
        clusters.append(
            Cluster(
                member_indices=members,
                mode=modes[k].copy(),
                size=int(members.size),
                support=int(support[kept[k]]),
            )
        )
    clusters.sort(key=lambda c: (-c.size, int(c.member_indices[0])))
    return clusters


def _pairwise(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def threshold_agglomerate(
    points: np.ndarray,
    max_distance: float,
    linkage: str = "average",
) -> list[list[int]]:
    """Agglomerative clustering of planar points cut at ``max_distance``.

    Merges the pair of clusters with the lowest linkage distance while that
    distance stays below ``max_distance``; ties break on the lowest
    (min-member, min-member) slot pair. Returns the partition as sorted index
    lists ordered by first member.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}")
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] == 0:
        raise ValueError("threshold_agglomerate needs a nonempty (n, 2) point array")
    if max_distance < 0.0:
        raise ValueError("max_distance must be non-negative")
    n = pts.shape[0]
    if n == 1:
        return [[0]]

    d = _pairwise(pts)
    np.fill_diagonal(d, np.inf)
    size = np.ones(n)
    members: list[list[int] | None] = [[i] for i in range(n)]
    for _ in range(n - 1):
        flat = int(np.argmin(d))  # row-major argmin = lowest (i, j) tie-break
        i, j = divmod(flat, n)
        if d[i, j] >= max_distance:
            break
        if j < i:
            i, j = j, i
        row_i, row_j = d[i], d[j]
        if linkage == "single":
            merged = np.minimum(row_i, row_j)
        elif linkage == "complete":
            merged = np.maximum(row_i, row_j)
        else:
            merged = (size[i] * row_i + size[j] * row_j) / (size[i] + size[j])
        merged[i] = np.inf
        d[i, :] = merged
        d[:, i] = merged
        d[j, :] = np.inf
        d[:, j] = np.inf
        size[i] += size[j]
        members[i].extend(members[j])  # type: ignore[union-attr]
        members[j] = None
    out = [sorted(m) for m in members if m is not None]
    out.sort(key=lambda m: m[0])
    return out


@dataclass
class StayPoint:
    """Low-movement episode: centroid of the dwell pings plus its time span."""

    centroid: GeoPoint
    arrival: float
    departure: float

    @property
    def duration(self) -> float:
        return self.departure - self.arrival


@dataclass
class StayRegion:
    """Cluster of stay points with aggregated dwell durations."""

    stay_points: list[StayPoint]
    centroid: GeoPoint  # duration-weighted
    total_duration: float
    night_duration: float
    visit_count: int


def detect_stay_points(
    t: Trace,
    dist_threshold_m: float = 200.0,
    time_threshold_s: float = 1800.0,
) -> list[StayPoint]:
    """Scan a sorted trace for dwell episodes.

    From anchor ping i, the span grows while every ping stays within
    ``dist_threshold_m`` of the anchor. If the span covers more than
    ``time_threshold_s`` a stay point is emitted with the centroid of pings
    i..j and arrival/departure (t_i, t_j), and the scan resumes at j+1;
    otherwise the anchor advances by one. Output intervals never overlap.
    """
    n = len(t)
    out: list[StayPoint] = []
    lat, lon, ts = t.lat, t.lon, t.t
    chunk = 64
    i = 0
    while i < n:
        j = i
        while j + 1 < n:
            hi = min(n, j + 1 + chunk)
            d = haversine_ll(lat[i], lon[i], lat[j + 1 : hi], lon[j + 1 : hi])
            outside = d > dist_threshold_m
            if outside.any():
                j += int(np.argmax(outside))
                break
            j = hi - 1
        if ts[j] - ts[i] > time_threshold_s:
            sel = slice(i, j + 1)
            out.append(StayPoint(centroid_ll(lat[sel], lon[sel]), float(ts[i]), float(ts[j])))
            i = j + 1
        else:
            i += 1
    return out


def build_stay_regions(
    stay_points: list[StayPoint],
    window: NightWindow,
    cut_m: float = 250.0,
    linkage: str = "average",
) -> list[StayRegion]:
    """Agglomerate stay points into regions and aggregate their dwell times.

    night_duration sums the overlap of each member's interval with the night
    window; the region centroid weighs member centroids by dwell duration.
    """
    if not stay_points:
        return []
    lats = np.array([sp.centroid.lat for sp in stay_points])
    lons = np.array([sp.centroid.lon for sp in stay_points])
    frame = LocalFrame(stay_points[0].centroid, max_range_m=None)
    x, y = frame.project_ll(lats, lons)
    partition = threshold_agglomerate(np.column_stack([x, y]), cut_m, linkage)
    regions = []
    for group in partition:
        sps = [stay_points[i] for i in group]
        durations = np.array([sp.duration for sp in sps])
        regions.append(
            StayRegion(
                stay_points=sps,
                centroid=centroid_ll(lats[group], lons[group], weights=durations),
                total_duration=float(durations.sum()),
                night_duration=float(
                    sum(window.overlap_seconds(sp.arrival, sp.departure) for sp in sps)
                ),
                visit_count=len(sps),
            )
        )
    return regions

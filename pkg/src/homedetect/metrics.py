"""Ground-truth-free quality metrics for detected home locations.

m1: buffer-weighted fraction of homes falling in residential land use
m2: normalized CDF area of each user's median nightly distance to their home
m3: mean fraction of stay-region dwell time spent in the region nearest home
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely import STRtree
from shapely.geometry import shape

from homedetect.clustering import StayRegion
from homedetect.geo import GeoPoint, LocalFrame, haversine_ll
from homedetect.ingest import Trace

DEFAULT_DELTA_MAX_M = 5000.0


class MetricError(ValueError):
    """A metric cannot be computed from the given inputs."""


def as_point(home) -> GeoPoint:
    """Accept either a GeoPoint or anything carrying one in ``.point``."""
    return home.point if hasattr(home, "point") else home


class BufferWeights:
    """Linearly decaying tolerance-buffer weights w(r) = (r_max - r) / sum.

    Held as exact rationals so the weights sum to 1 exactly; w(r_max) is zero.
    """

    def __init__(self, r_max: int = 50, step: int = 5):
        if r_max <= 0 or step <= 0 or r_max % step != 0:
            raise ValueError("r_max must be a positive multiple of step")
        self.r_max = r_max
        self.step = step
        self.levels = tuple(range(0, r_max + step, step))
        total = sum(r_max - r for r in self.levels)
        self.weights = tuple(Fraction(r_max - r, total) for r in self.levels)
        assert sum(self.weights) == 1

    def as_floats(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights])

    def level_of(self, distance_m: float) -> int | None:
        """Smallest buffer level covering a point ``distance_m`` from residential."""
        if distance_m > self.r_max:
            return None
        return int(-(-max(distance_m, 0.0) // self.step) * self.step)


def cdf_auc(values, upper: float) -> float:
    """Normalized area under the empirical CDF of ``values`` over [0, upper].

    Equals 1 - mean(min(v, upper)) / upper exactly (the CDF is a step
    function), so values at or above ``upper`` contribute zero.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("cdf_auc of empty value list")
    if upper <= 0.0:
        raise ValueError("upper bound must be positive")
    return float(1.0 - np.minimum(arr, upper).mean() / upper)


def _load_feature_collection(path) -> list[tuple[dict, object]]:
    """Read a GeoJSON FeatureCollection into (properties, shapely geometry) pairs."""
    with open(path) as fh:
        doc = json.load(fh)
    feats = doc.get("features")
    if doc.get("type") != "FeatureCollection" or feats is None:
        raise MetricError(f"{path}: not a GeoJSON FeatureCollection")
    out = []
    for feat in feats:
        geom = shape(feat["geometry"])
        if geom.geom_type not in ("Polygon", "MultiPolygon"):
            raise MetricError(f"{path}: unsupported geometry {geom.geom_type}")
        out.append((feat.get("properties") or {}, geom))
    return out


class LandUseMap:
    """Category-labeled polygons with meter-accurate within-distance queries.

    Geometries are projected once into a local planar frame anchored at the
    map's bounding-box center; the projection is affine per axis, so
    containment is preserved exactly and distances are true meters at city
    scale.
    """

    def __init__(self, geometries, categories: Sequence[str], residential=("residential",)):
        if len(geometries) == 0:
            raise MetricError("land-use map has no polygons")
        lon_min, lat_min, lon_max, lat_max = shapely.total_bounds(geometries)
        self.frame = LocalFrame(
            GeoPoint((lat_min + lat_max) / 2.0, (lon_min + lon_max) / 2.0), max_range_m=None
        )

        def to_meters(coords):
            x, y = self.frame.project_ll(coords[:, 1], coords[:, 0])
            return np.column_stack([x, y])

        self.geometries = [shapely.transform(g, to_meters) for g in geometries]
        self.categories = list(categories)
        self.residential_categories = set(residential)
        self._residential = [
            g for g, c in zip(self.geometries, self.categories) if c in self.residential_categories
        ]
        self._res_tree = STRtree(self._residential) if self._residential else None

    @classmethod
    def from_geojson(cls, path, category_key: str = "landuse", residential=("residential",)):
        feats = _load_feature_collection(path)
        cats = [str(props.get(category_key, "")) for props, _ in feats]
        return cls([g for _, g in feats], cats, residential)

    @property
    def bounds_m(self) -> tuple[float, float, float, float]:
        return tuple(shapely.total_bounds(self.geometries))

    def residential_distances(self, lats, lons) -> np.ndarray:
        """Distance in meters from each point to the nearest residential polygon.

        Zero for points inside or on the boundary of one.
        """
        if self._res_tree is None:
            raise MetricError("land-use map contains no residential polygons")
        x, y = self.frame.project_ll(np.asarray(lats, float), np.asarray(lons, float))
        return self._distances_m(x, y)

    def _distances_m(self, x, y) -> np.ndarray:
        pts = shapely.points(np.column_stack([np.atleast_1d(x), np.atleast_1d(y)]))
        idx, dist = self._res_tree.query_nearest(pts, return_distance=True, all_matches=False)
        out = np.empty(len(pts))
        out[idx[0]] = dist  # query_nearest pairs are not guaranteed in input order
        return out

    def residential_distance(self, p: GeoPoint) -> float:
        return float(self.residential_distances([p.lat], [p.lon])[0])


@dataclass
class UserMetricSample:
    """Per-user metric ingredients; None marks an input the user lacked."""

    device_id: str
    delta: float | None = None
    r_out: float | None = None
    resid_distance_m: float | None = None

    def in_residential_at(self, weights: BufferWeights) -> int | None:
        if self.resid_distance_m is None:
            return None
        return weights.level_of(self.resid_distance_m)


@dataclass
class MetricSummary:
    m1: float | None
    m2: float | None
    m3: float | None
    m_bar: float | None
    n_users: int
    n_m1: int
    n_m2: int
    n_m3: int
    rho: list[float] | None


def rho_curve(distances: Sequence[float], weights: BufferWeights) -> list[float]:
    """Fraction of homes within each buffer level of residential land."""
    d = np.asarray(distances, dtype=float)
    return [float(np.mean(d <= r)) for r in weights.levels]


def m1_from_distances(distances: Sequence[float], weights: BufferWeights) -> float:
    rho = rho_curve(distances, weights)
    return float(sum(float(w) * r for w, r in zip(weights.weights, rho)))


def m1_residential(homes: Iterable[GeoPoint], land_use: LandUseMap, weights: BufferWeights | None = None) -> float:
    """Buffer-weighted residential detection rate of the home points."""
    weights = weights or BufferWeights()
    pts = list(homes)
    if not pts:
        raise ValueError("m1 needs at least one home")
    d = land_use.residential_distances([p.lat for p in pts], [p.lon for p in pts])
    return m1_from_distances(d, weights)


def m2_delta(home: GeoPoint, night: Trace, night_ids: np.ndarray) -> float | None:
    """Median over nights of the shortest distance from home to that night's pings."""
    if len(night) == 0:
        return None
    d = haversine_ll(home.lat, home.lon, night.lat, night.lon)
    order = np.argsort(night_ids, kind="stable")
    ids = night_ids[order]
    boundaries = np.flatnonzero(np.diff(ids)) + 1
    minima = [float(chunk.min()) for chunk in np.split(d[order], boundaries)]
    return float(np.median(minima))


def m2_proximity(
    homes: dict[str, GeoPoint],
    nights_by_user: dict[str, tuple[Trace, np.ndarray]],
    delta_max: float = DEFAULT_DELTA_MAX_M,
) -> float:
    """Normalized CDF area of the per-user median nightly shortest distance.

    Users without a single night ping are skipped.
    """
    deltas = []
    for device in sorted(homes):
        night, ids = nights_by_user.get(device, (None, None))
        if night is None:
            continue
        delta = m2_delta(as_point(homes[device]), night, ids)
        if delta is not None:
            deltas.append(delta)
    if not deltas:
        raise ValueError("m2: no user with night pings")
    return cdf_auc(deltas, delta_max)


def m3_outside_fraction(
    home: GeoPoint,
    regions: list[StayRegion],
    dwell: str = "night",
) -> float | None:
    """Share of stay dwell spent outside the region nearest the home.

    With ``dwell="night"`` only regions with nighttime dwell count (the user's
    nighttime whereabouts); ``"total"`` uses all dwell time in every region.
    """
    if dwell not in ("night", "total"):
        raise ValueError(f"unknown dwell measure {dwell!r}")
    taus = [r.night_duration if dwell == "night" else r.total_duration for r in regions]
    usable = [(r, tau) for r, tau in zip(regions, taus) if tau > 0.0]
    if not usable:
        return None
    total = sum(tau for _, tau in usable)
    d = [haversine_ll(home.lat, home.lon, r.centroid.lat, r.centroid.lon) for r, _ in usable]
    tau_home = usable[int(np.argmin(d))][1]
    return 1.0 - tau_home / total


def m3_home_stay(
    homes: dict[str, GeoPoint],
    regions_by_user: dict[str, list[StayRegion]],
    dwell: str = "night",
) -> float:
    """Mean home-dwell fraction, via the CDF area of the outside fractions."""
    fractions = []
    for device in sorted(homes):
        regions = regions_by_user.get(device)
        if not regions:
            continue
        r_out = m3_outside_fraction(as_point(homes[device]), regions, dwell)
        if r_out is not None:
            fractions.append(r_out)
    if not fractions:
        raise ValueError("m3: no user with stay regions")
    return cdf_auc(fractions, 1.0)


def mean_metric(m1: float, m2: float, m3: float) -> float:
    return (m1 + m2 + m3) / 3.0


def uniform_random_baseline(
    land_use: LandUseMap,
    weights: BufferWeights | None = None,
    sample_size: int = 10_000,
    seed: int = 0,
) -> float:
    """m1 of points sampled uniformly over the land-use extent.

    The reference any detector must beat: it reflects only how much of the map
    is residential (plus buffer leakage).
    """
    weights = weights or BufferWeights()
    if sample_size <= 0:
        raise ValueError("sample_size must be positive")
    x0, y0, x1, y1 = land_use.bounds_m
    if not (x1 > x0 and y1 > y0):
        raise ValueError("degenerate land-use extent")
    if land_use._res_tree is None:
        raise MetricError("land-use map contains no residential polygons")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(x0, x1, sample_size)
    ys = rng.uniform(y0, y1, sample_size)
    return m1_from_distances(land_use._distances_m(xs, ys), weights)


def aggregate_samples(
    samples: Sequence[UserMetricSample],
    weights: BufferWeights,
    delta_max: float = DEFAULT_DELTA_MAX_M,
) -> MetricSummary:
    """Combine per-user samples into the metric values and the rho curve.

    The same aggregation backs the headline report and every sensitivity
    subset, so a subset equal to the full population reproduces the headline
    numbers bit for bit.
    """
    dists = [s.resid_distance_m for s in samples if s.resid_distance_m is not None]
    deltas = [s.delta for s in samples if s.delta is not None]
    routs = [s.r_out for s in samples if s.r_out is not None]
    m1 = m1_from_distances(dists, weights) if dists else None
    m2 = cdf_auc(deltas, delta_max) if deltas else None
    m3 = cdf_auc(routs, 1.0) if routs else None
    m_bar = mean_metric(m1, m2, m3) if None not in (m1, m2, m3) else None
    return MetricSummary(
        m1=m1,
        m2=m2,
        m3=m3,
        m_bar=m_bar,
        n_users=len(samples),
        n_m1=len(dists),
        n_m2=len(deltas),
        n_m3=len(routs),
        rho=rho_curve(dists, weights) if dists else None,
    )

"""Data-quality sensitivity curves and the two downstream applications:
evacuation identification and zonal / income-group consistency."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from shapely import STRtree
from shapely.geometry import Point

from homedetect.geo import GeoPoint, haversine
from homedetect.ingest import NightWindow, Trace
from homedetect.metrics import (
    BufferWeights,
    MetricSummary,
    UserMetricSample,
    _load_feature_collection,
    aggregate_samples,
    as_point,
    DEFAULT_DELTA_MAX_M,
)


def user_quality(t: Trace, window: NightWindow, night_count: int) -> float:
    """Mean night pings per calendar night of the study period.

    Nights without pings still count in the denominator, so sparse users score
    low even when their few active nights are dense.
    """
    if night_count <= 0:
        raise ValueError("study period must span at least one night")
    mask, _ = window.classify(t.t)
    return float(mask.sum()) / night_count


def study_night_count(traces: dict[str, Trace], window: NightWindow) -> int:
    """Calendar nights spanned by the dataset's night pings, zero-ping nights included."""
    lo, hi = None, None
    for t in traces.values():
        mask, ids = window.classify(t.t)
        if mask.any():
            ids = ids[mask]
            lo = int(ids.min()) if lo is None else min(lo, int(ids.min()))
            hi = int(ids.max()) if hi is None else max(hi, int(ids.max()))
    return 0 if lo is None else hi - lo + 1


@dataclass
class SensitivityRow:
    algorithm: str
    threshold: float
    summary: MetricSummary | None  # None marks an empty subset
    n_users: int
    cdf_below: float


def sensitivity_curve(
    samples_by_alg: dict[str, dict[str, UserMetricSample]],
    quality: dict[str, float],
    thresholds: Sequence[float],
    weights: BufferWeights | None = None,
    delta_max: float = DEFAULT_DELTA_MAX_M,
) -> list[SensitivityRow]:
    """Metrics per algorithm over nested user subsets of rising data quality.

    Each threshold keeps the users with at least that many pings per night on
    average; cdf_below reports the fraction filtered out, which is the
    quality-CDF companion curve. Threshold 0 reproduces the headline metrics
    exactly.
    """
    thresholds = list(thresholds)
    if thresholds != sorted(thresholds):
        raise ValueError("thresholds must be sorted ascending")
    weights = weights or BufferWeights()
    rows = []
    for alg in sorted(samples_by_alg):
        samples = samples_by_alg[alg]
        devices = sorted(samples)
        n_all = len(devices)
        for x in thresholds:
            subset = [samples[d] for d in devices if quality[d] >= x]
            below = sum(1 for d in devices if quality[d] < x)
            rows.append(
                SensitivityRow(
                    algorithm=alg,
                    threshold=float(x),
                    summary=aggregate_samples(subset, weights, delta_max) if subset else None,
                    n_users=len(subset),
                    cdf_below=below / n_all if n_all else 0.0,
                )
            )
    return rows


class ZoneMap:
    """Id-labeled polygons (tracts, counties) with optional median income."""

    def __init__(self, geometries, zone_ids: Sequence[str], incomes: Sequence[float | None]):
        if len(geometries) == 0:
            raise ValueError("zone map has no polygons")
        if len(set(zone_ids)) != len(zone_ids):
            raise ValueError("zone ids must be unique")
        self.geometries = list(geometries)
        self.zone_ids = list(zone_ids)
        self.incomes = list(incomes)
        self._tree = STRtree(self.geometries)

    @classmethod
    def from_geojson(cls, path, zone_id_key="zone_id", income_key="median_income_monthly"):
        feats = _load_feature_collection(path)
        ids = [str(props.get(zone_id_key, i)) for i, (props, _) in enumerate(feats)]
        incomes = []
        for props, _ in feats:
            val = props.get(income_key)
            incomes.append(float(val) if val is not None else None)
        return cls([g for _, g in feats], ids, incomes)

    def locate(self, p: GeoPoint) -> int | None:
        """Index of the first zone (file order) containing the point, boundary inclusive."""
        pt = Point(p.lon, p.lat)
        hits = sorted(int(i) for i in self._tree.query(pt))
        for i in hits:
            if self.geometries[i].covers(pt):
                return i
        return None

    def zone_of(self, p: GeoPoint) -> str | None:
        i = self.locate(p)
        return None if i is None else self.zone_ids[i]

    def income_of(self, p: GeoPoint) -> float | None:
        i = self.locate(p)
        return None if i is None else self.incomes[i]


class IncomeCategory(Enum):
    """Monthly-income groups: below $1,250, $1,250 to $3,333, and $3,333 up."""

    LOW = "low"
    MID = "mid"
    HIGH = "high"

    @staticmethod
    def classify(monthly_income: float) -> "IncomeCategory":
        if monthly_income < 1250.0:
            return IncomeCategory.LOW
        if monthly_income < 3333.0:
            return IncomeCategory.MID
        return IncomeCategory.HIGH


@dataclass
class EvacuationUser:
    device_id: str
    distance_m: float
    evacuated: bool


@dataclass
class EvacuationResult:
    users: list[EvacuationUser]
    fraction: float
    zone_fractions: dict[str, tuple[int, int, float]]  # zone -> (n, n_evacuated, fraction)
    n_missing: int
    n_outside_zones: int


def evacuation_classify(
    pre_homes: dict,
    post_homes: dict,
    zones: ZoneMap | None = None,
    threshold_m: float = 1000.0,
) -> EvacuationResult:
    """Flag users whose home moved more than ``threshold_m`` between periods.

    Zone shares aggregate over the pre-period home's zone; users missing from
    either table, or outside every zone, are excluded from the respective
    aggregate and counted.
    """
    common = sorted(set(pre_homes) & set(post_homes))
    n_missing = len(set(pre_homes) | set(post_homes)) - len(common)
    users = []
    per_zone: dict[str, list[bool]] = {}
    n_outside = 0
    for device in common:
        pre = as_point(pre_homes[device])
        post = as_point(post_homes[device])
        d = haversine(pre, post)
        evacuated = d > threshold_m
        users.append(EvacuationUser(device, d, evacuated))
        if zones is not None:
            zone = zones.zone_of(pre)
            if zone is None:
                n_outside += 1
            else:
                per_zone.setdefault(zone, []).append(evacuated)
    zone_fractions = {
        z: (len(flags), sum(flags), sum(flags) / len(flags)) for z, flags in sorted(per_zone.items())
    }
    fraction = sum(u.evacuated for u in users) / len(users) if users else 0.0
    return EvacuationResult(users, fraction, zone_fractions, n_missing, n_outside)


@dataclass
class ConsistencyResult:
    fraction: float
    n_matched: int
    n_classified: int
    n_excluded: int  # missing from a table or outside all zones


def zonal_consistency(homes_a: dict, homes_b: dict, zones: ZoneMap) -> ConsistencyResult:
    """Fraction of common users whose two homes fall in the same zone."""
    common = sorted(set(homes_a) & set(homes_b))
    excluded = len(set(homes_a) | set(homes_b)) - len(common)
    matched = 0
    classified = 0
    for device in common:
        za = zones.zone_of(as_point(homes_a[device]))
        zb = zones.zone_of(as_point(homes_b[device]))
        if za is None or zb is None:
            excluded += 1
            continue
        classified += 1
        matched += za == zb
    fraction = matched / classified if classified else 0.0
    return ConsistencyResult(fraction, matched, classified, excluded)


@dataclass
class IncomeMismatchResult:
    matrix: np.ndarray  # 3x3 counts, rows = period A category, cols = period B
    categories: tuple[str, ...]
    off_diagonal_fraction: float
    n_classified: int
    n_excluded: int


def income_mismatch(homes_a: dict, homes_b: dict, zones: ZoneMap) -> IncomeMismatchResult:
    """Transition matrix of home-tract income categories between two periods."""
    cats = tuple(c.value for c in IncomeCategory)
    index = {c: i for i, c in enumerate(IncomeCategory)}
    matrix = np.zeros((3, 3), dtype=np.int64)
    common = sorted(set(homes_a) & set(homes_b))
    excluded = len(set(homes_a) | set(homes_b)) - len(common)
    for device in common:
        ia = zones.income_of(as_point(homes_a[device]))
        ib = zones.income_of(as_point(homes_b[device]))
        if ia is None or ib is None:
            excluded += 1
            continue
        matrix[index[IncomeCategory.classify(ia)], index[IncomeCategory.classify(ib)]] += 1
    n = int(matrix.sum())
    off = int(n - np.trace(matrix))
    return IncomeMismatchResult(matrix, cats, off / n if n else 0.0, n, excluded)

import numpy as np
import pytest

from homedetect.clustering import (
    GridIndex,
    build_stay_regions,
    detect_stay_points,
    mean_shift,
    threshold_agglomerate,
)
from homedetect.geo import GeoPoint, haversine
from homedetect.ingest import NightWindow, Trace

from helpers import WINDOW, dwell_rows, local_trace, night_t
from oracles import agglomerate_bruteforce, local_kde_argmax_set, staypoints_bruteforce


def test_grid_index_matches_bruteforce():
    rng = np.random.default_rng(3)
    pts = rng.uniform(-800, 800, (200, 2))
    idx = GridIndex(pts, 250.0)
    for q in rng.uniform(-800, 800, (25, 2)):
        got = np.sort(idx.query_radius(q, 250.0))
        want = np.flatnonzero(np.linalg.norm(pts - q, axis=1) <= 250.0)
        assert np.array_equal(got, want)


def test_mean_shift_single_point():
    clusters = mean_shift(np.array([[3.0, 4.0]]), 250.0)
    assert len(clusters) == 1
    assert clusters[0].size == 1
    assert np.allclose(clusters[0].mode, [3.0, 4.0])


def test_mean_shift_rejects_empty_and_bad_bandwidth():
    with pytest.raises(ValueError):
        mean_shift(np.empty((0, 2)), 250.0)
    with pytest.raises(ValueError):
        mean_shift(np.array([[0.0, 0.0]]), 0.0)


def test_mean_shift_disc_mode_matches_kde_grid():
    rng = np.random.default_rng(11)
    r = 50.0 * np.sqrt(rng.uniform(0, 1, 10))
    a = rng.uniform(0, 2 * np.pi, 10)
    pts = np.column_stack([r * np.cos(a), r * np.sin(a)])
    clusters = mean_shift(pts, 250.0)
    assert len(clusters) == 1
    assert np.linalg.norm(clusters[0].mode - pts.mean(axis=0)) < 10.0
    plateau = local_kde_argmax_set(pts, 250.0, clusters[0].mode, 300.0)
    assert np.min(np.linalg.norm(plateau - clusters[0].mode, axis=1)) < 10.0


def test_mean_shift_two_distant_blobs():
    rng = np.random.default_rng(5)
    pts = np.vstack(
        [rng.normal(0, 10, (10, 2)), rng.normal([1000.0, 0.0], 10, (10, 2))]
    )
    clusters = mean_shift(pts, 250.0)
    assert [c.size for c in clusters] == [10, 10]
    assert set(map(int, clusters[0].member_indices)) == set(range(10))
    assert set(map(int, clusters[1].member_indices)) == set(range(10, 20))


def test_mean_shift_modes_are_stationary():
    rng = np.random.default_rng(17)
    pts = np.vstack([rng.normal(0, 40, (30, 2)), rng.normal([600, 300], 25, (20, 2))])
    for c in mean_shift(pts, 250.0, tol=0.1):
        near = pts[np.linalg.norm(pts - c.mode, axis=1) <= 250.0]
        assert np.linalg.norm(near.mean(axis=0) - c.mode) < 0.1


def test_mean_shift_permutation_invariant():
    rng = np.random.default_rng(23)
    pts = np.vstack([rng.normal(0, 20, (15, 2)), rng.normal([700, -200], 20, (25, 2))])
    perm = rng.permutation(len(pts))
    a = mean_shift(pts, 250.0)
    b = mean_shift(pts[perm], 250.0)
    key = lambda cl: sorted((round(c.mode[0], 6), round(c.mode[1], 6), c.size) for c in cl)
    assert key(a) == key(b)


def test_mean_shift_partition_is_exhaustive_and_disjoint():
    rng = np.random.default_rng(29)
    pts = rng.uniform(-1500, 1500, (120, 2))
    clusters = mean_shift(pts, 250.0)
    seen = np.concatenate([c.member_indices for c in clusters])
    assert sorted(seen.tolist()) == list(range(len(pts)))
    sizes = [c.size for c in clusters]
    assert sizes == sorted(sizes, reverse=True)


def test_agglomerate_far_points_stay_singletons():
    pts = np.array([[0.0, 0.0], [300.0, 0.0], [0.0, 300.0]])
    assert threshold_agglomerate(pts, 250.0) == [[0], [1], [2]]


def test_agglomerate_collinear_chain_merges():
    pts = np.array([[0.0, 0.0], [100.0, 0.0], [200.0, 0.0]])
    assert threshold_agglomerate(pts, 250.0, "average") == [[0, 1, 2]]
    assert agglomerate_bruteforce(pts, 250.0, "average") == [[0, 1, 2]]


def test_agglomerate_two_pairs():
    pts = np.array([[0.0, 0.0], [50.0, 0.0], [900.0, 0.0], [950.0, 0.0]])
    assert threshold_agglomerate(pts, 250.0) == [[0, 1], [2, 3]]


def test_agglomerate_extreme_cuts():
    rng = np.random.default_rng(31)
    pts = rng.uniform(-1000, 1000, (12, 2))
    assert threshold_agglomerate(pts, np.inf) == [list(range(12))]
    assert threshold_agglomerate(pts, 0.0) == [[i] for i in range(12)]


@pytest.mark.parametrize("linkage", ["single", "complete", "average"])
def test_agglomerate_matches_bruteforce_dendrogram(linkage):
    rng = np.random.default_rng(37)
    for _ in range(40):
        n = int(rng.integers(1, 13))
        pts = rng.uniform(0, 600, (n, 2))
        cut = float(rng.uniform(20, 500))
        assert threshold_agglomerate(pts, cut, linkage) == agglomerate_bruteforce(pts, cut, linkage)


def test_agglomerate_rejects_bad_input():
    with pytest.raises(ValueError):
        threshold_agglomerate(np.empty((0, 2)), 100.0)
    with pytest.raises(ValueError):
        threshold_agglomerate(np.array([[0.0, 0.0]]), 100.0, "ward")


def test_stay_points_single_dwell():
    t = local_trace(dwell_rows(0.0, 0.0, night_t(0, 0.0), night_t(0, 0.75), 5))
    sps = detect_stay_points(t, 200.0, 1800.0)
    assert len(sps) == 1
    assert sps[0].duration == pytest.approx(45 * 60.0)


def test_stay_points_continuous_movement_yields_none():
    rows = [(300.0 * i, 0.0, night_t(0, 0.0) + 60.0 * i) for i in range(30)]
    assert detect_stay_points(local_trace(rows), 200.0, 1800.0) == []


def test_stay_points_two_dwells_split_by_jump():
    rows = dwell_rows(0.0, 0.0, night_t(0, 0.0), night_t(0, 1.0), 6) + dwell_rows(
        500.0, 0.0, night_t(0, 1.2), night_t(0, 2.2), 6
    )
    sps = detect_stay_points(local_trace(rows), 200.0, 1800.0)
    assert len(sps) == 2
    assert sps[0].departure <= sps[1].arrival


def test_stay_points_match_bruteforce_oracle():
    rng = np.random.default_rng(41)
    for _ in range(50):
        # random mix of dwells and moves
        rows = []
        t = night_t(0, 0.0)
        x = y = 0.0
        for _ in range(100):
            t += float(rng.uniform(30, 900))
            if rng.random() < 0.7:
                x += float(rng.normal(0, 40))
                y += float(rng.normal(0, 40))
            else:
                x += float(rng.uniform(-1500, 1500))
                y += float(rng.uniform(-1500, 1500))
            rows.append((x, y, t))
        trace = local_trace(rows)
        got = detect_stay_points(trace, 200.0, 1800.0)
        want = staypoints_bruteforce(trace, 200.0, 1800.0)
        assert len(got) == len(want)
        for sp, (c, arr, dep) in zip(got, want):
            assert (sp.arrival, sp.departure) == (arr, dep)
            assert sp.centroid.lat == c.lat and sp.centroid.lon == c.lon


def test_stay_points_members_within_radius_of_anchor():
    rng = np.random.default_rng(43)
    rows = []
    t = night_t(0, 0.0)
    for i in range(60):
        t += float(rng.uniform(120, 600))
        rows.append((float(rng.normal(0, 80)), float(rng.normal(0, 80)), t))
    trace = local_trace(rows)
    sps = detect_stay_points(trace, 200.0, 1800.0)
    for a, b in zip(sps, sps[1:]):
        assert a.departure <= b.arrival  # disjoint in time
    for sp in sps:
        members = [
            GeoPoint(float(la), float(lo))
            for la, lo, ts in zip(trace.lat, trace.lon, trace.t)
            if sp.arrival <= ts <= sp.departure
        ]
        anchor = members[0]
        assert all(haversine(anchor, p) <= 200.0 for p in members)


def test_stay_region_single_stay_point():
    t = local_trace(dwell_rows(0.0, 0.0, night_t(0, 0.0), night_t(0, 2.0), 8))
    regions = build_stay_regions(detect_stay_points(t, 200.0, 1800.0), WINDOW)
    assert len(regions) == 1
    assert regions[0].visit_count == 1
    assert regions[0].total_duration == pytest.approx(2 * 3600.0)


def test_stay_region_merges_nearby_stays_and_sums_durations():
    # dwells 220 m apart: beyond the 200 m scan radius, inside the 250 m region cut
    rows = dwell_rows(0.0, 0.0, night_t(0, 0.0), night_t(0, 1.0), 5) + dwell_rows(
        220.0, 0.0, night_t(0, 2.0), night_t(0, 3.5), 5
    )
    sps = detect_stay_points(local_trace(rows), 200.0, 1800.0)
    assert len(sps) == 2
    regions = build_stay_regions(sps, WINDOW)
    assert len(regions) == 1
    assert regions[0].total_duration == pytest.approx(2.5 * 3600.0)
    assert regions[0].visit_count == 2


def test_stay_region_night_overlap():
    # dwell 19:00-23:00 against a 20:00-05:00 window -> 3 h of night dwell
    rows = dwell_rows(0.0, 0.0, night_t(0, -1.0), night_t(0, 3.0), 9)
    sps = detect_stay_points(local_trace(rows), 200.0, 1800.0)
    regions = build_stay_regions(sps, WINDOW)
    assert regions[0].night_duration == pytest.approx(3 * 3600.0)
    assert regions[0].night_duration <= regions[0].total_duration


def test_stay_region_duration_weighted_centroid():
    rows = dwell_rows(0.0, 0.0, night_t(0, 0.0), night_t(0, 3.0), 6) + dwell_rows(
        220.0, 0.0, night_t(0, 4.0), night_t(0, 5.0), 6
    )
    sps = detect_stay_points(local_trace(rows), 200.0, 1800.0)
    regions = build_stay_regions(sps, WINDOW, cut_m=250.0)
    assert len(regions) == 1
    # 3 h at x=0 vs 1 h at x=220 -> centroid at 55 m east
    d = haversine(GeoPoint(0.0, 0.0), regions[0].centroid)
    assert d == pytest.approx(55.0, abs=0.5)

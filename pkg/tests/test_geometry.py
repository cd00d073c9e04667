import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scrfit.geometry import (EARTH_RADIUS_M, GeoPoint, PlanePoint, Projection, StateSpace, TrapArray,
                             build_state_space, haversine_array, haversine_distance, idw_interpolate,
                             project_to_plane, proximity_covariate)


def chord_oracle(a, b, radius=EARTH_RADIUS_M):
    # great-circle distance from the 3-D chord length, independent of the haversine form
    def xyz(p):
        lat, lon = math.radians(p.lat), math.radians(p.lon)
        return np.array([math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)])
    c = np.linalg.norm(xyz(a) - xyz(b))
    return 2 * radius * math.asin(min(1.0, c / 2))


geo = st.builds(GeoPoint, st.floats(-180, 180), st.floats(-90, 90))


def test_haversine_identity():
    p = GeoPoint(-99.13, 19.43)
    assert haversine_distance(p, p) == 0.0


def test_haversine_one_degree_of_latitude():
    d = haversine_distance(GeoPoint(0, 0), GeoPoint(0, 1))
    assert d == pytest.approx(chord_oracle(GeoPoint(0, 0), GeoPoint(0, 1)), rel=1e-12)
    assert d == pytest.approx(111_194.93, abs=0.01)


def test_haversine_symmetric_random_pairs():
    rng = np.random.default_rng(7)
    for _ in range(100):
        a = GeoPoint(rng.uniform(-180, 180), rng.uniform(-90, 90))
        b = GeoPoint(rng.uniform(-180, 180), rng.uniform(-90, 90))
        assert haversine_distance(a, b) == haversine_distance(b, a)
        assert haversine_distance(a, b) == pytest.approx(chord_oracle(a, b), rel=1e-9, abs=1e-6)


@settings(max_examples=200)
@given(geo, geo, geo)
def test_haversine_triangle_inequality(a, b, c):
    ab, bc, ac = haversine_distance(a, b), haversine_distance(b, c), haversine_distance(a, c)
    assert ac <= (ab + bc) * (1 + 1e-9) + 1e-6


def test_geopoint_domain():
    with pytest.raises(ValueError):
        GeoPoint(181, 0)
    with pytest.raises(ValueError):
        GeoPoint(0, -91)


def test_projection_origin_and_north():
    o = GeoPoint(-99.13, 19.43)
    pts = project_to_plane([o, GeoPoint(o.lon, o.lat + 1)], o)
    assert pts[0] == PlanePoint(0.0, 0.0)
    assert pts[1].x == pytest.approx(0.0, abs=1e-9)
    assert pts[1].y == pytest.approx(chord_oracle(o, GeoPoint(o.lon, o.lat + 1)), rel=1e-9)


def test_projection_distance_error_within_50km_disc():
    o = GeoPoint(-99.13, 19.43)
    rng = np.random.default_rng(3)
    r = 25_000 * np.sqrt(rng.uniform(size=60))
    th = rng.uniform(0, 2 * np.pi, size=60)
    proj = Projection(o)
    lon, lat = proj.inverse(r * np.cos(th), r * np.sin(th))
    pts = [GeoPoint(float(a), float(b)) for a, b in zip(lon, lat)]
    plane = project_to_plane(pts, o)
    worst = 0.0
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            h = chord_oracle(pts[i], pts[j])
            if h < 1000:
                continue
            p = math.hypot(plane[i].x - plane[j].x, plane[i].y - plane[j].y)
            worst = max(worst, abs(p - h) / h)
    assert worst < 0.005


def test_projection_rejects_large_extent():
    o = GeoPoint(0, 0)
    with pytest.raises(ValueError, match="span"):
        project_to_plane([o, GeoPoint(3, 0)], o)


def test_projection_roundtrip():
    proj = Projection(GeoPoint(-99.1, 19.4))
    x, y = proj.forward([-99.0, -99.3], [19.5, 19.2])
    lon, lat = proj.inverse(x, y)
    np.testing.assert_allclose(lon, [-99.0, -99.3], atol=1e-12)
    np.testing.assert_allclose(lat, [19.5, 19.2], atol=1e-12)


def test_state_space_single_trap():
    traps = TrapArray(["t"], [[0.0, 0.0]])
    ss = build_state_space(traps, buffer=2.0, spacing=1.0)
    assert ss.n_points == 25
    assert ss.cell_area == 1.0
    expected = {(x, y) for x in range(-2, 3) for y in range(-2, 3)}
    assert {tuple(p) for p in ss.xy} == expected


def test_state_space_covers_traps_and_bounds():
    rng = np.random.default_rng(0)
    traps = TrapArray([f"t{i}" for i in range(12)], rng.uniform(0, 5000, (12, 2)))
    ss = build_state_space(traps, buffer=1500.0, spacing=400.0)
    lo, hi = traps.xy.min(0), traps.xy.max(0)
    assert np.all(ss.xy >= lo - 1500 - 400) and np.all(ss.xy <= hi + 1500 + 400)
    d = np.sqrt(((traps.xy[:, None] - ss.xy[None]) ** 2).sum(-1)).min(axis=1)
    assert np.all(d <= 400 / math.sqrt(2) + 1e-9)


def test_state_space_errors_and_warning():
    traps = TrapArray(["t"], [[0.0, 0.0]])
    with pytest.raises(ValueError):
        build_state_space(traps, 0.0, 1.0)
    with pytest.warns(UserWarning, match="coarse"):
        build_state_space(traps, 1.0, 2.0)
    with pytest.raises(ValueError):
        TrapArray([], np.zeros((0, 2)))


def test_state_space_479_points_configurable():
    # G is user controlled; a clipped lattice around two traps reaches 479 points
    traps = TrapArray(["a", "b"], [[0.0, 0.0], [2.0, 0.0]])
    ss = build_state_space(traps, 11.76, 1.0, clip=True)
    assert ss.n_points == 479
    assert build_state_space(traps, 11.76, 1.0).n_points == 27 * 25


def test_state_space_invariants():
    with pytest.raises(ValueError):
        StateSpace(np.array([[0, 0], [0, 0]]), 1.0)
    with pytest.raises(ValueError):
        StateSpace(np.array([[0, 0]]), 0.0)
    with pytest.raises(ValueError):
        StateSpace(np.array([[0, 0], [1, 0]]), 1.0, {"x": np.ones(3)})


def brute_idw(sxy, vals, txy, power, k):
    out = []
    for t in txy:
        d = [math.dist(t, s) for s in sxy]
        order = sorted(range(len(d)), key=lambda i: d[i])[:k]
        if d[order[0]] == 0:
            out.append(vals[order[0]])
            continue
        w = [d[i] ** -power for i in order]
        out.append(sum(wi * vals[i] for wi, i in zip(w, order)) / sum(w))
    return np.array(out)


def test_idw_exact_hit_and_midpoint():
    sxy = np.array([[0.0, 0.0], [2.0, 0.0]])
    assert idw_interpolate(sxy, [0.0, 10.0], [[0.0, 0.0]])[0] == 0.0
    assert idw_interpolate(sxy, [0.0, 10.0], [[2.0, 0.0]])[0] == 10.0
    assert idw_interpolate(sxy, [0.0, 10.0], [[1.0, 0.0]], power=2)[0] == pytest.approx(5.0, abs=1e-12)


def test_idw_matches_brute_force():
    rng = np.random.default_rng(11)
    sxy = rng.uniform(0, 100, (40, 2))
    vals = rng.normal(size=40)
    txy = rng.uniform(0, 100, (25, 2))
    for power, k in ((2.0, 12), (1.0, 5), (3.0, 40)):
        got = idw_interpolate(sxy, vals, txy, power, k)
        np.testing.assert_allclose(got, brute_idw(sxy, vals, txy, power, k), rtol=1e-10)


@settings(max_examples=50)
@given(st.integers(1, 30), st.floats(0.5, 4.0), st.integers(0, 10_000))
def test_idw_bounded_by_samples(n, power, seed):
    rng = np.random.default_rng(seed)
    sxy = rng.uniform(0, 10, (n, 2))
    vals = rng.normal(size=n)
    out = idw_interpolate(sxy, vals, rng.uniform(-5, 15, (10, 2)), power, 12)
    assert np.all(out >= vals.min() - 1e-12) and np.all(out <= vals.max() + 1e-12)


def test_idw_errors():
    with pytest.raises(ValueError):
        idw_interpolate(np.zeros((0, 2)), [], [[0, 0]])


def test_proximity_covariate():
    ref = GeoPoint(-99.1332, 19.4326)
    lon = np.array([ref.lon, -99.10, -99.00])
    lat = np.array([ref.lat, 19.44, 19.50])
    v = proximity_covariate(ref, lon, lat)
    assert v[0] == 0.0
    assert v[1] < v[2]
    for i in range(3):
        assert v[i] == pytest.approx(haversine_distance(ref, GeoPoint(lon[i], lat[i])), rel=1e-12, abs=1e-9)
    np.testing.assert_allclose(haversine_array(lon, lat, ref.lon, ref.lat), v)

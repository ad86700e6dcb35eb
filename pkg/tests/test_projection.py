import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import angle, map_m2, patch_minimizer, ssb_points, unit
from ssbgeom import QuadraticMap, build, ssb
from ssbgeom import projection as pj
from ssbgeom.curvature import WeingartenMap


def outward(q):
    """Unit normal pointing to increasing lambda0 (away from the nearest eigenvalue collisions)."""
    return np.sign(np.dot(q.N_V, q.grad_lambda)) * q.N_V


def test_lambda_value_examples(M1, M2):
    assert pj.lambda_value(M2, [2.0, 0.5]) == pytest.approx(3.0, abs=1e-14)
    assert pj.lambda_value(M1, [0.2, 1.0]) == pytest.approx(0.4, abs=1e-14)
    assert abs(pj.lambda_value(M2, [1.0, 1.0])) <= 1e-10


def test_m2_analytic(M2):
    r = pj.project_point(M2, [2.0, 0.5])
    np.testing.assert_allclose(r.q.q, [1.25, 1.25], atol=1e-8)
    assert abs(r.d) == pytest.approx(0.75 * np.sqrt(2), abs=1e-8)
    np.testing.assert_allclose(r.q.q + r.d * r.q.N_V, [2.0, 0.5], atol=1e-12)
    assert r.locally_closest is True


def test_m1_analytic(M1):
    r = pj.project_point(M1, [0.2, 1.0])
    np.testing.assert_allclose(r.q.q, [0.0, 1.0], atol=1e-8)
    assert r.d == pytest.approx(0.2, abs=1e-8)


def test_point_on_ssb_is_fixed(M2):
    r = pj.project_point(M2, [1.0, 1.0])
    np.testing.assert_allclose(r.q.q, [1.0, 1.0])
    assert r.d == 0.0
    assert r.corrector_iterations == []


def test_result_serializes(M2):
    doc = pj.project_point(M2, [2.0, 0.5], keep_trace=True).to_dict()
    assert set(doc) >= {"q", "d", "N_V", "locally_closest", "steps", "trace"}
    assert doc["trace"][0]["t"] == pytest.approx(3.0)


def test_flat_maps_need_no_correction():
    maps = [
        (map_m2(), [2.0, 0.5]),
        (build([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]), [0.2, 1.0]),
        (build([np.diag(e) for e in np.eye(4)]), [0.5, 1.0, 1.5, 2.0]),
        (build([np.diag(e) for e in np.eye(4)]), [-0.7, 1.0, -1.5, 2.0]),
    ]
    counts = []
    for F, v in maps:
        counts += pj.project_point(F, v).corrector_iterations
    assert counts
    assert np.mean(np.array(counts) == 0) >= 0.9


def test_agrees_with_patch_minimizer(ieee14):
    _, F, _ = ieee14
    rng = np.random.default_rng(0)
    for q in ssb_points("ieee14", 5):
        for offset in (3e-4, 3e-2):
            v = q.q + offset * unit(outward(q) + 0.5 * unit(rng.standard_normal(F.n)))
            res = pj.project_point(F, v)
            assert np.linalg.norm(res.q.q - patch_minimizer(F, q, v)) <= 1e-5
            assert angle(v - res.q.q, res.q.N_V) <= 1e-7
            assert abs(res.q.lambda0) <= 1e-10 * res.q.spectrum.scale
            assert res.d == pytest.approx(np.dot(v - res.q.q, res.q.N_V))


def test_normal_offset_returns_base_point(ieee14):
    _, F, _ = ieee14
    q = ssb_points("ieee14", 1)[0]
    v = q.q + 0.02 * outward(q)
    res = pj.project_point(F, v)
    np.testing.assert_allclose(res.q.q, q.q, atol=1e-9)
    assert abs(res.d) == pytest.approx(0.02, abs=1e-9)


def test_trace_stays_on_isolevels(ieee14):
    _, F, _ = ieee14
    q = ssb_points("ieee14", 2)[1]
    v = q.q + 0.03 * unit(outward(q) + 0.3 * ssb.tangent_basis(q)[:, 0])
    res = pj.project_point(F, v, keep_trace=True)
    assert len(res.trace) > 3
    for t, r in res.trace[1:]:
        der = ssb.eigen_derivatives(F, r)
        assert abs(der.spectrum.lambda0 - t) <= 1e-8
        assert angle(v - r, der.grad_lambda) <= 1e-8


def test_trace_follows_independent_projections(ieee14):
    _, F, _ = ieee14
    rng = np.random.default_rng(4)
    q = ssb_points("ieee14", 2)[1]
    v0 = q.q + 0.01 * outward(q)
    u = ssb.tangent_basis(q) @ unit(rng.standard_normal(F.n - 1))
    curve = [(t, v0 + t * u + 0.1 * t * outward(q)) for t in np.linspace(0.0, 0.02, 101)]
    traced = pj.trace_curve_projection(F, curve, reanchor=10)
    assert len(traced) == 101
    for (_, v), res in zip(curve, traced):
        ref = pj.project_point(F, v, check_closest=False)
        assert np.linalg.norm(res.q.q - ref.q.q) <= 1e-6
        assert abs(res.d - ref.d) <= 1e-6


def test_trace_flat_ssb_exact(M2):
    curve = [(t, np.array([2.0, 0.5 + t])) for t in np.linspace(0.0, 1.0, 11)]
    for (t, _), res in zip(curve, pj.trace_curve_projection(M2, curve, reanchor=0)):
        np.testing.assert_allclose(res.q.q, [1.25 + t / 2, 1.25 + t / 2], atol=1e-12)


def test_trace_normal_motion_keeps_foot(M2):
    N = unit([1.0, -1.0])
    curve = [(t, np.array([1.0, 1.0]) + (0.1 + t) * N) for t in np.linspace(0.0, 0.5, 6)]
    results = pj.trace_curve_projection(M2, curve, reanchor=0)
    for (t, _), res in zip(curve, results):
        np.testing.assert_allclose(res.q.q, [1.0, 1.0], atol=1e-12)
        assert abs(res.d) == pytest.approx(0.1 + t, abs=1e-12)


def test_trace_rejects_repeated_parameter(M2):
    with pytest.raises(ValueError):
        pj.trace_curve_projection(M2, [(0.0, [2.0, 0.5]), (0.0, [2.0, 0.6])])
    assert pj.trace_curve_projection(M2, []) == []


def _w(values):
    Q, _ = np.linalg.qr(np.random.default_rng(len(values)).standard_normal((len(values),) * 2))
    basis = np.eye(len(values) + 1)[:, : len(values)]
    return WeingartenMap(Q @ np.diag(values) @ Q.T, basis)


def test_local_closest_examples():
    q = ssb.ssb_point(map_m2(), [1.0, 1.0])
    assert pj.local_closest_check(q, 1e6, _w([0.0]))
    assert not pj.local_closest_check(q, 2.0, _w([1.0]))
    assert pj.local_closest_check(q, 0.5, _w([1.0]))
    # on the other side the surface bends away from the point
    assert pj.local_closest_check(q, -2.0, _w([1.0]))
    assert not pj.local_closest_check(q, -2.0, _w([-1.0, 0.2]))


@given(kappas=st.lists(st.floats(-5, 5), min_size=1, max_size=5), d=st.floats(-5, 5))
@settings(max_examples=200, deadline=None)
def test_local_closest_rejects_beyond_focal_distance(kappas, d):
    q = ssb.ssb_point(map_m2(), [1.0, 1.0])
    oriented = max(np.sign(d) * np.array(kappas)) if d != 0 else 0.0
    verdict = pj.local_closest_check(q, d, _w(kappas))
    if abs(d) * oriented > 1 + 1e-9:
        assert not verdict
    elif abs(d) * oriented < 1 - 1e-9:
        assert verdict


def hyperbola_map():
    """F = (v1^2 + 2 v2, v2^2 + 2 v1): det DF = 4 (v1 v2 - 1), SSB is the hyperbola v1 v2 = 1."""
    return QuadraticMap(np.array([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]),
                        linear=np.array([[0.0, 2.0], [2.0, 0.0]]))


@pytest.mark.parametrize("v,d,closest", [
    ([2.5, 2.5], 1.5 * np.sqrt(2), False),  # beyond the center of curvature (2, 2)
    ([1.5, 1.5], 0.5 * np.sqrt(2), True),
    ([0.5, 0.5], -0.5 * np.sqrt(2), True),
])
def test_curved_ssb_focal_check(v, d, closest):
    res = pj.project_point(hyperbola_map(), v)
    np.testing.assert_allclose(res.q.q, [1.0, 1.0], atol=1e-9)
    assert res.d == pytest.approx(d, abs=1e-9)
    assert res.locally_closest is closest

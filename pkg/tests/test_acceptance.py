"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and repeated in the terminal summary.
"""
import time

import numpy as np
import scipy.sparse.linalg as spla

from conftest import (ACCEPTANCE_LINES, NETWORKS, angle, map_m1, map_m2, network, patch_minimizer,
                      ssb_points, unit)
from ssbgeom import curvature as cv
from ssbgeom import invcalc, ssb
from ssbgeom import inversion as inv
from ssbgeom import projection as pj
from ssbgeom.cli import rng_for
from test_curvature import rayleigh_oracle
from test_invcalc import m2_branch_inverse, m2_inverse_hessian
from test_inversion import m2_preimage
from test_projection import _w, outward


def verdict(number, ok, detail):
    line = f"ACCEPTANCE {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_1_algebraic_identities():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst9 = worst10 = 0.0
    maps = [map_m1(), map_m2(), network("ieee14", eliminate_slack=False)[1]]
    for F in maps:
        for _ in range(100):
            x, v, u, w = rng.standard_normal((4, F.n))
            lhs = F.jacobian(x) @ v
            worst9 = max(worst9, np.linalg.norm(lhs - F.jacobian(v) @ x) / (1 + np.linalg.norm(x) * np.linalg.norm(v)))
            ref = F.jacobian(u) @ w
            worst10 = max(worst10, np.linalg.norm(F.hessian_apply(u, w) - ref) / max(np.linalg.norm(ref), 1e-300))
    elapsed = time.perf_counter() - start
    ok = worst9 <= 1e-12 and worst10 <= 1e-12 and elapsed < 1.0
    verdict(1, ok, f"commuting-Jacobian rel {worst9:.1e}, Hessian rel {worst10:.1e}, {elapsed:.2f}s")


def _lambda_near_zero(M, k0):
    return spla.eigs(M, k=1, sigma=0.0, which="LM", tol=0, v0=k0)[0][0].real


def fd_gradient(F, q, h=1e-6):
    """Central differences of lambda0 from a shift-invert eigensolver.

    Moving v by h e_i changes row j of DF by ``2 h A_j[i, :]``.
    """
    DF = q.spectrum.jacobian
    grad = np.empty(F.n)
    for i in range(F.n):
        dM = 2.0 * h * F.A[:, i, :]
        grad[i] = (_lambda_near_zero(DF + dM, q.k) - _lambda_near_zero(DF - dM, q.k)) / (2 * h)
    return grad


def test_2_normal_consistency():
    start = time.perf_counter()
    worst_res = worst_angle = 0.0
    for name in NETWORKS:
        F = network(name)[1]
        for q in ssb_points(name, 10):
            DF = q.spectrum.jacobian
            worst_res = max(worst_res, np.linalg.norm(DF.T @ q.N_P) / np.linalg.norm(DF))
            worst_angle = max(worst_angle, angle(fd_gradient(F, q), q.N_V))
    elapsed = time.perf_counter() - start
    ok = worst_res <= 1e-10 and worst_angle <= 1e-5 and elapsed < 120
    verdict(2, ok, f"|DF^T N_P|/|DF| {worst_res:.1e}, FD angle {worst_angle:.1e} rad, {elapsed:.0f}s")


def test_3_curvature_cross_validation():
    start = time.perf_counter()
    F = network("ieee14")[1]
    rng = np.random.default_rng(3)
    worst_kn = worst_res = worst_rel = 0.0
    for q in ssb_points("ieee14", 5):
        forms, W = cv.weingarten_voltage(F, q)
        T = forms.basis
        for _ in range(20):
            x = unit(rng.standard_normal(T.shape[1]))
            u = T @ x
            worst_kn = max(worst_kn, abs(cv.normal_curvature_along(F, q, u) - np.dot(T @ (W.W @ x), u)))
        pairs = cv.principal_curvatures(forms)
        for kappa, d in pairs:
            y = T.T @ d
            worst_res = max(worst_res, np.linalg.norm(forms.L @ y - kappa * forms.g @ y))
        kmax = pairs[0][0]
        worst_rel = max(worst_rel, abs(rayleigh_oracle(F, q, rng) - kmax) / abs(kmax))
    elapsed = time.perf_counter() - start
    ok = worst_kn <= 1e-6 and worst_res <= 1e-9 and worst_rel <= 0.02 and elapsed < 300
    verdict(3, ok, f"Meunier vs W {worst_kn:.1e}, eigen-residual {worst_res:.1e}, "
                   f"Rayleigh rel {worst_rel:.1e}, {elapsed:.0f}s")


def test_4_fold_exactness_m2():
    F = map_m2()
    fold = ssb.ssb_point(F, [1.0, 1.0])
    s = inv.SplitState(fold, 0.0)
    h = 1e-3
    pdot = np.array([1.0, -1.0])
    worst_step = 0.0
    for j in range(1, 101):
        s, rep = inv.step_kernel_simplified(F, s, pdot, h)
        worst_step = max(worst_step, np.linalg.norm(s.reconstruct() - m2_preimage(j * h)))
    worst_d = 0.0
    for t in (0.0, 1e-12, 1e-8, 1e-4, 0.01, 0.5, 1.0):
        d = inv.update_distance(F, inv.SplitState(fold, 0.0), [2.0 + t, 2.0 - t])
        worst_d = max(worst_d, abs(d - np.sqrt(t)))
    ok = worst_step <= 1e-8 and worst_d <= 1e-10
    verdict(4, ok, f"per-step error {worst_step:.1e}, |d - sqrt(t)| {worst_d:.1e}")


def test_5_round_trip_protocol():
    start = time.perf_counter()
    rows, ok = [], True
    for i, name in enumerate(NETWORKS):
        case, F, base = network(name)
        v0, u, _ = inv.fold_curve(F, rng_for(0, i), base)
        for h in (1e-9, 1e-7):
            cell = {}
            for method in inv.METHODS:
                try:
                    cell[method] = inv.round_trip(F, v0, u, h, 100, method).mean_error
                except (inv.InversionError, ArithmeticError) as exc:
                    cell[method] = None
                    print(f"{name} h={h:g} {method} failed: {exc}")
            done = all(e is not None for e in cell.values())
            row_ok = done and max(cell.values()) <= 1e-3 and cell["kernel-linear"] <= cell["kernel"]
            ok &= row_ok
            rows.append((case.n_bus, h, cell, row_ok))
    elapsed = time.perf_counter() - start
    print("\nbuses  step    kernel      kernel-linear  normal")
    for n_bus, h, cell, row_ok in rows:
        vals = "  ".join("   failed   " if cell[m] is None else f"{cell[m]:.3e}   " for m in inv.METHODS)
        print(f"{n_bus:5d}  {h:.0e}  {vals}{'' if row_ok else ' <- FAIL'}")
    ok &= elapsed < 1800
    verdict(5, ok, f"{len(rows)} rows x 3 methods complete, mean <= 1e-3, "
                   f"kernel-linear <= kernel in every row, {elapsed:.0f}s")


def test_6_projection_correctness():
    start = time.perf_counter()
    r = pj.project_point(map_m2(), [2.0, 0.5])
    m2_err = np.linalg.norm(r.q.q - [1.25, 1.25])
    worst_orth = angle([2.0, 0.5] - r.q.q, r.q.N_V)
    F = network("ieee14")[1]
    rng = np.random.default_rng(6)
    worst_brute = 0.0
    for q in ssb_points("ieee14", 5):
        v = q.q + 0.02 * unit(outward(q) + 0.5 * unit(rng.standard_normal(F.n)))
        res = pj.project_point(F, v)
        worst_brute = max(worst_brute, np.linalg.norm(res.q.q - patch_minimizer(F, q, v)))
        worst_orth = max(worst_orth, angle(v - res.q.q, res.q.N_V))
    elapsed = time.perf_counter() - start
    ok = m2_err <= 1e-8 and worst_brute <= 1e-5 and worst_orth <= 1e-7 and elapsed < 300
    verdict(6, ok, f"M2 foot error {m2_err:.1e}, vs brute force {worst_brute:.1e}, "
                   f"orthogonality {worst_orth:.1e} rad, {elapsed:.0f}s")


def test_7_curve_projection_tracing():
    start = time.perf_counter()
    F = network("ieee14")[1]
    rng = np.random.default_rng(7)
    q = ssb_points("ieee14", 2)[1]
    v0 = q.q + 0.01 * outward(q)
    u = ssb.tangent_basis(q) @ unit(rng.standard_normal(F.n - 1))
    curve = [(t, v0 + t * u + 0.1 * t * outward(q)) for t in np.linspace(0.0, 0.02, 101)]
    traced = pj.trace_curve_projection(F, curve, reanchor=10)
    worst = max(np.linalg.norm(res.q.q - pj.project_point(F, v, check_closest=False).q.q)
                for (_, v), res in zip(curve, traced))
    # synthetic shape operators placed so that d times the largest oriented curvature exceeds one
    fold = ssb.ssb_point(map_m2(), [1.0, 1.0])
    accepted_bad = 0
    for _ in range(200):
        kappas = list(rng.uniform(-3, 3, size=int(rng.integers(1, 6))))
        d = rng.choice([-1.0, 1.0]) * rng.uniform(0.01, 5)
        if max(d * k for k in kappas) > 1 and pj.local_closest_check(fold, d, _w(kappas)):
            accepted_bad += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and accepted_bad == 0 and elapsed < 300
    verdict(7, ok, f"trace vs independent {worst:.1e} over {len(curve) - 1} steps, "
                   f"focal violations accepted {accepted_bad}, {elapsed:.0f}s")


def test_8_inverse_jet():
    start = time.perf_counter()
    F2 = map_m2()
    v0 = np.array([1.5, 0.5])
    p0 = F2(v0)
    assert np.allclose(m2_branch_inverse(p0), v0)
    m2_err = np.abs(invcalc.inverse_hessian(F2, v0).H_inv - m2_inverse_hessian(p0)).max()
    F, base = network("ieee14")[1], network("ieee14")[2]
    rng = np.random.default_rng(8)
    worst_sym = 0.0
    for _ in range(3):
        H = invcalc.inverse_hessian(F, base + 0.05 * rng.standard_normal(F.n)).H_inv
        worst_sym = max(worst_sym, np.abs(H - H.transpose(0, 2, 1)).max())
    elapsed = time.perf_counter() - start
    ok = m2_err <= 1e-6 and worst_sym <= 1e-8 and elapsed < 60
    verdict(8, ok, f"M2 closed form {m2_err:.1e}, ieee14 asymmetry {worst_sym:.1e}, {elapsed:.1f}s")


def test_9_performance_envelope():
    F, base = network("ieee118")[1], network("ieee118")[2]
    v0, u, _ = inv.fold_curve(F, rng_for(0, 3), base)
    s = inv.init_split_kernel(F, v0, switch_threshold=0.0)
    pdot = F.jacobian(v0) @ u
    start = time.perf_counter()
    _, rep = inv.step_kernel_simplified(F, s, pdot, 1e-9)
    elapsed = time.perf_counter() - start
    target = "within" if elapsed <= 10 else "outside"
    verdict(9, rep.accepted and elapsed <= 300,
            f"ieee118 kernel step {elapsed:.3f}s (<= 300 s required; {target} the 10 s target)")


def test_10_regularity_detection():
    origin_dim = ssb.regularity(map_m2(), [0.0, 0.0])[0]
    dims = [ssb.regularity(network(name)[1], q.q)[0] for name in NETWORKS for q in ssb_points(name, 10)]
    ok = origin_dim == 2 and all(d == 1 for d in dims)
    verdict(10, ok, f"M2 origin kernel_dim {origin_dim}, "
                    f"{sum(d == 1 for d in dims)}/{len(dims)} archive SSB points with kernel_dim 1")

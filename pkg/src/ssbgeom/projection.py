"""Orthogonal projection of voltage points onto the SSB.

A point v is projected by following the family of isosurfaces lambda0 = t from
t = lambda0(v) down to t = 0.  Along the way r(t) is the closest point to v on
the level set, so ``v - r = d grad lambda0(r)``; differentiating in t gives a
linear system for (r', d').  It is integrated with the Dormand-Prince pair
(scipy's RK45) one step at a time, and after every step a corrector pulls r
back onto the level set and onto the normal line through v.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45

from .curvature import WeingartenMap, weingarten_voltage
from .quadmap import QuadraticMap
from .ssb import (
    SsbError,
    SsbPoint,
    eigen_derivatives,
    lambda_hessian,
    newton_on_line,
    spectral_kernel,
    ssb_point,
)

__all__ = [
    "ProjectionError",
    "ProjectionResult",
    "lambda_value",
    "project_point",
    "trace_curve_projection",
    "local_closest_check",
]

RTOL = 1e-8
ATOL = 1e-10
CORRECTOR_TOL = 1e-12
CORRECTOR_MAX_ITER = 100


class ProjectionError(ArithmeticError):
    pass


@dataclass
class ProjectionResult:
    """Projection ``q`` of ``v`` with ``v - q = d N_V(q)``.

    ``corrector_iterations`` holds one count per accepted integration step.
    """

    q: SsbPoint
    d: float
    locally_closest: bool | None = None
    trace: list | None = field(default=None, repr=False)
    corrector_iterations: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        out = {
            "q": self.q.q.tolist(),
            "d": self.d,
            "N_V": self.q.N_V.tolist(),
            "locally_closest": self.locally_closest,
            "steps": len(self.corrector_iterations),
            "corrector_iterations": list(self.corrector_iterations),
        }
        if self.trace is not None:
            out["trace"] = [{"t": t, "r": r.tolist()} for t, r in self.trace]
        return out


def lambda_value(F: QuadraticMap, v) -> float:
    """Smallest-magnitude eigenvalue of DF(v); raises SpectrumError if complex."""
    return spectral_kernel(F, v).lambda0


def _rhs(F, n):
    def f(t, y):
        r, d = y[:n], y[n]
        der = eigen_derivatives(F, r)
        H = lambda_hessian(F, r, der)
        g = der.grad_lambda
        M = np.zeros((n + 1, n + 1))
        M[:n, :n] = d * H + np.eye(n)
        M[:n, n] = g
        M[n, :n] = g
        b = np.zeros(n + 1)
        b[n] = 1.0
        try:
            return np.linalg.solve(M, b)
        except np.linalg.LinAlgError:
            raise ProjectionError("projection ODE matrix is singular (focal point reached)") from None
    return f


def _correct(F, r, v, t, tol=CORRECTOR_TOL, max_iter=CORRECTOR_MAX_ITER):
    """Closest point to v on {lambda0 = t} near r: tangential descent plus Newton restore.

    Returns (r, iterations, grad) where iterations counts updates above tolerance.
    """
    scale = tol * max(1.0, np.linalg.norm(v))
    iters = 0
    for _ in range(max_iter + 1):
        der = eigen_derivatives(F, r)
        g = der.grad_lambda
        gg = np.dot(g, g)
        if gg == 0.0:
            raise ProjectionError("gradient of lambda0 vanished")
        e = r - v
        upd = -(e - g * (np.dot(e, g) / gg)) - g * ((der.spectrum.lambda0 - t) / gg)
        if np.linalg.norm(upd) <= scale:
            return r, iters, g
        if iters == max_iter:
            break
        r = r + upd
        iters += 1
    return r, iters, g


def project_point(F: QuadraticMap, v, keep_trace: bool = False, check_closest: bool = True,
                  min_step_ratio: float = 1e-4, rtol: float = RTOL, atol: float = ATOL,
                  max_steps: int = 10000) -> ProjectionResult:
    """Locally closest SSB point to ``v``.

    The signed distance is ``d = (v - q) . N_V(q)``.
    """
    v = np.array(v, dtype=float)
    n = F.n
    spec = spectral_kernel(F, v)
    s = spec.lambda0
    trace = [(s, v.copy())] if keep_trace else None
    iterations = []
    if abs(s) > 1e-10 * spec.scale:
        f = _rhs(F, n)
        h_min = min_step_ratio * abs(s)
        t, y = s, np.append(v, 0.0)
        h = None
        for _ in range(max_steps):
            if t == 0.0:
                break
            first = None if h is None else min(max(h, h_min), abs(t))
            solver = RK45(f, t, y, 0.0, first_step=first, rtol=rtol, atol=atol)
            msg = solver.step()
            if solver.status == "failed":
                raise ProjectionError(f"integration failed: {msg}")
            t = 0.0 if abs(solver.t) <= 1e-14 * abs(s) else solver.t
            r, it, g = _correct(F, solver.y[:n], v, t)
            iterations.append(it)
            y = np.append(r, np.dot(g, v - r) / np.dot(g, g))
            h = getattr(solver, "h_abs", solver.step_size)
            if keep_trace:
                trace.append((t, r.copy()))
        else:
            raise ProjectionError(f"projection did not reach the SSB in {max_steps} steps")
        v_on = y[:n]
    else:
        v_on = v
    try:
        q = ssb_point(F, v_on)
    except SsbError as exc:
        raise ProjectionError(f"projected point is not on the SSB: {exc}") from None
    d = float(np.dot(v - q.q, q.N_V))
    closest = None
    if check_closest:
        _, W = weingarten_voltage(F, q)
        closest = local_closest_check(q, d, W)
    return ProjectionResult(q, d, closest, trace, iterations)


def local_closest_check(q: SsbPoint, d: float, W: WeingartenMap) -> bool:
    """Necessary condition for q to be the closest SSB point to ``q + d N_V``.

    Principal curvatures are oriented toward the side of the point; the
    distance must stay below the smallest positive radius of curvature.
    """
    kappa = np.linalg.eigvals(W.W).real * np.sign(d) if d != 0 else np.zeros(1)
    kmax = float(np.max(kappa)) if kappa.size else 0.0
    if kmax <= 0.0:
        return True
    return abs(d) < 1.0 / kmax


def _tangent_velocity(F, q, d, vdot):
    _, W = weingarten_voltage(F, q)
    N = q.N_V
    n = F.n
    M = d * W.dn_ambient() + np.eye(n)
    rhs = vdot - np.dot(vdot, N) * N
    try:
        qdot = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        raise ProjectionError("d DN_V + I is singular: distance reached a focal value") from None
    if np.linalg.cond(M) > 1e12:
        raise ProjectionError("d DN_V + I is singular: distance reached a focal value")
    return qdot


def _onto_ssb(F, x, q_ref):
    t, _ = newton_on_line(F, x, q_ref.N_V, k_ref=q_ref.k, kt_ref=q_ref.N_P)
    return ssb_point(F, x + t * q_ref.N_V, k_ref=q_ref.k, kt_ref=q_ref.N_P)


def trace_curve_projection(F: QuadraticMap, v_curve, q0: SsbPoint | None = None,
                           reanchor: int = 10) -> list[ProjectionResult]:
    """Follow the projection of a moving point ``v(t)``.

    ``v_curve`` is a sequence of ``(t, v)`` samples.  Between samples the foot
    point moves by ``(d DN_V + I) q' = v' - (v'.N_V) N_V`` (Heun step with the
    secant of v), is pulled back onto the SSB along the normal, and every
    ``reanchor`` steps is replaced by a fresh point projection.
    """
    samples = [(float(t), np.asarray(v, dtype=float)) for t, v in v_curve]
    if not samples:
        return []
    t0, v0 = samples[0]
    if q0 is None:
        first = project_point(F, v0, check_closest=False)
    else:
        first = ProjectionResult(q0, float(np.dot(v0 - q0.q, q0.N_V)))
    results = [first]
    q, d = first.q, first.d
    for j in range(1, len(samples)):
        (ta, va), (tb, vb) = samples[j - 1], samples[j]
        h = tb - ta
        if h == 0.0:
            raise ValueError("curve parameter must be strictly monotone")
        vdot = (vb - va) / h
        if reanchor and j % reanchor == 0:
            res = project_point(F, vb, check_closest=False)
            q, d = res.q, res.d
        else:
            k1 = _tangent_velocity(F, q, d, vdot)
            qp = _onto_ssb(F, q.q + h * k1, q)
            dp = float(np.dot(vb - qp.q, qp.N_V))
            k2 = _tangent_velocity(F, qp, dp, vdot)
            q = _onto_ssb(F, q.q + 0.5 * h * (k1 + k2), q)
            d = float(np.dot(vb - q.q, q.N_V))
        results.append(ProjectionResult(q, d))
    return results

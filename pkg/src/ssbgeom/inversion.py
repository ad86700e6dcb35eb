"""Local inversion of F near the SSB through the split ``v = q + d w(q)``.

q lies on the SSB and w is either the unit kernel k(q) or the voltage normal
N_V(q).  In kernel mode ``F(q + d k) = F(q) + (d^2/2) d^2F(k, k)``, so the
fold reduces to a square root in d and the rest of the inversion stays well
conditioned.  Steps along a power-space curve are explicit Euler predictions
of (q, k, d) followed by a corrector that restores the split.

The distance unknown of the kernel-mode systems is ``e = d d'`` (or a change of
``d^2/2``) rather than ``d'`` itself; this keeps the matrices nonsingular at
``d = 0`` where the fold sits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curvature import normal_differential
from .projection import project_point
from .quadmap import QuadraticMap
from .ssb import SpectrumError, SsbError, SsbPoint, find_ssb_ray, newton_on_line, spectral_kernel, ssb_point

__all__ = [
    "InversionError",
    "SplitState",
    "StepReport",
    "InversionResult",
    "init_split_kernel",
    "init_split_normal",
    "step_kernel_simplified",
    "step_full",
    "update_distance",
    "reproject",
    "should_switch",
    "invert_curve",
    "fold_curve",
    "round_trip",
    "METHODS",
]

MAX_CONDITION = 1e14
SWITCH_THRESHOLD = 0.1
METHODS = ("kernel", "kernel-linear", "normal")


class InversionError(ArithmeticError):
    pass


@dataclass
class SplitState:
    """``v = q + d w`` with ``w = k(q)`` (kernel mode) or ``w = N_V(q)`` (normal mode).

    ``sign`` is the orientation used when |d| is re-derived from a square
    root; it follows the sign of d whenever d is nonzero.
    """

    q: SsbPoint
    d: float
    mode: str = "kernel"
    sign: float = 1.0

    def __post_init__(self):
        if self.mode not in ("kernel", "normal"):
            raise ValueError(f"unknown split mode {self.mode!r}")
        if self.d != 0.0:
            self.sign = float(np.sign(self.d))

    @property
    def w(self) -> np.ndarray:
        return self.q.k if self.mode == "kernel" else self.q.N_V

    def reconstruct(self) -> np.ndarray:
        return self.q.q + self.d * self.w


@dataclass(frozen=True)
class StepReport:
    accepted: bool
    residual: float
    mode_switched: bool = False
    condition_estimate: float = float("nan")


def _tolerance(p):
    return 1e-9 * (1.0 + np.linalg.norm(p))


def _signed_root(D, sign):
    """d from d^2 = D; a negative D means d has passed through zero."""
    if D < 0:
        return -sign * np.sqrt(-D), -sign
    return sign * np.sqrt(D), sign


def _kernel_matrix(F, q, k, d, full):
    """Linearization of ``(F(q) + d DF(q) k + d^2/2 d2F(k,k), DF(q) k, |k|^2/2)``.

    Unknowns are (dq, dk, e) with e the change of d^2/2.  The simplified form
    drops the contributions of the linear term ``d DF(q) k``, which vanish on
    the SSB.
    """
    n = F.n
    DF = F.jacobian(q)
    Hk = F.hessian_matrix(k)
    M = np.zeros((2 * n + 1, 2 * n + 1))
    M[:n, :n] = DF
    M[:n, n:2 * n] = d * d * Hk
    M[:n, 2 * n] = F.hessian_apply(k, k)
    if full:
        M[:n, :n] += d * Hk
        M[:n, n:2 * n] += d * DF
        if d != 0.0:
            M[:n, 2 * n] += (DF @ k) / d
    M[n:2 * n, :n] = Hk
    M[n:2 * n, n:2 * n] = DF
    M[2 * n, n:2 * n] = k
    return M, DF


def _solve(M, rhs):
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise InversionError(f"split system condition estimate {cond:.3e} exceeds {MAX_CONDITION:g}")
    return np.linalg.solve(M, rhs), cond


def _kernel_state(F, q, d, sign, k_ref):
    try:
        pt = ssb_point(F, q, tol=1e-8, k_ref=k_ref)
    except (SsbError, SpectrumError) as exc:
        raise InversionError(f"split point left the SSB: {exc}") from None
    return SplitState(pt, float(d), "kernel", sign)


def _newton_split(F, q, k, d, target, max_iter=50):
    """Solve ``q + d k = target, DF(q) k = 0, |k| = 1`` by Newton."""
    n = F.n
    for _ in range(max_iter):
        DF = F.jacobian(q)
        Hk = F.hessian_matrix(k)
        r = np.concatenate([target - q - d * k, -(DF @ k), [0.5 * (1.0 - k @ k)]])
        J = np.zeros((2 * n + 1, 2 * n + 1))
        J[:n, :n] = np.eye(n)
        J[:n, n:2 * n] = d * np.eye(n)
        J[:n, 2 * n] = k
        J[n:2 * n, :n] = Hk
        J[n:2 * n, n:2 * n] = DF
        J[2 * n, n:2 * n] = k
        try:
            x = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            raise InversionError("split initialization system is singular") from None
        q = q + x[:n]
        k = k + x[n:2 * n]
        d = d + x[2 * n]
        if np.linalg.norm(x) <= 1e-15 * (1.0 + np.linalg.norm(target)):
            break
    else:
        raise InversionError(f"split initialization did not converge in {max_iter} iterations")
    return q, k / np.linalg.norm(k), d


def init_split_kernel(F: QuadraticMap, v, max_iter: int = 500,
                      switch_threshold: float = SWITCH_THRESHOLD) -> SplitState:
    """Split ``v = q + d k(q)`` with q on the SSB.

    A seed is found by moving along the right eigenvector of DF(v) until
    lambda0 vanishes; Newton on ``q + d k = v, DF(q) k = 0, |k| = 1`` then makes
    v - q collinear with the kernel.

    Raises
    ------
    InversionError
        On non-convergence, or when the kernel is nearly tangent to the SSB
        (use :func:`init_split_normal` instead).
    """
    v = np.array(v, dtype=float)
    spec = spectral_kernel(F, v)
    if abs(spec.lambda0) <= 1e-10 * spec.scale:
        q = ssb_point(F, v)
        state = SplitState(q, 0.0, "kernel")
    else:
        try:
            t, _ = newton_on_line(F, v, spec.k, k_ref=spec.k, kt_ref=spec.ktilde)
        except SsbError as exc:
            raise InversionError(f"no SSB seed along the kernel direction: {exc}") from None
        q0 = v + t * spec.k
        k0 = spectral_kernel(F, q0, k_ref=spec.k).k
        q, k, d = _newton_split(F, q0, k0, -t, v, max_iter)
        pt = ssb_point(F, q, tol=1e-8, k_ref=k)
        d = d if np.dot(pt.k, k) > 0 else -d
        state = SplitState(pt, float(d), "kernel")
        off = v - pt.q
        if np.linalg.norm(off) > 0:
            perp = off - np.dot(off, pt.k) * pt.k
            if np.linalg.norm(perp) > 1e-8 * np.linalg.norm(off):
                raise InversionError("v - q is not collinear with the kernel")
    if abs(np.dot(state.q.k, state.q.N_V)) < switch_threshold:
        raise InversionError("kernel is nearly tangent to the SSB; use the normal split")
    return state


def init_split_normal(F: QuadraticMap, v) -> SplitState:
    """Split ``v = q + d N_V(q)`` by orthogonal projection onto the SSB."""
    res = project_point(F, v, check_closest=False)
    return SplitState(res.q, res.d, "normal")


def update_distance(F: QuadraticMap, s: SplitState, p_target, use_linear: bool = False) -> float:
    """Distance that makes ``F(q + d k)`` match ``p_target`` along the fold.

    Without the linear term ``|d| = sqrt(2 |p - F(q)| / |d2F(k,k)|)``.  With it,
    d minimizes ``|F(q) + d DF(q) k + d^2/2 d2F(k,k) - p|``.  The sign is the
    one carried by the state.
    """
    if s.mode != "kernel":
        raise ValueError("update_distance applies to kernel mode")
    q, k = s.q.q, s.q.k
    hkk = F.hessian_apply(k, k)
    nh = np.linalg.norm(hkk)
    if nh <= 1e-12 * max(1.0, s.q.spectrum.scale):
        raise InversionError("d2F(k, k) vanishes: degenerate fold")
    r = np.asarray(p_target, dtype=float) - F(q)
    d = s.sign * np.sqrt(2.0 * np.linalg.norm(r) / nh)
    if use_linear:
        a = s.q.spectrum.jacobian @ k
        for _ in range(20):
            res = d * a + 0.5 * d * d * hkk - r
            jac = a + d * hkk
            jj = np.dot(jac, jac)
            if jj == 0.0:
                break
            step = np.dot(jac, res) / jj
            d -= step
            if abs(step) <= 1e-16 * max(abs(d), 1e-300):
                break
    return float(d)


def _line_shift(F, s, x, w):
    try:
        t, _ = newton_on_line(F, x, w, k_ref=s.q.k, kt_ref=s.q.N_P)
    except (SsbError, SpectrumError) as exc:
        raise InversionError(f"re-projection onto the SSB failed: {exc}") from None
    return t


def reproject(F: QuadraticMap, s: SplitState) -> SplitState:
    """Move q along w back onto the SSB, keeping ``q + d w`` fixed to first order."""
    w = s.w
    t = _line_shift(F, s, s.q.q, w)
    if s.mode == "kernel":
        return _kernel_state(F, s.q.q + t * w, s.d - t, s.sign, s.q.k)
    q = ssb_point(F, s.q.q + t * w, tol=1e-8, k_ref=s.q.k, kt_ref=s.q.N_P)
    return SplitState(q, s.d - t, "normal", s.sign)


def should_switch(s: SplitState, threshold: float = SWITCH_THRESHOLD) -> bool:
    """True when a kernel-mode split has a kernel nearly tangent to the SSB."""
    return s.mode == "kernel" and abs(np.dot(s.q.k, s.q.N_V)) < threshold


def _kernel_step(F, s, pdot, h, p_target, full):
    n = F.n
    pdot = np.asarray(pdot, dtype=float)
    q, k, d = s.q.q, s.q.k, s.d
    if p_target is None:
        p_target = F(s.reconstruct()) + h * pdot
    M, _ = _kernel_matrix(F, q, k, d, full)
    x, cond = _solve(M, np.concatenate([pdot, np.zeros(n + 1)]))
    qp = q + h * x[:n]
    kp = k + h * x[n:2 * n]
    kp /= np.linalg.norm(kp)
    dp, sign = _signed_root(d * d + 2.0 * h * x[2 * n], s.sign)
    # back onto the SSB along the predicted kernel, keeping v
    pred = SplitState(s.q, dp, "kernel", sign)
    t = _line_shift(F, pred, qp, kp)
    state = _kernel_state(F, qp + t * kp, dp - t, sign, kp)
    if full:
        state = _newton_correct(F, state, p_target)
    else:
        state.d = update_distance(F, state, p_target)
    res = float(np.linalg.norm(F(state.reconstruct()) - p_target))
    return state, StepReport(res <= _tolerance(p_target), res, False, cond)


def _newton_correct(F, s, p_target, max_iter=8):
    """Newton on the full second-order split residual, linear term included."""
    n = F.n
    q, k, d, sign = s.q.q, s.q.k, s.d, s.sign
    last = np.inf
    for _ in range(max_iter):
        DF = F.jacobian(q)
        r1 = p_target - (F(q) + d * (DF @ k) + 0.5 * d * d * F.hessian_apply(k, k))
        r = np.concatenate([r1, -(DF @ k), [0.5 * (1.0 - k @ k)]])
        nr = np.linalg.norm(r)
        if nr >= last:
            break
        last = nr
        M, _ = _kernel_matrix(F, q, k, d, True)
        x = np.linalg.solve(M, r)
        q = q + x[:n]
        k = k + x[n:2 * n]
        d, sign = _signed_root(d * d + 2.0 * x[2 * n], sign)
        if np.linalg.norm(x[:2 * n]) <= 1e-16 * (1.0 + np.linalg.norm(q)):
            break
    return _kernel_state(F, q, d, sign, k)


def step_kernel_simplified(F: QuadraticMap, s: SplitState, pdot, h: float, p_target=None):
    """One kernel-mode step without the linear Taylor term.

    Solves ``DF q' + d^2 d2F(k, k') + e d2F(k, k) = p'``, ``d2F(k, q') + DF k' = 0``,
    ``k.k' = 0`` for (q', k', e = d d'), advances by ``h``, re-projects onto
    the SSB along k and re-derives d with :func:`update_distance`.

    Returns
    -------
    (SplitState, StepReport)
    """
    if s.mode != "kernel":
        raise ValueError("step_kernel_simplified requires kernel mode")
    return _kernel_step(F, s, pdot, h, p_target, full=False)


def _normal_matrix(F, s):
    n = F.n
    q, N, d = s.q.q, s.q.N_V, s.d
    Dv = F.jacobian(q + d * N)
    DN = normal_differential(F, s.q)
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = Dv @ (np.eye(n) + d * DN)
    M[:n, n] = Dv @ N
    M[n, :n] = N
    return M


def _normal_state(F, s, x):
    t = _line_shift(F, s, x, s.q.N_V)
    q = ssb_point(F, x + t * s.q.N_V, tol=1e-8, k_ref=s.q.k, kt_ref=s.q.N_P)
    return q, t


def _normal_step(F, s, pdot, h, p_target, max_iter=6):
    n = F.n
    pdot = np.asarray(pdot, dtype=float)
    if p_target is None:
        p_target = F(s.reconstruct()) + h * pdot
    x, cond = _solve(_normal_matrix(F, s), np.append(pdot, 0.0))
    q, t = _normal_state(F, s, s.q.q + h * x[:n])
    state = SplitState(q, s.d + h * x[n] - t, "normal", s.sign)
    for _ in range(max_iter):
        r = p_target - F(state.reconstruct())
        if np.linalg.norm(r) <= 1e-14 * (1.0 + np.linalg.norm(p_target)):
            break
        x = np.linalg.solve(_normal_matrix(F, state), np.append(r, 0.0))
        q, t = _normal_state(F, state, state.q.q + x[:n])
        state = SplitState(q, state.d + x[n] - t, "normal", state.sign)
    res = float(np.linalg.norm(F(state.reconstruct()) - p_target))
    return state, StepReport(res <= _tolerance(p_target), res, False, cond)


def step_full(F: QuadraticMap, s: SplitState, pdot, h: float, p_target=None):
    """One step with the complete second-order expansion ``F(q + d w)``.

    Kernel mode keeps the linear term ``d DF(q) k`` in both the predictor and
    a Newton corrector on the split residual.  Normal mode substitutes
    ``w' = DN_V q'`` and solves for (q', d') with ``N_V . q' = 0``.
    """
    if s.mode == "kernel":
        return _kernel_step(F, s, pdot, h, p_target, full=True)
    return _normal_step(F, s, pdot, h, p_target)


@dataclass
class InversionResult:
    v_samples: np.ndarray
    residuals: np.ndarray
    reports: list = field(repr=False)
    mode_switches: int = 0
    errors: np.ndarray | None = None

    @property
    def mean_error(self) -> float | None:
        return None if self.errors is None else float(np.mean(self.errors))


def invert_curve(F: QuadraticMap, p_samples, v0, mode: str = "kernel", use_linear_term: bool = False,
                 step: float = 1.0, v_reference=None, switch_threshold: float = SWITCH_THRESHOLD,
                 state: SplitState | None = None) -> InversionResult:
    """Follow the preimage of ``p_samples`` (spaced by ``step`` in the curve parameter).

    The velocity between samples is the secant.  A kernel-mode run switches
    to the normal split when the kernel turns nearly tangent.  With
    ``v_reference`` the distances to the reference voltages are returned in
    ``errors`` (the first sample is excluded from the mean).
    """
    P = np.asarray(p_samples, dtype=float)
    if mode not in ("kernel", "normal"):
        raise ValueError(f"unknown mode {mode!r}")
    if state is None:
        state = init_split_kernel(F, v0, switch_threshold=0.0) if mode == "kernel" else init_split_normal(F, v0)
    out = [state.reconstruct()]
    residuals = [float(np.linalg.norm(F(out[0]) - P[0]))]
    reports = []
    switches = 0
    for j in range(len(P) - 1):
        pdot = (P[j + 1] - P[j]) / step
        switched = False
        if should_switch(state, switch_threshold):
            state = init_split_normal(F, state.reconstruct())
            switched = True
            switches += 1
        if state.mode == "kernel" and not use_linear_term:
            state, rep = step_kernel_simplified(F, state, pdot, step, P[j + 1])
        else:
            state, rep = step_full(F, state, pdot, step, P[j + 1])
        if switched:
            rep = StepReport(rep.accepted, rep.residual, True, rep.condition_estimate)
        if not rep.accepted:
            raise InversionError(f"step {j + 1} rejected: residual {rep.residual:.3e}")
        reports.append(rep)
        out.append(state.reconstruct())
        residuals.append(rep.residual)
    V = np.array(out)
    errors = None
    if v_reference is not None:
        ref = np.asarray(v_reference, dtype=float)
        errors = np.linalg.norm(V - ref, axis=1)[1:]
    return InversionResult(V, np.array(residuals), reports, switches, errors)


def fold_curve(F: QuadraticMap, rng: np.random.Generator, origin, offset: float = 1e-4,
               min_transversality: float = SWITCH_THRESHOLD, attempts: int = 50):
    """Random straight voltage curve starting just off the SSB.

    A random ray from ``origin`` locates an SSB point q0 with a transversal
    kernel; the curve starts at ``q0 + offset k(q0)`` with a random unit
    direction.

    Returns
    -------
    (v0, u, q0)
    """
    origin = np.asarray(origin, dtype=float)
    for _ in range(attempts):
        r = rng.standard_normal(F.n)
        try:
            q0 = find_ssb_ray(F, origin, r / np.linalg.norm(r))
        except (SsbError, SpectrumError, np.linalg.LinAlgError):
            continue
        if abs(np.dot(q0.k, q0.N_V)) < min_transversality:
            continue
        u = rng.standard_normal(F.n)
        return q0.q + offset * q0.k, u / np.linalg.norm(u), q0
    raise InversionError(f"no transversal SSB point found in {attempts} random rays")


def round_trip(F: QuadraticMap, v0, u, h: float, steps: int, method: str) -> InversionResult:
    """Map ``v0 + t u`` (t = 0, h, ..., steps h) through F and invert it back.

    ``method`` is one of ``kernel`` (no linear term), ``kernel-linear`` or
    ``normal``; ``mean_error`` is the average distance between the original
    and the recovered voltages.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    v0 = np.asarray(v0, dtype=float)
    V = v0 + np.outer(np.arange(steps + 1) * h, u)
    P = np.array([F(v) for v in V])
    mode = "normal" if method == "normal" else "kernel"
    return invert_curve(F, P, v0, mode=mode, use_linear_term=(method == "kernel-linear"),
                        step=h, v_reference=V)

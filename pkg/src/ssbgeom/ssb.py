"""Locating the solution space boundary and its first-order spectral geometry.

The SSB is the zero set of lambda0(v), the real eigenvalue of DF(v) with the
smallest magnitude.  Derivatives of lambda0 and of the left eigenvector come
from differentiating the eigenpair equations; every order shares the bordered
matrix ``[[DF^T - lambda0 I, -kt], [kt^T, 0]]``, which is factored once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .quadmap import QuadraticMap

__all__ = [
    "SpectrumError",
    "SsbError",
    "SsbSpectrum",
    "SsbPoint",
    "EigenDerivatives",
    "canonical_sign",
    "spectral_kernel",
    "eigen_derivatives",
    "eigen_second_derivatives",
    "lambda_hessian",
    "normal_voltage",
    "ssb_point",
    "tangent_basis",
    "regularity",
    "find_ssb_ray",
    "newton_on_line",
    "det_slice",
]

SSB_TOL = 1e-10
RESIDUAL_TOL = 1e-10


class SpectrumError(ArithmeticError):
    """The smallest-magnitude eigenvalue is complex, not simple, or the bordered system is singular."""


class SsbError(RuntimeError):
    """An SSB point could not be located or fails the membership test."""


def canonical_sign(x: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Flip ``x`` so that its first component above ``tol * max|x|`` is positive."""
    x = np.asarray(x, dtype=float)
    big = np.flatnonzero(np.abs(x) > tol * np.max(np.abs(x)))
    if big.size and x[big[0]] < 0:
        return -x
    return x


def _align(x, ref):
    if ref is None:
        return canonical_sign(x)
    return -x if np.dot(x, ref) < 0 else x


@dataclass(frozen=True)
class SsbSpectrum:
    """Smallest-magnitude eigenvalue of DF(v) with unit right (k) and left (ktilde) eigenvectors."""

    lambda0: float
    k: np.ndarray
    ktilde: np.ndarray
    jacobian: np.ndarray = field(repr=False)

    @property
    def scale(self) -> float:
        return float(np.linalg.norm(self.jacobian, 2))


def _bordered_newton(M, x, lam, x0, iters=3):
    """Refine a simple eigenpair of M by Newton on [(M - lam) x = 0, x0.x = 1]."""
    n = len(x)
    x = x / np.dot(x0, x)
    for _ in range(iters):
        r = M @ x - lam * x
        K = np.zeros((n + 1, n + 1))
        K[:n, :n] = M - lam * np.eye(n)
        K[:n, n] = -x
        K[n, :n] = x0
        step = np.linalg.solve(K, -np.append(r, np.dot(x0, x) - 1.0))
        x = x + step[:n]
        lam = lam + step[n]
        if np.linalg.norm(step) <= 1e-15 * (1 + abs(lam)):
            break
    return x / np.linalg.norm(x), lam


def spectral_kernel(F: QuadraticMap, v, k_ref=None, kt_ref=None) -> SsbSpectrum:
    """(lambda0, k, ktilde) of DF(v).

    Eigenvectors follow the first-nonzero-positive convention unless reference
    vectors are given, in which case their orientation is kept (continuation).

    Raises
    ------
    SpectrumError
        If the smallest-magnitude eigenvalue is complex or not simple.
    """
    DF = F.jacobian(v)
    scale = max(np.linalg.norm(DF, 2), np.finfo(float).tiny)
    w, vl, vr = sla.eig(DF, left=True, right=True)
    i = int(np.argmin(np.abs(w)))
    lam = w[i]
    if abs(lam.imag) > 1e-12 * scale:
        raise SpectrumError(f"smallest-magnitude eigenvalue {lam:.6g} is complex")
    others = np.delete(w, i)
    if others.size and np.min(np.abs(others - lam)) <= 1e-10 * scale:
        raise SpectrumError(f"smallest-magnitude eigenvalue {lam.real:.6g} is not simple")
    k0 = np.real(vr[:, i])
    kt0 = np.real(vl[:, i])
    k, lam_r = _bordered_newton(DF, k0, lam.real, k0 / np.linalg.norm(k0))
    kt, _ = _bordered_newton(DF.T, kt0, lam_r, kt0 / np.linalg.norm(kt0))
    k = _align(k, k_ref)
    kt = _align(kt, kt_ref)
    res_r = np.linalg.norm(DF @ k - lam_r * k)
    res_l = np.linalg.norm(DF.T @ kt - lam_r * kt)
    if max(res_r, res_l) > RESIDUAL_TOL * scale:
        raise SpectrumError(f"eigenpair residual {max(res_r, res_l):.3e} above tolerance")
    return SsbSpectrum(float(lam_r), k, kt, DF)


@dataclass(frozen=True)
class EigenDerivatives:
    """First derivatives of lambda0 and ktilde with the factored bordered matrix.

    ``dktilde[:, i]`` is d ktilde / d v_i.
    """

    spectrum: SsbSpectrum
    grad_lambda: np.ndarray
    dktilde: np.ndarray
    lu: tuple = field(repr=False)


def _bordered_lu(spec: SsbSpectrum):
    n = len(spec.k)
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = spec.jacobian.T - spec.lambda0 * np.eye(n)
    M[:n, n] = -spec.ktilde
    M[n, :n] = spec.ktilde
    lu = sla.lu_factor(M, check_finite=False)
    d = np.abs(np.diag(lu[0]))
    if d.min() <= 1e-14 * d.max():
        raise SpectrumError("bordered eigen-derivative matrix is singular (rank deficiency > 1)")
    return lu


def eigen_derivatives(F: QuadraticMap, v, spectrum: SsbSpectrum | None = None) -> EigenDerivatives:
    """Gradient of lambda0 and Jacobian of ktilde at ``v`` (on or off the SSB)."""
    spec = spectrum if spectrum is not None else spectral_kernel(F, v)
    n = F.n
    lu = _bordered_lu(spec)
    # (dDF/dv_i)^T ktilde is column i of 2 sum_m kt_m A_m
    rhs = np.zeros((n + 1, n))
    rhs[:n] = -F.weighted_hessian(spec.ktilde)
    X = sla.lu_solve(lu, rhs, check_finite=False)
    return EigenDerivatives(spec, X[n].copy(), X[:n].copy(), lu)


def _second_rhs(F, der, i, j):
    K = der.dktilde
    g = der.grad_lambda
    top = (
        -F.weighted_hessian(K[:, j])[:, i]
        - F.weighted_hessian(K[:, i])[:, j]
        + g[i] * K[:, j]
        + g[j] * K[:, i]
    )
    return np.append(top, -np.dot(K[:, i], K[:, j]))


def eigen_second_derivatives(F: QuadraticMap, v, i: int, j: int,
                             derivs: EigenDerivatives | None = None):
    """Second partials d^2 lambda0 / dv_i dv_j and d^2 ktilde / dv_i dv_j.

    Returns
    -------
    (float, ndarray)
    """
    der = derivs if derivs is not None else eigen_derivatives(F, v)
    x = sla.lu_solve(der.lu, _second_rhs(F, der, i, j), check_finite=False)
    return float(x[-1]), x[:-1]


def lambda_hessian(F: QuadraticMap, v, derivs: EigenDerivatives | None = None) -> np.ndarray:
    """Full Hessian of lambda0.

    Only the last component of each second-derivative solve is needed, so the
    bordered system is solved once transposed and contracted with all
    right-hand sides at O(n^3) cost.
    """
    der = derivs if derivs is not None else eigen_derivatives(F, v)
    n = F.n
    e = np.zeros(n + 1)
    e[n] = 1.0
    y = sla.lu_solve(der.lu, e, trans=1, check_finite=False)
    K = der.dktilde
    g = der.grad_lambda
    S = F.hessian_matrix(y[:n])
    SK = S.T @ K
    c = K.T @ y[:n]
    return -(SK + SK.T) + np.outer(g, c) + np.outer(c, g) - y[n] * (K.T @ K)


def _unit_normal(grad):
    norm = np.linalg.norm(grad)
    if norm == 0.0 or not np.isfinite(norm):
        raise SsbError("gradient of lambda0 vanishes (non-regular SSB point)")
    return canonical_sign(grad / norm)


@dataclass(frozen=True)
class SsbPoint:
    """A point on the SSB with its spectral data and voltage-space normal."""

    q: np.ndarray
    spectrum: SsbSpectrum
    N_V: np.ndarray
    grad_lambda: np.ndarray
    derivs: EigenDerivatives = field(repr=False)

    @property
    def k(self) -> np.ndarray:
        return self.spectrum.k

    @property
    def N_P(self) -> np.ndarray:
        return self.spectrum.ktilde

    @property
    def lambda0(self) -> float:
        return self.spectrum.lambda0

    def to_dict(self) -> dict:
        return {
            "q": self.q.tolist(),
            "lambda0": self.lambda0,
            "k": self.k.tolist(),
            "ktilde": self.N_P.tolist(),
            "N_V": self.N_V.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def ssb_point(F: QuadraticMap, q, tol: float = SSB_TOL, k_ref=None, kt_ref=None) -> SsbPoint:
    """Package ``q`` as an :class:`SsbPoint`; raises if ``|lambda0(q)| > tol * ||DF(q)||``."""
    q = np.array(q, dtype=float)
    spec = spectral_kernel(F, q, k_ref, kt_ref)
    if abs(spec.lambda0) > tol * spec.scale:
        raise SsbError(f"|lambda0| = {abs(spec.lambda0):.3e} exceeds SSB tolerance at q")
    der = eigen_derivatives(F, q, spec)
    return SsbPoint(q, spec, _unit_normal(der.grad_lambda), der.grad_lambda, der)


def normal_voltage(F: QuadraticMap, q) -> np.ndarray:
    """Unit voltage-space normal: normalized gradient of lambda0, first nonzero component positive."""
    if isinstance(q, SsbPoint):
        return q.N_V
    return _unit_normal(eigen_derivatives(F, q).grad_lambda)


def tangent_basis(q) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of N_V, as columns (n, n-1)."""
    N = q.N_V if isinstance(q, SsbPoint) else np.asarray(q, dtype=float)
    Q, _ = sla.qr(N[:, None], mode="full")
    return Q[:, 1:]


def regularity(F: QuadraticMap, v, tol: float = 1e-8) -> tuple[int, bool]:
    """Kernel dimension of DF(v) by relative singular-value threshold; regular iff it is 1."""
    s = np.linalg.svd(F.jacobian(v), compute_uv=False)
    if s[0] == 0.0:
        dim = F.n
    else:
        dim = int(np.sum(s < tol * s[0]))
    return dim, dim == 1


def _det_sign(F, v):
    sign, _ = np.linalg.slogdet(F.jacobian(v))
    return sign


def find_ssb_ray(F: QuadraticMap, v0, u, t_min: float = 1e-4, t_max: float = 1e6,
                 ratio: float = 1.2, max_newton: int = 50) -> SsbPoint:
    """First SSB crossing along ``v0 + t u`` for t > 0.

    A sign change of det DF is bracketed on a geometric grid of t, narrowed by
    bisection, and polished by Newton on ``DF(v0 + t u) k = 0, c.k = 1`` in the
    unknowns (k, t).
    """
    v0 = np.asarray(v0, dtype=float)
    u = np.asarray(u, dtype=float)
    s0 = _det_sign(F, v0)
    if s0 == 0:
        return ssb_point(F, v0)
    lo, hi = 0.0, None
    t = t_min
    while t <= t_max:
        if _det_sign(F, v0 + t * u) != s0:
            hi = t
            break
        lo = t
        t *= ratio
    if hi is None:
        raise SsbError(f"no sign change of det DF along the ray up to t = {t_max:g}")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _det_sign(F, v0 + mid * u) == s0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-9 * hi:
            break
    t = 0.5 * (lo + hi)
    n = F.n
    _, _, Vt = np.linalg.svd(F.jacobian(v0 + t * u))
    c = Vt[-1]
    k = c.copy()
    for it in range(max_newton):
        v = v0 + t * u
        DF = F.jacobian(v)
        r = np.append(DF @ k, np.dot(c, k) - 1.0)
        J = np.zeros((n + 1, n + 1))
        J[:n, :n] = DF
        J[:n, n] = F.hessian_apply(u, k)
        J[n, :n] = c
        step = np.linalg.solve(J, -r)
        k = k + step[:n]
        t = t + step[n]
        if np.linalg.norm(step) <= 1e-14 * (abs(t) + np.linalg.norm(k)):
            break
    else:
        raise SsbError("Newton refinement of the SSB crossing did not converge")
    return ssb_point(F, v0 + t * u)


def newton_on_line(F: QuadraticMap, q, w, tol: float = 1e-13, max_iter: int = 30,
                   k_ref=None, kt_ref=None):
    """Move ``q`` along ``w`` until lambda0 vanishes: 1-d Newton on t -> lambda0(q + t w).

    Returns ``(t, EigenDerivatives)`` at the final point.
    """
    q = np.asarray(q, dtype=float)
    t = 0.0
    for _ in range(max_iter):
        spec = spectral_kernel(F, q + t * w, k_ref, kt_ref)
        der = eigen_derivatives(F, q + t * w, spec)
        if abs(spec.lambda0) <= tol * spec.scale:
            return t, der
        slope = np.dot(der.grad_lambda, w)
        if slope == 0.0:
            break
        t -= spec.lambda0 / slope
        k_ref, kt_ref = spec.k, spec.ktilde
    raise SsbError(f"1-d Newton onto the SSB failed after {max_iter} iterations")


def det_slice(F: QuadraticMap, origin, d1, d2, a_range=(-1.0, 1.0), b_range=(-1.0, 1.0),
              shape=(50, 50)):
    """Sample det DF and lambda0 on the affine plane ``origin + a d1 + b d2``.

    Returns a dict of 2-d arrays ``a, b, sign, logabsdet, lambda0`` and the boolean
    ``sign_change`` marking samples whose right or upper neighbour has the
    opposite determinant sign.  ``lambda0`` is NaN where it is complex.
    """
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    if np.linalg.matrix_rank(np.stack([d1, d2]), tol=1e-12 * max(np.linalg.norm(d1), np.linalg.norm(d2), 1e-300)) < 2:
        raise ValueError("slice directions are linearly dependent")
    na, nb = shape
    avals = np.linspace(*a_range, na) if na > 1 else np.array([0.5 * sum(a_range)])
    bvals = np.linspace(*b_range, nb) if nb > 1 else np.array([0.5 * sum(b_range)])
    A, B = np.meshgrid(avals, bvals, indexing="ij")
    sign = np.zeros(A.shape)
    logdet = np.zeros(A.shape)
    lam = np.full(A.shape, np.nan)
    for idx in np.ndindex(A.shape):
        v = origin + A[idx] * d1 + B[idx] * d2
        DF = F.jacobian(v)
        sign[idx], logdet[idx] = np.linalg.slogdet(DF)
        w = np.linalg.eigvals(DF)
        j = np.argmin(np.abs(w))
        if abs(w[j].imag) <= 1e-12 * max(np.abs(w).max(), 1e-300):
            lam[idx] = w[j].real
    change = np.zeros(A.shape, dtype=bool)
    change[:-1, :] |= sign[:-1, :] * sign[1:, :] < 0
    change[:, :-1] |= sign[:, :-1] * sign[:, 1:] < 0
    return {"a": A, "b": B, "sign": sign, "logabsdet": logdet, "lambda0": lam, "sign_change": change}

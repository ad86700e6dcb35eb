"""Second-order geometry of the SSB in voltage space and of its image in power space.

Normal curvatures are obtained from surface curves (Meunier): along an
arc-length SSB curve c with tangent cdot, the kernel k(c) satisfies
``DF(c) k = 0``; differentiating twice and taking ``cddot = kappa N_V`` gives a
square system for (kappa, kddot).  The second fundamental form L is assembled
from normal curvatures of the tangent basis vectors and their pairwise sums.

Sign convention: ``kappa_N(cdot) = N_V . cddot = W(cdot) . cdot`` with
``W = -DN_V`` restricted to the tangent space, so ``W = g^{-1} L``.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.linalg as sla

from .quadmap import QuadraticMap
from .ssb import SsbPoint, lambda_hessian, tangent_basis

__all__ = [
    "CurvatureError",
    "FundamentalForms",
    "WeingartenMap",
    "kernel_derivative",
    "curve_second_derivative",
    "normal_curvature",
    "normal_curvature_along",
    "weingarten_voltage",
    "image_curve_second_derivative",
    "shape_apply_power",
    "principal_curvatures",
    "normal_differential",
]


class CurvatureError(ArithmeticError):
    pass


@dataclass(frozen=True)
class FundamentalForms:
    g: np.ndarray
    L: np.ndarray
    basis: np.ndarray


@dataclass(frozen=True)
class WeingartenMap:
    """Shape operator in the coordinates of ``basis`` (columns)."""

    W: np.ndarray
    basis: np.ndarray

    def dn_ambient(self) -> np.ndarray:
        """DN_V as an n x n matrix acting on ambient vectors (zero on the normal)."""
        T = self.basis
        g = T.T @ T
        return -T @ self.W @ np.linalg.solve(g, T.T)


def kernel_derivative(F: QuadraticMap, q: SsbPoint, cdot, tol: float = 1e-9) -> np.ndarray:
    """Derivative of the unit kernel along the SSB tangent ``cdot``.

    Solves ``[DF(q); k^T] kdot = [-d^2F(k, cdot); 0]`` in the least-squares sense.
    ``cdot`` may be a vector or a matrix of column directions.
    """
    cdot = np.asarray(cdot, dtype=float)
    single = cdot.ndim == 1
    C = cdot[:, None] if single else cdot
    n = F.n
    k = q.k
    DF = q.spectrum.jacobian
    lhs = np.vstack([DF, k[None, :]])
    rhs = np.zeros((n + 1, C.shape[1]))
    rhs[:n] = -F.hessian_matrix(k) @ C
    Kd, *_ = sla.lstsq(lhs, rhs)
    res = np.linalg.norm(lhs @ Kd - rhs, axis=0)
    bound = tol * (q.spectrum.scale * (1.0 + np.linalg.norm(Kd, axis=0)) + np.linalg.norm(rhs, axis=0))
    if np.any(res > bound):
        raise CurvatureError(
            f"kernel derivative residual {res.max():.3e} too large: direction not tangent "
            "or kernel not simple")
    return Kd[:, 0] if single else Kd


def _meunier_lu(F, q):
    n = F.n
    M = np.zeros((n + 1, n + 1))
    M[:n, 0] = F.hessian_apply(q.k, q.N_V)
    M[:n, 1:] = q.spectrum.jacobian
    M[n, 1:] = q.k
    lu = sla.lu_factor(M, check_finite=False)
    d = np.abs(np.diag(lu[0]))
    if d.min() <= 1e-14 * d.max():
        raise CurvatureError("curvature system is singular (degenerate direction)")
    return lu


def curve_second_derivative(F: QuadraticMap, q: SsbPoint, cdot, kdot, lu=None):
    """Normal part of the second derivative of an SSB curve.

    With ``cddot = kappa N_V`` solves
    ``d^2F(k, N_V) kappa + DF kddot = -2 d^2F(cdot, kdot)``, ``k . kddot = -kdot . kdot``.

    Returns
    -------
    kappa : float
    kddot : ndarray
    """
    lu = lu if lu is not None else _meunier_lu(F, q)
    rhs = np.append(-2.0 * F.hessian_apply(cdot, kdot), -np.dot(kdot, kdot))
    x = sla.lu_solve(lu, rhs, check_finite=False)
    return float(x[0]), x[1:]


def normal_curvature(q: SsbPoint, kappa: float) -> float:
    """Normal curvature from the curve construction: ``N_V . cddot`` with ``cddot = kappa N_V``."""
    return float(kappa)


def normal_curvature_along(F: QuadraticMap, q: SsbPoint, cdot) -> float:
    """kappa_N(cdot) extended as a quadratic form to non-unit tangents."""
    cdot = np.asarray(cdot, dtype=float)
    kdot = kernel_derivative(F, q, cdot)
    kappa, _ = curve_second_derivative(F, q, cdot, kdot)
    return normal_curvature(q, kappa)


def weingarten_voltage(F: QuadraticMap, q: SsbPoint, basis: np.ndarray | None = None):
    """Fundamental forms and Weingarten map of the SSB at ``q``.

    L_ii = kappa_N(c_i) and L_ii + 2 L_ij + L_jj = kappa_N(c_i + c_j) over the
    tangent basis c_i.  Kernel derivatives are linear in the direction and the
    curvature system has a direction-independent matrix, so all
    (n-1)(n-2)/2 pair evaluations share one factorization and one batched solve.

    Returns
    -------
    (FundamentalForms, WeingartenMap)
    """
    T = tangent_basis(q) if basis is None else np.asarray(basis, dtype=float)
    n, m = T.shape
    Kd = kernel_derivative(F, q, T)
    lu = _meunier_lu(F, q)
    # P[:, a, b] = d^2F(c_a, kdot_b)
    P = 2.0 * np.matmul(T.T, F.contract(Kd))
    diag_P = P[:, np.arange(m), np.arange(m)]
    rhs = np.empty((n + 1, m))
    rhs[:n] = -2.0 * diag_P
    rhs[n] = -np.sum(Kd * Kd, axis=0)
    kappa_basis = sla.lu_solve(lu, rhs, check_finite=False)[0]

    L = np.diag(kappa_basis)
    pairs = list(combinations(range(m), 2))
    if pairs:
        ii = np.array([p[0] for p in pairs])
        jj = np.array([p[1] for p in pairs])
        rhs = np.empty((n + 1, len(pairs)))
        rhs[:n] = -2.0 * (diag_P[:, ii] + P[:, ii, jj] + P[:, jj, ii] + diag_P[:, jj])
        Ks = Kd[:, ii] + Kd[:, jj]
        rhs[n] = -np.sum(Ks * Ks, axis=0)
        kappa_pair = sla.lu_solve(lu, rhs, check_finite=False)[0]
        off = 0.5 * (kappa_pair - kappa_basis[ii] - kappa_basis[jj])
        L[ii, jj] = off
        L[jj, ii] = off
    g = T.T @ T
    W = np.linalg.solve(g, L)
    return FundamentalForms(g, L, T), WeingartenMap(W, T)


def image_curve_second_derivative(F: QuadraticMap, q: SsbPoint, cdot, cddot) -> np.ndarray:
    """Second derivative of F(c(t)): ``d^2F(cdot, cdot) + DF(q) cddot``."""
    return F.hessian_apply(cdot, cdot) + q.spectrum.jacobian @ np.asarray(cddot, dtype=float)


def shape_apply_power(F: QuadraticMap, q: SsbPoint, cdot, epsilon: float | None = None,
                      max_cond: float = 1e12) -> np.ndarray:
    """Power-space shape operator applied to the SSB-image tangent ``DF cdot``.

    Solves ``(g + eps k k^T) x = (1 - k k^T) Lt cdot`` with ``g = DF^T DF`` and
    ``Lt = sum_m (N_P)_m d^2F_m``, returning the image ``DF x``.
    """
    DF = q.spectrum.jacobian
    k = q.k
    g = DF.T @ DF
    if epsilon is None:
        epsilon = 1e-6 * np.trace(g) / F.n
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    Lt = F.weighted_hessian(q.N_P)
    M = g + epsilon * np.outer(k, k)
    rhs = Lt @ np.asarray(cdot, dtype=float)
    rhs = rhs - k * np.dot(k, rhs)
    cond = np.linalg.cond(M)
    if cond > max_cond:
        raise CurvatureError(f"regularized power-space system ill-conditioned (cond {cond:.2e})")
    x = sla.cho_solve(sla.cho_factor(M), rhs)
    return DF @ x


def principal_curvatures(forms: FundamentalForms):
    """Solutions of ``L x = kappa g x`` sorted by kappa descending.

    Returns a list of ``(kappa, direction)`` with ambient tangent directions
    whose coordinate vectors are g-orthonormal.
    """
    try:
        sla.cholesky(forms.g)
    except sla.LinAlgError:
        raise CurvatureError("first fundamental form is not positive definite") from None
    kappa, X = sla.eigh(forms.L, forms.g)
    order = np.argsort(kappa)[::-1]
    return [(float(kappa[i]), forms.basis @ X[:, i]) for i in order]


def normal_differential(F: QuadraticMap, q: SsbPoint) -> np.ndarray:
    """DN_V as an ambient n x n matrix from the Hessian of lambda0.

    The unit normal field of the level set is ``grad lambda0 / |grad lambda0|``,
    so on tangent vectors ``DN_V = P H P / |grad lambda0|`` with P the tangent
    projector.  Equals ``WeingartenMap.dn_ambient()`` at O(n^3) cost.
    """
    N = q.N_V
    g = q.grad_lambda
    H = lambda_hessian(F, q.q, q.derivs)
    P = np.eye(F.n) - np.outer(N, N)
    # N_V may be oriented against the gradient
    return np.sign(np.dot(N, g)) * (P @ H @ P) / np.linalg.norm(g)

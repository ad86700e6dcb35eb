"""Derivatives of the local inverse of F at regular points.

Along a preimage curve ``F(v(t)) = p(t)``::

    DF(v) v' = p'
    DF(v) v'' = p'' - d2F(v', v')

Second partials of F^-1 follow from straight power-space lines: the
coordinate lines ``p0 + t e_i`` give the diagonal entries and the diagonal
lines ``p0 + t (e_i + e_j)`` give the mixed ones by polarization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.linalg as sla

from .quadmap import QuadraticMap

__all__ = [
    "IllConditionedError",
    "InverseJet",
    "preimage_tangent",
    "preimage_second_derivative",
    "inverse_hessian",
]

MAX_CONDITION = 1e10


class IllConditionedError(ArithmeticError):
    """DF(v) is too close to singular; use the split continuation instead."""


def _factor(F, v, max_cond=MAX_CONDITION):
    DF = F.jacobian(v)
    cond = np.linalg.cond(DF)
    if not np.isfinite(cond) or cond > max_cond:
        raise IllConditionedError(f"cond DF(v) = {cond:.3e} exceeds {max_cond:g}")
    return sla.lu_factor(DF, check_finite=False)


@dataclass(frozen=True)
class InverseJet:
    """First and second derivatives of F^-1 at ``p0 = F(v0)``.

    ``H_inv[m]`` is the Hessian of component m of F^-1.
    """

    v0: np.ndarray
    J_inv: np.ndarray
    H_inv: np.ndarray

    def to_dict(self) -> dict:
        return {"v0": self.v0.tolist(), "J_inv": self.J_inv.tolist(), "H_inv": self.H_inv.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def preimage_tangent(F: QuadraticMap, v, pdot, max_cond: float = MAX_CONDITION) -> np.ndarray:
    """Solve ``DF(v) v' = p'``."""
    lu = _factor(F, v, max_cond)
    return sla.lu_solve(lu, np.asarray(pdot, dtype=float), check_finite=False)


def preimage_second_derivative(F: QuadraticMap, v, vdot, pddot,
                               max_cond: float = MAX_CONDITION) -> np.ndarray:
    """Solve ``DF(v) v'' = p'' - d2F(v', v')``."""
    lu = _factor(F, v, max_cond)
    rhs = np.asarray(pddot, dtype=float) - F.hessian_apply(vdot, vdot)
    return sla.lu_solve(lu, rhs, check_finite=False)


def inverse_hessian(F: QuadraticMap, v0, max_cond: float = MAX_CONDITION) -> InverseJet:
    """Jacobian and Hessians of F^-1 at F(v0) from one LU factorization of DF(v0)."""
    v0 = np.array(v0, dtype=float)
    n = F.n
    lu = _factor(F, v0, max_cond)
    J = sla.lu_solve(lu, np.eye(n), check_finite=False)
    # G[:, a, b] = d2F(v'_a, v'_b) for the coordinate-line tangents v'_a = J e_a
    G = 2.0 * np.matmul(J.T, F.contract(J))
    diag = G[:, np.arange(n), np.arange(n)]
    # straight power lines have p'' = 0
    second_diag = -sla.lu_solve(lu, diag, check_finite=False)
    H = np.zeros((n, n, n))
    H[:, np.arange(n), np.arange(n)] = second_diag
    pairs = list(combinations(range(n), 2))
    if pairs:
        ii = np.array([p[0] for p in pairs])
        jj = np.array([p[1] for p in pairs])
        # tangent of p0 + t (e_i + e_j) is v'_i + v'_j; expand d2F bilinearly
        curv = diag[:, ii] + G[:, ii, jj] + G[:, jj, ii] + diag[:, jj]
        second_sum = -sla.lu_solve(lu, curv, check_finite=False)
        mixed = 0.5 * (second_sum - second_diag[:, ii] - second_diag[:, jj])
        H[:, ii, jj] = mixed
        H[:, jj, ii] = mixed
    return InverseJet(v0, J, H)

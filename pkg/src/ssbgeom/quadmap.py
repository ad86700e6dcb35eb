"""Quadratic maps F: R^n -> R^n with components F_i(v) = v^T A_i v.

An optional affine part (``linear`` rows and ``constant`` offsets) is carried
for maps obtained by fixing some coordinates of a homogeneous map, e.g. slack
bus elimination.  The Hessian of every component is constant and equal to
``2 A_i`` regardless of the affine part.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = ["QuadraticMap", "build"]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class QuadraticMap:
    """Quadratic map given by symmetric coefficient matrices.

    Attributes
    ----------
    A : ndarray, shape (n, n, n)
        ``A[i]`` is the symmetric coefficient matrix of component ``i``.
    linear : ndarray, shape (n, n), optional
        Row ``i`` holds the linear coefficients of component ``i``.
    constant : ndarray, shape (n,), optional
    """

    A: np.ndarray
    linear: np.ndarray | None = None
    constant: np.ndarray | None = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 3 or A.shape[0] != A.shape[1] or A.shape[1] != A.shape[2]:
            raise ValueError(f"expected n matrices of shape (n, n), got array of shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValueError("non-finite entry in coefficient matrices")
        object.__setattr__(self, "A", _frozen(0.5 * (A + A.transpose(0, 2, 1))))
        n = A.shape[0]
        if self.linear is not None:
            lin = np.asarray(self.linear, dtype=float)
            if lin.shape != (n, n) or not np.all(np.isfinite(lin)):
                raise ValueError(f"linear part must be a finite ({n}, {n}) array")
            object.__setattr__(self, "linear", _frozen(lin))
        if self.constant is not None:
            c = np.asarray(self.constant, dtype=float)
            if c.shape != (n,) or not np.all(np.isfinite(c)):
                raise ValueError(f"constant part must be a finite ({n},) array")
            object.__setattr__(self, "constant", _frozen(c))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def homogeneous(self) -> bool:
        return self.linear is None and self.constant is None

    def _check(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise ValueError(f"expected a vector of length {self.n}, got shape {v.shape}")
        return v

    def contract(self, x) -> np.ndarray:
        """``A @ x`` over the last index: shape (n, n) for a vector, (n, n, m) for n x m.

        Routed through a single matrix product, which is much faster than
        numpy's batched matmul for stacked matrices.
        """
        n = self.n
        x = np.asarray(x, dtype=float)
        return (self.A.reshape(n * n, n) @ x).reshape((n, n) + x.shape[1:])

    def __call__(self, v) -> np.ndarray:
        v = self._check(v)
        out = self.contract(v) @ v
        if self.linear is not None:
            out = out + self.linear @ v
        if self.constant is not None:
            out = out + self.constant
        return out

    evaluate = __call__

    def jacobian(self, v) -> np.ndarray:
        """DF(v); row i is ``2 v^T A_i`` plus the linear coefficients."""
        v = self._check(v)
        J = 2.0 * self.contract(v)
        if self.linear is not None:
            J = J + self.linear
        return J

    def hessian_apply(self, u, w) -> np.ndarray:
        """Second derivative of F applied to (u, w): component i is ``2 u^T A_i w``."""
        u = self._check(u)
        w = self._check(w)
        return 2.0 * (self.contract(w) @ u)

    def hessian_matrix(self, u) -> np.ndarray:
        """Matrix of w -> hessian_apply(u, w); for homogeneous maps this is DF(u)."""
        return 2.0 * self.contract(self._check(u))

    def weighted_hessian(self, x) -> np.ndarray:
        """Symmetric matrix ``sum_m x_m d^2F_m/dv^2 = 2 sum_m x_m A_m``."""
        x = self._check(x)
        return 2.0 * np.tensordot(x, self.A, axes=1)

    def to_json(self) -> str:
        doc = {"n": self.n, "matrices": self.A.tolist()}
        if self.linear is not None:
            doc["linear"] = self.linear.tolist()
        if self.constant is not None:
            doc["constant"] = self.constant.tolist()
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "QuadraticMap":
        doc = json.loads(text)
        F = cls(np.array(doc["matrices"], dtype=float), doc.get("linear"), doc.get("constant"))
        if F.n != doc["n"]:
            raise ValueError(f"declared n={doc['n']} but matrices have n={F.n}")
        return F


def build(matrices: Sequence) -> QuadraticMap:
    """Build a homogeneous quadratic map from ``n`` square matrices.

    Non-symmetric inputs are replaced by their symmetric part, which defines
    the same quadratic form.
    """
    mats = [np.asarray(m, dtype=float) for m in matrices]
    n = len(mats)
    for i, m in enumerate(mats):
        if m.shape != (n, n):
            raise ValueError(f"matrix {i} has shape {m.shape}, expected ({n}, {n})")
    if n == 0:
        raise ValueError("need at least one matrix")
    return QuadraticMap(np.stack(mats))

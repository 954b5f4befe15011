"""Conjugate gradients and banded direct solves.

``cg_solve`` handles symmetric positive-definite operators given as sparse or
dense matrices or as callables; a 2-D right-hand side is solved column by
column in one vectorized iteration.  Banded systems are stored in LAPACK
band layout and factorized once through ``dgbtrf``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

__all__ = [
    "ConvergenceError",
    "SingularMatrixError",
    "cg_solve",
    "BandedMatrix",
    "BandedFactorization",
    "banded_factorize",
    "banded_solve",
]


class ConvergenceError(RuntimeError):
    """An iterative solver did not reach its tolerance."""


class SingularMatrixError(np.linalg.LinAlgError):
    """A zero pivot occurred during factorization."""


def _matvec(A):
    if callable(A) and not hasattr(A, "shape"):
        return A
    if hasattr(A, "matvec") and not hasattr(A, "toarray") and not isinstance(A, np.ndarray):
        return A.matvec
    return lambda x: A @ x


def _coldot(a, b):
    # per-column dot products on contiguous copies, so each column's rounding
    # does not depend on how many columns are solved together
    return np.array([np.dot(np.ascontiguousarray(a[:, j]), np.ascontiguousarray(b[:, j]))
                     for j in range(a.shape[1])])


def _colnorm(a):
    return np.sqrt(_coldot(a, a))


def cg_solve(A, b, tol=1e-10, maxit=None, x0=None, diag=None, callback=None):
    """Solve ``A x = b`` for symmetric positive-definite ``A``.

    Parameters
    ----------
    A : sparse matrix, ndarray, LinearOperator or callable
        Callables receive arrays shaped like ``b``.
    b : ndarray, shape (m,) or (m, k)
        Columns of a 2-D ``b`` are independent right-hand sides.
    tol : float
        Relative residual target, ``||A x - b|| <= tol * ||b||`` per column.
    maxit : int, optional
        Iteration cap, default ``10 * m``.
    x0 : ndarray, optional
        Initial guess.
    diag : ndarray, optional
        Diagonal of ``A``; enables Jacobi scaling.
    callback : callable, optional
        Called as ``callback(x)`` after every iteration.

    Returns
    -------
    x : ndarray, same shape as ``b``

    Raises
    ------
    ConvergenceError
        If the tolerance is not met within ``maxit`` iterations or a
        non-positive curvature ``p^T A p`` is encountered.
    """
    matvec = _matvec(A)
    b = np.asarray(b, dtype=float)
    vector = b.ndim == 1
    B = b.reshape(len(b), -1)
    if maxit is None:
        maxit = 10 * len(b)

    def op(p):
        if vector:
            return np.asarray(matvec(p[:, 0]), dtype=float).reshape(-1, 1)
        return np.asarray(matvec(p), dtype=float)

    if x0 is None:
        x = np.zeros_like(B)
        r = B.copy()
    else:
        x = np.array(x0, dtype=float).reshape(B.shape)
        r = B - op(x)
    b_norm = _colnorm(B)
    target = tol * b_norm
    active = _colnorm(r) > target
    inv_diag = None if diag is None else (1.0 / np.asarray(diag, dtype=float)).reshape(-1, 1)
    z = r if inv_diag is None else r * inv_diag
    p = z.copy()
    rz = _coldot(r, z)

    it = 0
    while active.any():
        if it >= maxit:
            rel = _colnorm(r)[active] / b_norm[active]
            raise ConvergenceError(
                f"CG did not converge in {maxit} iterations (relative residual {rel.max():.3e})"
            )
        it += 1
        Ap = op(p)
        pAp = _coldot(p, Ap)
        if np.any(pAp[active] <= 0.0):
            raise ConvergenceError("CG encountered non-positive curvature; operator is not SPD")
        alpha = np.zeros_like(rz)
        np.divide(rz, pAp, out=alpha, where=active)
        x += alpha * p
        r -= alpha * Ap
        active = _colnorm(r) > target
        z = r if inv_diag is None else r * inv_diag
        rz_new = _coldot(r, z)
        beta = np.zeros_like(rz)
        np.divide(rz_new, rz, out=beta, where=active)
        p = z + beta * p
        rz = rz_new
        if callback is not None:
            callback(x[:, 0].copy() if vector else x.copy())
    return x[:, 0] if vector else x


@dataclass
class BandedMatrix:
    """Square matrix with ``lower`` sub- and ``upper`` super-diagonals.

    ``bands[upper + i - j, j] == A[i, j]`` (LAPACK band storage).
    """

    size: int
    lower: int
    upper: int
    bands: np.ndarray
    _factors: "BandedFactorization | None" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.bands = np.asarray(self.bands, dtype=float)
        if self.bands.shape != (self.lower + self.upper + 1, self.size):
            raise ValueError(f"band array has shape {self.bands.shape}")

    @property
    def bandwidth(self) -> int:
        return max(self.lower, self.upper)

    @classmethod
    def zeros(cls, size, lower, upper):
        return cls(size, lower, upper, np.zeros((lower + upper + 1, size)))

    @classmethod
    def from_dense(cls, A, lower, upper):
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        out = cls.zeros(n, lower, upper)
        for i in range(n):
            for j in range(max(0, i - lower), min(n, i + upper + 1)):
                out.bands[upper + i - j, j] = A[i, j]
        return out

    def __setitem__(self, index, value):
        i, j = index
        if not -self.lower <= j - i <= self.upper:
            raise IndexError(f"entry ({i}, {j}) outside the band")
        self.bands[self.upper + i - j, j] = value
        self._factors = None

    def __getitem__(self, index):
        i, j = index
        if not -self.lower <= j - i <= self.upper:
            return 0.0
        return self.bands[self.upper + i - j, j]

    def to_dense(self) -> np.ndarray:
        A = np.zeros((self.size, self.size))
        for i in range(self.size):
            for j in range(max(0, i - self.lower), min(self.size, i + self.upper + 1)):
                A[i, j] = self.bands[self.upper + i - j, j]
        return A

    def __matmul__(self, x):
        x = np.asarray(x, dtype=float)
        y = np.zeros(x.shape)
        for d in range(-self.lower, self.upper + 1):
            diag = self.bands[self.upper - d]
            if d >= 0:
                y[: self.size - d] += (diag[d:] * x[d:].T).T
            else:
                y[-d:] += (diag[: self.size + d] * x[: self.size + d].T).T
        return y

    def factorize(self) -> "BandedFactorization":
        if self._factors is None:
            self._factors = banded_factorize(self)
        return self._factors


@dataclass(frozen=True)
class BandedFactorization:
    """LU factors with partial pivoting from ``dgbtrf``."""

    size: int
    lower: int
    upper: int
    lu: np.ndarray
    ipiv: np.ndarray


def banded_factorize(A: BandedMatrix) -> BandedFactorization:
    """LU-factorize a banded matrix; solves then cost ``O(size * bandwidth**2)``."""
    kl, ku = A.lower, A.upper
    ab = np.zeros((2 * kl + ku + 1, A.size))
    ab[kl:] = A.bands
    lu, ipiv, info = lapack.dgbtrf(ab, kl, ku)
    if info > 0:
        raise SingularMatrixError(f"zero pivot in row {info - 1} of banded factorization")
    if info < 0:
        raise ValueError(f"dgbtrf: illegal argument {-info}")
    lu.setflags(write=False)
    return BandedFactorization(A.size, kl, ku, lu, ipiv)


def banded_solve(f: BandedFactorization, b) -> np.ndarray:
    """Solve with cached factors; ``b`` may hold several right-hand side columns."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != f.size:
        raise ValueError(f"right-hand side has length {b.shape[0]}, system has size {f.size}")
    rhs = b.reshape(f.size, -1)
    x, info = lapack.dgbtrs(f.lu, f.lower, f.upper, rhs, f.ipiv)
    if info != 0:
        raise ValueError(f"dgbtrs: illegal argument {-info}")
    return x.reshape(b.shape)

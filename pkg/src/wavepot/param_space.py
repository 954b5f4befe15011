"""Parameter space with a weighted ``H^2``-in-time inner product.

The parameter update direction is produced by ``smoothing_adjoint``, the
adjoint of the multiplication ``h -> -u h`` with respect to

    <g, f>_X = <g, f> + alpha <g', f'> + beta <g'', f''>   (all in L^2(0,T; L^2)).

Per spatial dof this leads to the boundary value problem
``v - alpha v'' + beta v'''' = -(M (u . z))`` with ``v'' = 0`` and
``alpha v' = beta v'''`` at both ends, discretized by central differences on
the time grid extended by two ghost nodes at each end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import BandedFactorization, BandedMatrix, banded_solve, cg_solve
from .wave import TimeGrid

__all__ = [
    "SmoothingWeights",
    "FourthOrderSystem",
    "multiply_pointwise",
    "build_fourth_order_system",
    "smoothing_adjoint",
    "x_inner",
    "l2l2_inner",
    "time_derivative",
    "second_time_derivative",
]


@dataclass(frozen=True)
class SmoothingWeights:
    """Weights of the first and second time-derivative terms."""

    alpha: float = 2e-2
    beta: float = 2e-3

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError(f"smoothing weights must be positive, got alpha={self.alpha}, beta={self.beta}")


def multiply_pointwise(h, u, sign=-1.0, interior=None):
    """Nodal product ``sign * h * u``.

    ``h`` is given on all vertices and ``u`` on interior dofs; pass the mesh's
    ``interior`` index array to align them.  The result lives on the dofs
    of ``u``.
    """
    h = np.asarray(h, dtype=float)
    u = np.asarray(u, dtype=float)
    if h.shape[-1] != u.shape[-1]:
        if interior is None:
            raise ValueError(f"shape mismatch {h.shape} vs {u.shape}; pass interior indices")
        h = h[..., interior]
    if h.shape != u.shape[-h.ndim:]:
        raise ValueError(f"shape mismatch {h.shape} vs {u.shape}")
    return sign * h * u


@dataclass(frozen=True, eq=False)
class FourthOrderSystem:
    """Banded ``(N + 4)``-system for ``v - alpha v'' + beta v''''``, scaled by ``dt**4``.

    Unknown ``j`` is ``v^{j-2}``, i.e. the time nodes ``t_{-2} .. t_{N+1}``.
    Row order keeps the band narrow: rows 0 and 1 are the conditions at
    ``t = 0``, rows ``2 .. N+1`` the stencil at ``t_0 .. t_{N-1}``, and the
    last two rows the conditions at ``T``.  ``boundary_rows`` lists the
    four condition rows in the order (v''(0)=0, alpha v'(0)=beta v'''(0),
    v''(T)=0, alpha v'(T)=beta v'''(T)).
    """

    N: int
    dt: float
    weights: SmoothingWeights
    matrix: BandedMatrix
    factors: BandedFactorization

    @property
    def size(self) -> int:
        return self.N + 4

    @property
    def boundary_rows(self) -> tuple[int, int, int, int]:
        return (0, 1, self.N + 3, self.N + 2)

    @property
    def interior_rows(self) -> slice:
        return slice(2, self.N + 2)

    def solve(self, r: np.ndarray) -> np.ndarray:
        """Nodal values ``v^0 .. v^{N-1}`` for right-hand side ``-(M (u . z))`` samples ``r``.

        ``r`` has shape ``(N,)`` or ``(N, K)``.
        """
        r = np.asarray(r, dtype=float)
        rhs = np.zeros((self.size,) + r.shape[1:])
        rhs[self.interior_rows] = -self.dt**4 * r
        return banded_solve(self.factors, rhs)[self.interior_rows]


def build_fourth_order_system(N: int, dt: float, weights: SmoothingWeights) -> FourthOrderSystem:
    """Assemble and factorize the ghost-node system once per run."""
    if N < 5:
        raise ValueError("need at least 5 time nodes")
    if dt <= 0:
        raise ValueError("dt must be positive")
    a, b = weights.alpha, weights.beta
    ad2 = a * dt**2
    A = BandedMatrix.zeros(N + 4, 3, 3)
    # v''(0) = 0: v^{-1} - 2 v^0 + v^1
    A[0, 1], A[0, 2], A[0, 3] = 1.0, -2.0, 1.0
    # alpha v'(0) = beta v'''(0)
    A[1, 0], A[1, 1], A[1, 3], A[1, 4] = b, -(2 * b + ad2), 2 * b + ad2, -b
    stencil = (b, -(ad2 + 4 * b), dt**4 + 2 * ad2 + 6 * b, -(ad2 + 4 * b), b)
    for i in range(N):
        for k, coef in enumerate(stencil):
            A[i + 2, i + k] = coef
    # alpha v'(T) = beta v'''(T), centred at t_{N-1} (unknown index N+1)
    A[N + 2, N - 1], A[N + 2, N], A[N + 2, N + 2], A[N + 2, N + 3] = b, -(2 * b + ad2), 2 * b + ad2, -b
    # v''(T) = 0
    A[N + 3, N], A[N + 3, N + 1], A[N + 3, N + 2] = 1.0, -2.0, 1.0
    return FourthOrderSystem(N, dt, weights, A, A.factorize())


def smoothing_adjoint(u, z, system: FourthOrderSystem, mass, mesh=None, tol=1e-12):
    """Representer ``w_z`` of ``h -> <-u h, z>`` in the weighted ``H^2`` product.

    Steps: ``r^i = M (u^i . z^i)``; one banded solve per spatial dof for
    ``v``; ``M w^i = v^i`` per time step.  Stacked inputs ``(d, N, K)`` are
    summed over the source axis.

    Returns interior values ``(N, K)``, or all-vertex values with zero on the
    boundary when ``mesh`` is given.
    """
    u = np.asarray(u, dtype=float)
    z = np.asarray(z, dtype=float)
    if u.shape != z.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {z.shape}")
    uz = u * z
    if uz.ndim == 3:
        uz = uz.sum(axis=0)
    N, K = uz.shape
    if N != system.N:
        raise ValueError(f"fields have {N} time nodes, system expects {system.N}")
    r = (mass @ uz.T).T
    v = system.solve(r)
    if np.any(v):
        w = cg_solve(mass, v.T, tol=tol, diag=mass.diagonal()).T
    else:
        w = np.zeros_like(v)
    return w if mesh is None else mesh.to_vertices(w)


def time_derivative(p: np.ndarray, dt: float) -> np.ndarray:
    """Central first difference, second-order one-sided at the ends (axis 0)."""
    return np.gradient(p, dt, axis=0, edge_order=2)


def second_time_derivative(p: np.ndarray, dt: float) -> np.ndarray:
    """Central second difference, second-order one-sided at the ends (axis 0)."""
    p = np.asarray(p, dtype=float)
    out = np.empty_like(p)
    out[1:-1] = p[2:] - 2.0 * p[1:-1] + p[:-2]
    out[0] = 2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3]
    out[-1] = 2.0 * p[-1] - 5.0 * p[-2] + 4.0 * p[-3] - p[-4]
    return out / dt**2


def _time_first(p):
    # stacked (d, N, K) -> (N, K, d)
    p = np.asarray(p, dtype=float)
    return np.moveaxis(p, 0, -1) if p.ndim == 3 else p


def _one_sided_pairing(p, q, mass, weights):
    N, K = q.shape[:2]
    qk = np.moveaxis(q, 1, 0).reshape(K, -1)
    Mq = np.moveaxis((mass @ qk).reshape((K, N) + q.shape[2:]), 0, 1)
    per_t = (p * Mq).reshape(N, -1).sum(axis=1)
    return float(weights @ per_t)


def _mass_pairing(p, q, mass, weights):
    # sum_t weights[t] * sum over sources of p[t]^T M q[t]; averaged over both
    # orders so that swapping p and q is bitwise symmetric
    return 0.5 * (_one_sided_pairing(p, q, mass, weights) + _one_sided_pairing(q, p, mass, weights))


def l2l2_inner(p, q, mass, grid: TimeGrid) -> float:
    """Discrete ``L^2(0,T; L^2)`` product, trapezoidal in time.

    Stacked fields ``(d, N, K)`` are paired source by source and summed.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {q.shape}")
    return _mass_pairing(_time_first(p), _time_first(q), mass, grid.trapezoid)


def x_inner(p, q, weights: SmoothingWeights, mass, grid: TimeGrid) -> float:
    """Discrete weighted ``H^2(0,T; L^2)`` product of two space-time fields."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {q.shape}")
    p, q = _time_first(p), _time_first(q)
    dt = grid.dt
    w = grid.trapezoid
    total = _mass_pairing(p, q, mass, w)
    total += weights.alpha * _mass_pairing(time_derivative(p, dt), time_derivative(q, dt), mass, w)
    total += weights.beta * _mass_pairing(second_time_derivative(p, dt), second_time_derivative(q, dt), mass, w)
    return total

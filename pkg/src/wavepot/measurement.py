"""Sensor kernels, evaluation operators and the measurement map ``Phi = Psi o S``.

A sensor reads the wave through a space-time tent kernel

    k(t, x) = g(|t| / r_t) g(|x| / r_x) / (r_t r_x^n),   g(s) = sqrt(3)(1 - s)_+ .

The discrete evaluation ``psi`` integrates with trapezoidal weights in time
and the P1 mass pairing in space; ``psi*`` is its exact transpose with
respect to the discrete ``L^2(0,T; L^2)`` product.  Full-field observation
(``Psi`` = identity, data compared in the same product) uses the same
operator interface.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg import cg_solve
from .mesh import Mesh, P1Assembler
from .param_space import FourthOrderSystem, l2l2_inner, smoothing_adjoint, x_inner
from .wave import TimeGrid, WaveSolver

__all__ = [
    "kernel_eval",
    "SensorLayout",
    "PsiMatrix",
    "build_psi",
    "apply_psi",
    "apply_psi_star",
    "SensorObservation",
    "FullFieldObservation",
    "MeasurementOperator",
    "measure",
    "measure_derivative_apply",
    "measure_derivative_adjoint",
    "write_measurements",
    "read_measurements",
]

_SQRT3 = np.sqrt(3.0)


def _tent(s):
    s = np.asarray(s, dtype=float)
    return np.where(s < 1.0, _SQRT3 * (1.0 - s), 0.0)


def kernel_eval(t, x, r_t: float, r_x: float):
    """Kernel value at time offset ``t`` and spatial offset ``x``.

    ``x`` has a trailing axis of length ``n``; ``t`` broadcasts against the
    leading axes of ``x``.
    """
    if r_t <= 0 or r_x <= 0:
        raise ValueError("kernel radii must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.shape[-1]
    dist = np.linalg.norm(x, axis=-1)
    val = _tent(np.abs(t) / r_t) * _tent(dist / r_x) / (r_t * r_x**n)
    return val if np.ndim(val) else float(val)


@dataclass(frozen=True)
class SensorLayout:
    """Space-time sensor positions ``(times[i], points[i])`` with common radii."""

    times: np.ndarray
    points: np.ndarray
    r_t: float
    r_x: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        points = np.asarray(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if len(times) != len(points):
            raise ValueError("times and points must have equal length")
        if not (self.r_t > 0 and self.r_x > 0):
            raise ValueError("sensor radii must be positive")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "points", points)

    @property
    def l(self) -> int:
        return len(self.times)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def validate(self, mesh: Mesh, grid: TimeGrid) -> None:
        if self.dim != mesh.dim:
            raise ValueError(f"sensors are {self.dim}-dimensional, mesh is {mesh.dim}-dimensional")
        if np.any(self.times < 0) or np.any(self.times > grid.T):
            raise ValueError("sensor times must lie in [0, T]")
        if np.any(self.points < 0) or np.any(self.points > 1):
            raise ValueError("sensor positions must lie in the unit cube")


@dataclass(frozen=True, eq=False)
class PsiMatrix:
    """Discrete evaluation operator.

    ``(psi u)_i = sum_j w_j kernel[i, j, :] . (M_full[:, interior] u^j)`` with
    trapezoidal weights ``w_j``; ``kernel`` is stored flattened as a sparse
    ``l x (N * n_vertices)`` matrix of nodal kernel values.
    """

    kernel: sp.csr_matrix
    coupling: sp.csr_matrix
    mass: sp.csr_matrix
    trapezoid: np.ndarray
    N: int

    @property
    def l(self) -> int:
        return self.kernel.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.coupling.shape[0]

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Sensor values of one field ``(N, K)`` or a stack ``(d, N, K)``."""
        u = np.asarray(u, dtype=float)
        if u.ndim == 3:
            return np.stack([self.apply(ui) for ui in u])
        if u.shape != (self.N, self.coupling.shape[1]):
            raise ValueError(f"field has shape {u.shape}, expected {(self.N, self.coupling.shape[1])}")
        mu = (self.coupling @ u.T).T * self.trapezoid[:, None]
        return self.kernel @ mu.reshape(-1)

    def loads(self, y: np.ndarray) -> np.ndarray:
        """``M psi* y`` at every time node, shape ``(N, K)``; no mass solve needed."""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.l,):
            raise ValueError(f"expected {self.l} sensor values, got shape {y.shape}")
        k = (self.kernel.T @ y).reshape(self.N, self.n_vertices)
        return (self.coupling.T @ k.T).T


def build_psi(mesh: Mesh, grid: TimeGrid, layout: SensorLayout) -> PsiMatrix:
    """Assemble the sensor evaluation operator on the space-time grid.

    Kernels are nodally interpolated on all vertices and paired with the
    wave through the mass matrix; the parts of a support outside the
    domain or outside ``[0, T]`` are dropped.
    """
    layout.validate(mesh, grid)
    if layout.r_x < mesh.h:
        warnings.warn(
            f"sensor radius {layout.r_x:g} is below the mesh width {mesh.h:g}; "
            "kernel quadrature will be inaccurate",
            RuntimeWarning,
            stacklevel=2,
        )
    nv = mesh.n_vertices
    times = grid.times
    rows, cols, vals = [], [], []
    for i in range(layout.l):
        tj = np.flatnonzero(np.abs(times - layout.times[i]) < layout.r_t)
        dist = np.linalg.norm(mesh.vertices - layout.points[i], axis=1)
        vx = np.flatnonzero(dist < layout.r_x)
        if len(tj) == 0 or len(vx) == 0:
            continue
        gt = _tent(np.abs(times[tj] - layout.times[i]) / layout.r_t)
        gx = _tent(dist[vx] / layout.r_x)
        block = np.outer(gt, gx) / (layout.r_t * layout.r_x**mesh.dim)
        rows.append(np.full(block.size, i))
        cols.append((tj[:, None] * nv + vx[None, :]).ravel())
        vals.append(block.ravel())
    if rows:
        rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    kernel = sp.csr_matrix((vals, (rows, cols)), shape=(layout.l, grid.N * nv))
    full_mass = P1Assembler(mesh, full=True).mass()
    coupling = full_mass[:, mesh.interior].tocsr()
    interior_mass = full_mass[mesh.interior][:, mesh.interior].tocsr()
    return PsiMatrix(kernel, coupling, interior_mass, grid.trapezoid, grid.N)


def apply_psi(psi: PsiMatrix, u: np.ndarray) -> np.ndarray:
    """Sensor readings ``psi u``."""
    return psi.apply(u)


def apply_psi_star(psi: PsiMatrix, y: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """Field ``psi* y`` with ``<psi u, y> = l2l2_inner(u, psi* y)``.

    The identity is exact up to the tolerance of the mass solves.
    """
    b = psi.loads(y)
    if not np.any(b):
        return np.zeros_like(b)
    return cg_solve(psi.mass, b.T, tol=tol, diag=psi.mass.diagonal()).T


class SensorObservation:
    """Observation through sensors; data are ``(d, l)`` arrays with the Euclidean product."""

    full_field = False

    def __init__(self, psi: PsiMatrix, layout: SensorLayout | None = None):
        self.psi = psi
        self.layout = layout

    def apply(self, u_all: np.ndarray) -> np.ndarray:
        return self.psi.apply(u_all)

    def adjoint_loads(self, r: np.ndarray) -> np.ndarray:
        """Loads ``(N, K, d)`` of ``psi* r_k`` for the reversed wave solve."""
        return np.stack([self.psi.loads(rk) for rk in np.asarray(r, dtype=float)], axis=-1)

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.vdot(a, b))

    def norm(self, a: np.ndarray) -> float:
        return float(np.linalg.norm(a))


class FullFieldObservation:
    """Identity observation; data are wave fields ``(d, N, K)`` compared in discrete ``L^2 L^2``."""

    full_field = True

    def __init__(self, mass: sp.csr_matrix, grid: TimeGrid):
        self.mass = mass
        self.grid = grid

    def apply(self, u_all: np.ndarray) -> np.ndarray:
        return np.array(u_all, dtype=float)

    def adjoint_loads(self, r: np.ndarray) -> np.ndarray:
        r = np.moveaxis(np.asarray(r, dtype=float), 0, -1)
        N, K, d = r.shape
        flat = r.transpose(1, 0, 2).reshape(K, N * d)
        return (self.mass @ flat).reshape(K, N, d).transpose(1, 0, 2)

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return l2l2_inner(a, b, self.mass, self.grid)

    def norm(self, a: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner(a, a), 0.0)))


class MeasurementOperator:
    """Measurement map ``c -> (psi(S_k c))_k`` with derivative and adjoint.

    Parameters
    ----------
    solver : WaveSolver
    sources : ndarray, shape (d, N, n_vertices) or (d, N, K)
        Nodal source fields.
    observation : SensorObservation or FullFieldObservation
    system : FourthOrderSystem
        Factorized smoothing system of the parameter space.
    """

    def __init__(self, solver: WaveSolver, sources, observation, system: FourthOrderSystem):
        self.solver = solver
        self.sources = np.asarray(sources, dtype=float)
        self.observation = observation
        self.system = system
        self.mesh = solver.mesh

    @property
    def d(self) -> int:
        return len(self.sources)

    def waves(self, c: np.ndarray) -> np.ndarray:
        """Stacked wave fields ``(d, N, K)``."""
        return self.solver.forward_solve_all(c, self.sources)

    def apply(self, c: np.ndarray):
        """``(Phi c, waves)``; the waves are reused by the derivative and its adjoint."""
        u_all = self.waves(c)
        return self.observation.apply(u_all), u_all

    def derivative(self, c: np.ndarray, u_all: np.ndarray, h: np.ndarray) -> np.ndarray:
        """``Phi'(c) h`` for a parameter direction ``h`` on all vertices."""
        return self.observation.apply(self.solver.derivative_solve(c, u_all, h))

    def adjoint(self, c: np.ndarray, u_all: np.ndarray, r: np.ndarray) -> np.ndarray:
        """``Phi'(c)* r`` as a parameter field on all vertices (zero on the boundary)."""
        loads = self.observation.adjoint_loads(r)
        if not np.any(loads):
            return np.zeros((self.solver.grid.N, self.mesh.n_vertices))
        z = np.moveaxis(self.solver.propagator(c).solve(loads, reverse=True), -1, 0)
        return smoothing_adjoint(u_all, z, self.system, self.solver.M, mesh=self.mesh)

    def data_inner(self, a, b) -> float:
        return self.observation.inner(a, b)

    def param_inner(self, p, q) -> float:
        """Weighted ``H^2``-in-time product of two parameter fields on all vertices."""
        interior = self.mesh.interior
        return x_inner(np.asarray(p)[:, interior], np.asarray(q)[:, interior],
                       self.system.weights, self.solver.M, self.solver.grid)

    def data_norm(self, a) -> float:
        return self.observation.norm(a)


def measure(op: MeasurementOperator, c: np.ndarray) -> np.ndarray:
    """``Phi c``: one row of sensor data (or one wave field) per source."""
    return op.apply(c)[0]


def measure_derivative_apply(op: MeasurementOperator, c, u_all, h) -> np.ndarray:
    return op.derivative(c, u_all, h)


def measure_derivative_adjoint(op: MeasurementOperator, c, u_all, r) -> np.ndarray:
    return op.adjoint(c, u_all, r)


def write_measurements(path, data: np.ndarray, layout: SensorLayout | None = None) -> None:
    """Write a ``(d, l)`` data array with its sensor table; values round-trip exactly."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError("measurement data must be a (d, l) array")
    d, l = data.shape
    with open(path, "w") as fh:
        fh.write("# wavepot measurements\n")
        fh.write(f"d {d}\nl {l}\n")
        if layout is None:
            fh.write("sensors 0\n")
        else:
            if layout.l != l:
                raise ValueError(f"layout has {layout.l} sensors, data has {l} columns")
            fh.write(f"sensors {layout.l} dim {layout.dim}\n")
            for t, x in zip(layout.times, layout.points):
                fh.write(" ".join(repr(float(v)) for v in (t, *x, layout.r_t, layout.r_x)) + "\n")
        fh.write("values\n")
        for row in data:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_measurements(path):
    """Inverse of ``write_measurements``: returns ``(data, layout or None)``."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    it = iter(lines)

    def field(name):
        parts = next(it).split()
        if parts[0] != name:
            raise ValueError(f"expected '{name}', found '{parts[0]}'")
        return parts[1:]

    d = int(field("d")[0])
    l = int(field("l")[0])
    head = field("sensors")
    layout = None
    if int(head[0]) > 0:
        dim = int(head[2])
        table = np.array([[float(v) for v in next(it).split()] for _ in range(int(head[0]))])
        layout = SensorLayout(table[:, 0], table[:, 1:1 + dim], float(table[0, -2]), float(table[0, -1]))
    field("values")
    data = np.array([[float(v) for v in next(it).split()] for _ in range(d)])
    if data.shape != (d, l):
        raise ValueError(f"data block has shape {data.shape}, header says {(d, l)}")
    return data, layout

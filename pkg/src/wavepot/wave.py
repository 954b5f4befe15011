"""Crank-Nicolson (theta-scheme) finite element solver for ``u'' - Laplace u + c u = f``.

Fields are plain arrays indexed ``[time, dof]``.  Wave fields live on the
interior dofs of the mesh (shape ``(N, K)``); parameter fields live on all
vertices (shape ``(N, n_vertices)``).  Several right-hand sides are stacked
along a trailing axis, ``(N, K, d)``.

The velocity is never formed; only ``M v`` is carried between steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import ConvergenceError, cg_solve
from .mesh import Mesh, P1Assembler

__all__ = [
    "TimeGrid",
    "WaveSolver",
    "Propagator",
    "WaveSolveError",
    "discrete_energy",
    "write_field_csv",
    "write_field_vtk",
]


class WaveSolveError(RuntimeError):
    """Linear solve inside time stepping failed."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid ``t_i = i * dt`` for ``i = 0 .. N-1``, ``N = 1 + ceil(T / dt)``."""

    T: float
    dt: float

    def __post_init__(self):
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("T and dt must be positive")

    @property
    def N(self) -> int:
        # guard against T/dt landing a rounding error above an integer
        return 1 + math.ceil(self.T / self.dt - 1e-9)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N) * self.dt

    @property
    def trapezoid(self) -> np.ndarray:
        """Trapezoidal quadrature weights ``omega_i * dt``."""
        w = np.full(self.N, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


class Propagator:
    """Time stepper bound to one parameter field ``c``.

    Step matrices ``A^i = K + W(c(t_i))`` are assembled once and shared by
    every solve with this parameter, forward in time or time-reversed.
    """

    def __init__(self, solver: "WaveSolver", c: np.ndarray):
        c = np.asarray(c, dtype=float)
        expected = (solver.grid.N, solver.mesh.n_vertices)
        if c.shape != expected:
            raise ValueError(f"parameter has shape {c.shape}, expected {expected}")
        if not np.all(np.isfinite(c)):
            raise ValueError("parameter contains non-finite values")
        self.solver = solver
        self.c = c
        asm = solver.assembler
        self.A_data = asm.stiffness_data[None, :] + asm.weighted_mass_data(c)

    def solve(self, loads: np.ndarray, reverse: bool = False) -> np.ndarray:
        """March the scheme for load vectors ``L^i = <f(t_i), phi_j>``.

        Parameters
        ----------
        loads : ndarray, shape (N, K) or (N, K, d)
        reverse : bool
            Solve in reversed time, for the adjoint problem with zero end
            conditions; input and output are in forward time order.
        """
        solver = self.solver
        loads = np.asarray(loads, dtype=float)
        single = loads.ndim == 2
        L = loads[:, :, None] if single else loads
        A_data = self.A_data
        if reverse:
            L = L[::-1]
            A_data = A_data[::-1]
        u = solver._march(A_data, L)
        if reverse:
            u = u[::-1]
        return u[:, :, 0] if single else u


class WaveSolver:
    """Forward, linearized and adjoint wave solves on a fixed mesh and time grid.

    Parameters
    ----------
    mesh : Mesh
    grid : TimeGrid
    theta : float
        Scheme weight in ``(0, 1]``; ``0.5`` is Crank-Nicolson.
    tol : float
        Relative residual tolerance of the CG solve in every step.
    product : {"nodal", "galerkin"}
        Discretization of the product ``h u`` in the linearized source.
    """

    def __init__(self, mesh: Mesh, grid: TimeGrid, theta: float = 0.5, tol: float = 1e-10,
                 maxit: int | None = None, product: str = "nodal"):
        if not 0.0 < theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        if product not in ("nodal", "galerkin"):
            raise ValueError(f"unknown product discretization {product!r}")
        self.mesh = mesh
        self.grid = grid
        self.theta = theta
        self.tol = tol
        self.maxit = maxit if maxit is not None else 10 * max(mesh.K, 1)
        self.product = product
        self.assembler = P1Assembler(mesh)
        self.M = self.assembler.mass()
        self.stiffness = self.assembler.stiffness()
        self._cache_key = None
        self._cache = None

    @property
    def K(self) -> int:
        return self.mesh.K

    def propagator(self, c: np.ndarray) -> Propagator:
        """Propagator for ``c``; the most recent one is cached."""
        c = np.asarray(c, dtype=float)
        if self._cache is not None and self._cache_key.shape == c.shape and np.array_equal(self._cache_key, c):
            return self._cache
        prop = Propagator(self, c)
        self._cache_key = c.copy()
        self._cache = prop
        return prop

    def loads(self, f: np.ndarray) -> np.ndarray:
        """Load vectors ``M f^i`` of a nodal source, ``(N, K)`` or ``(N, K, d)``.

        Sources given on all vertices are restricted to the interior dofs.
        """
        f = np.asarray(f, dtype=float)
        if f.shape[1] == self.mesh.n_vertices and f.shape[1] != self.K:
            f = f[:, self.mesh.interior]
        if f.shape[:2] != (self.grid.N, self.K):
            raise ValueError(f"source has shape {f.shape}, expected ({self.grid.N}, {self.K}, ...)")
        if f.ndim == 2:
            return (self.M @ f.T).T
        return self._loads_block(f)

    def _loads_block(self, f):
        N, K, d = f.shape
        flat = f.transpose(1, 0, 2).reshape(K, N * d)
        return (self.M @ flat).reshape(K, N, d).transpose(1, 0, 2)

    def _march(self, A_data: np.ndarray, L: np.ndarray, keep_mv: bool = False):
        N, K, d = L.shape
        th, dt = self.theta, self.dt
        asm = self.assembler
        mass_data = asm.mass_data
        u = np.zeros((N, K, d))
        mv = np.zeros((K, d))
        mv_hist = np.zeros((N, K, d)) if keep_mv else None
        Au_prev = np.zeros((K, d))
        if not np.any(L):
            return (u, mv_hist) if keep_mv else u
        for i in range(1, N):
            F = th * L[i] + (1.0 - th) * L[i - 1]
            S = asm.matrix(mass_data + (th * dt) ** 2 * A_data[i])
            rhs = th * dt**2 * F + self.M @ u[i - 1] + dt * mv
            if th < 1.0:
                rhs -= dt**2 * th * (1.0 - th) * Au_prev
            guess = 2.0 * u[i - 1] - u[i - 2] if i >= 2 else u[i - 1]
            try:
                u[i] = cg_solve(S, rhs, tol=self.tol, maxit=self.maxit, x0=guess,
                                diag=S.data[asm.diag_slots])
            except ConvergenceError as exc:
                raise WaveSolveError(f"time step {i} (t={i * dt:.4g}): {exc}") from exc
            Au = asm.matrix(A_data[i]) @ u[i]
            mv = dt * F + mv - dt * th * Au - dt * (1.0 - th) * Au_prev
            Au_prev = Au
            if keep_mv:
                mv_hist[i] = mv
        return (u, mv_hist) if keep_mv else u

    @property
    def dt(self) -> float:
        return self.grid.dt

    def forward_solve(self, c: np.ndarray, f: np.ndarray) -> np.ndarray:
        """Wave field ``u = S c`` for one nodal source ``f`` (``(N, K)``)."""
        return self.propagator(c).solve(self.loads(f))

    def forward_solve_all(self, c: np.ndarray, sources) -> np.ndarray:
        """Stacked wave fields ``(d, N, K)`` for every source of a source set."""
        F = np.stack([np.asarray(f, dtype=float) for f in sources], axis=-1)
        if F.shape[1] == self.mesh.n_vertices and F.shape[1] != self.K:
            F = F[:, self.mesh.interior]
        u = self.propagator(c).solve(self.loads(F))
        return np.moveaxis(u, -1, 0)

    def product_loads(self, h: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Load vectors of the product ``h u`` (``h`` on vertices, ``u`` interior).

        ``u`` may carry a leading source axis ``(d, N, K)``; the result then
        has shape ``(N, K, d)``.
        """
        h = np.asarray(h, dtype=float)
        u = np.asarray(u, dtype=float)
        stacked = u.ndim == 3
        U = np.moveaxis(u, 0, -1) if stacked else u[:, :, None]
        if self.product == "nodal":
            hu = h[:, self.mesh.interior, None] * U
            out = self._loads_block(hu)
        else:
            asm = self.assembler
            W = asm.weighted_mass_data(h)
            out = np.empty_like(U)
            for i in range(self.grid.N):
                out[i] = asm.matrix(W[i]) @ U[i]
        return out if stacked else out[:, :, 0]

    def derivative_solve(self, c: np.ndarray, u: np.ndarray, h: np.ndarray) -> np.ndarray:
        """Linearized wave ``S'(c)[h]``: source ``-h u``, zero initial data.

        ``u`` is ``(N, K)`` or stacked ``(d, N, K)``; the result has the same shape.
        """
        loads = -self.product_loads(h, u)
        out = self.propagator(c).solve(loads)
        return np.moveaxis(out, -1, 0) if np.ndim(u) == 3 else out

    def adjoint_wave_solve(self, c: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Adjoint solve ``L_c^* z``: same equation with zero end conditions at ``T``.

        ``z`` is ``(N, K)`` or stacked ``(d, N, K)``.
        """
        z = np.asarray(z, dtype=float)
        stacked = z.ndim == 3
        Z = np.moveaxis(z, 0, -1) if stacked else z
        loads = self.loads(Z) if not stacked else self._loads_block(Z)
        out = self.propagator(c).solve(loads, reverse=True)
        return np.moveaxis(out, -1, 0) if stacked else out

    def velocity_mass(self, c: np.ndarray, f: np.ndarray):
        """Forward solve returning ``(u, M v)`` histories, for energy diagnostics."""
        prop = self.propagator(c)
        u, mv = self._march(prop.A_data, self.loads(f)[:, :, None], keep_mv=True)
        return u[:, :, 0], mv[:, :, 0]


def discrete_energy(solver: WaveSolver, u: np.ndarray, mv: np.ndarray) -> np.ndarray:
    """``0.5 v^T M v + 0.5 u^T A u`` per time step with ``A`` the stiffness matrix."""
    v = cg_solve(solver.M, mv.T, tol=1e-14, diag=solver.M.diagonal()).T
    return 0.5 * np.einsum("ij,ij->i", v, mv) + 0.5 * np.einsum("ij,ij->i", u, (solver.stiffness @ u.T).T)


def write_field_csv(path, mesh: Mesh, grid: TimeGrid, values: np.ndarray) -> None:
    """Vertex coordinates followed by one column per time index."""
    values = np.asarray(values, dtype=float)
    if values.shape[1] == mesh.K and mesh.K != mesh.n_vertices:
        values = mesh.to_vertices(values)
    coords = [f"x{j}" for j in range(mesh.dim)]
    header = ",".join(coords + [f"t{i}" for i in range(grid.N)])
    table = np.hstack([mesh.vertices, values.T])
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.17g")


def write_field_vtk(path, mesh: Mesh, values_at_time: np.ndarray, name: str = "field") -> None:
    """Legacy ASCII VTK unstructured grid of one time slice (``n >= 2``)."""
    if mesh.dim < 2:
        raise ValueError("VTK export is provided for n >= 2")
    values = np.asarray(values_at_time, dtype=float)
    if values.shape[0] == mesh.K and mesh.K != mesh.n_vertices:
        values = mesh.to_vertices(values)
    cell_type = 5 if mesh.dim == 2 else 10
    pts = np.zeros((mesh.n_vertices, 3))
    pts[:, : mesh.dim] = mesh.vertices
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{name}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_vertices} double\n")
        np.savetxt(fh, pts, fmt="%.17g")
        nc = mesh.n_simplices
        fh.write(f"CELLS {nc} {nc * (mesh.dim + 2)}\n")
        np.savetxt(fh, np.hstack([np.full((nc, 1), mesh.dim + 1), mesh.simplices]), fmt="%d")
        fh.write(f"CELL_TYPES {nc}\n")
        np.savetxt(fh, np.full(nc, cell_type), fmt="%d")
        fh.write(f"POINT_DATA {mesh.n_vertices}\nSCALARS {name} double 1\nLOOKUP_TABLE default\n")
        np.savetxt(fh, values, fmt="%.17g")

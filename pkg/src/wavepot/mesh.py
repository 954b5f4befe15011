"""Structured simplicial meshes of the unit cube and P1 finite element matrices.

The mesh is a tensor grid with ``2**refinements`` cells per direction, each
cell split into ``n!`` simplices (Kuhn/Freudenthal subdivision).  Test and
trial functions live on the interior vertices (homogeneous Dirichlet data);
nodal parameter fields live on all vertices.

Examples
--------
>>> mesh = build_unit_cube_mesh(1, 6)
>>> mesh.n_vertices, mesh.n_simplices, mesh.K
(65, 64, 63)
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import factorial

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Mesh",
    "P1Assembler",
    "build_unit_cube_mesh",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_weighted_mass",
    "interpolate",
    "write_mesh_text",
]


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming simplicial mesh with boundary flags and interior dof map.

    Attributes
    ----------
    dim : int
        Spatial dimension ``n``.
    vertices : ndarray, shape (n_vertices, dim)
    simplices : ndarray, shape (n_simplices, dim + 1)
        Vertex indices of each simplex.
    boundary_mask : ndarray of bool, shape (n_vertices,)
    interior : ndarray of int, shape (K,)
        Vertex index of every interior degree of freedom.
    dof_of_vertex : ndarray of int, shape (n_vertices,)
        Interior dof index of each vertex, ``-1`` on the boundary.
    """

    dim: int
    vertices: np.ndarray
    simplices: np.ndarray
    boundary_mask: np.ndarray
    interior: np.ndarray = field(init=False)
    dof_of_vertex: np.ndarray = field(init=False)

    def __post_init__(self):
        interior = np.flatnonzero(~self.boundary_mask)
        dof = np.full(len(self.vertices), -1, dtype=np.intp)
        dof[interior] = np.arange(len(interior))
        object.__setattr__(self, "interior", interior)
        object.__setattr__(self, "dof_of_vertex", dof)
        for arr in (self.vertices, self.simplices, self.boundary_mask, interior, dof):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_simplices(self) -> int:
        return len(self.simplices)

    @property
    def K(self) -> int:
        """Number of interior degrees of freedom."""
        return len(self.interior)

    @property
    def h(self) -> float:
        """Largest edge length."""
        x = self.vertices[self.simplices]
        hmax = 0.0
        for a, b in itertools.combinations(range(self.dim + 1), 2):
            hmax = max(hmax, float(np.linalg.norm(x[:, a] - x[:, b], axis=1).max()))
        return hmax

    def volumes(self) -> np.ndarray:
        """Measure of every simplex."""
        x = self.vertices[self.simplices]
        jac = x[:, 1:, :] - x[:, :1, :]
        return np.abs(np.linalg.det(jac)) / factorial(self.dim)

    def scaled(self, factor: float) -> "Mesh":
        """Copy of the mesh with all coordinates multiplied by ``factor``."""
        return Mesh(self.dim, self.vertices * factor, self.simplices, self.boundary_mask)

    def to_interior(self, values: np.ndarray) -> np.ndarray:
        """Restrict vertex values (last axis) to interior dofs."""
        return np.asarray(values)[..., self.interior]

    def to_vertices(self, values: np.ndarray) -> np.ndarray:
        """Extend interior dof values (last axis) by zero to all vertices."""
        values = np.asarray(values)
        out = np.zeros(values.shape[:-1] + (self.n_vertices,), dtype=values.dtype)
        out[..., self.interior] = values
        return out


def build_unit_cube_mesh(n: int, refinements: int) -> Mesh:
    """Kuhn triangulation of ``[0, 1]**n`` after ``refinements`` uniform refinements.

    Each refinement halves the mesh width and multiplies the simplex
    count by ``2**n``.
    """
    if n not in (1, 2, 3):
        raise ValueError(f"unsupported dimension n={n}; expected 1, 2 or 3")
    if refinements < 0:
        raise ValueError("refinements must be non-negative")
    m = 2**refinements
    axes = [np.arange(m + 1)] * n
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    vertices = grid / m
    strides = np.array([(m + 1) ** (n - 1 - j) for j in range(n)])

    corners = np.stack(np.meshgrid(*([np.arange(m)] * n), indexing="ij"), axis=-1).reshape(-1, n)
    # vertices of simplex (corner, perm): corner + cumulative unit steps
    simplices = []
    for perm in itertools.permutations(range(n)):
        walk = np.zeros((n + 1, n), dtype=int)
        for j, axis in enumerate(perm):
            walk[j + 1] = walk[j]
            walk[j + 1, axis] += 1
        simplices.append((corners @ strides)[:, None] + (walk @ strides)[None, :])
    simplices = np.concatenate(simplices, axis=0).astype(np.intp)

    boundary = np.any((grid == 0) | (grid == m), axis=1)
    return Mesh(n, vertices, simplices, boundary)


def _barycentric_gradients(mesh: Mesh):
    x = mesh.vertices[mesh.simplices]
    jac = x[:, 1:, :] - x[:, :1, :]
    inv = np.linalg.inv(jac)
    grads = np.concatenate([-inv.sum(axis=1, keepdims=True), inv], axis=1)
    vol = np.abs(np.linalg.det(jac)) / factorial(mesh.dim)
    return grads, vol


def _local_mass(dim: int) -> np.ndarray:
    nv = dim + 1
    return (np.ones((nv, nv)) + np.eye(nv)) / ((dim + 1) * (dim + 2))


def _local_triple(dim: int) -> np.ndarray:
    """Integrals of ``lambda_a * lambda_b * lambda_c`` over a unit-volume simplex."""
    nv = dim + 1
    t = np.empty((nv, nv, nv))
    for a, b, c in itertools.product(range(nv), repeat=3):
        counts = np.bincount([a, b, c], minlength=nv)
        t[a, b, c] = np.prod([factorial(k) for k in counts])
    return t * factorial(dim) / factorial(dim + 3)


class P1Assembler:
    """Assembles P1 matrices on a fixed sparsity pattern.

    All matrices (mass, stiffness, weighted mass) share one CSR pattern, so
    that time-stepping code can combine them through their ``data`` arrays.
    The weighted mass matrix is linear in the weight; its data array is
    ``self.weight_map @ w``.

    Parameters
    ----------
    mesh : Mesh
    full : bool
        Assemble over all vertices instead of the interior dofs.
    """

    def __init__(self, mesh: Mesh, full: bool = False):
        self.mesh = mesh
        self.full = full
        nv = mesh.dim + 1
        if full:
            dof = np.arange(mesh.n_vertices)
            size = mesh.n_vertices
        else:
            dof = mesh.dof_of_vertex
            size = mesh.K
        self.size = size

        cells = dof[mesh.simplices]
        rows = np.repeat(cells, nv, axis=1).ravel()
        cols = np.tile(cells, (1, nv)).ravel()
        keep = (rows >= 0) & (cols >= 0)
        keys = rows[keep].astype(np.int64) * size + cols[keep]
        unique, self._slot = np.unique(keys, return_inverse=True)
        self._keep = keep
        indptr = np.searchsorted(unique, np.arange(size + 1, dtype=np.int64) * size)
        self.indices = (unique % size).astype(np.int32)
        self.indptr = indptr.astype(np.int32)
        self.nnz = len(unique)
        row_of_slot = np.repeat(np.arange(size), np.diff(indptr))
        self.diag_slots = np.flatnonzero(self.indices == row_of_slot)

        grads, vol = _barycentric_gradients(mesh)
        self._vol = vol
        self._grads = grads
        local_m = vol[:, None, None] * _local_mass(mesh.dim)[None]
        local_k = vol[:, None, None] * np.einsum("eai,ebi->eab", grads, grads)
        self.mass_data = self._scatter(local_m)
        self.stiffness_data = self._scatter(local_k)

        triple = _local_triple(mesh.dim)
        ne = mesh.n_simplices
        vals = (vol[:, None, None, None] * triple[None]).reshape(ne, nv * nv, nv)
        slot_full = np.full(keep.shape, -1, dtype=np.intp)
        slot_full[keep] = self._slot
        slot_full = slot_full.reshape(ne, nv * nv)
        entry = np.broadcast_to(slot_full[:, :, None], vals.shape)
        vertex = np.broadcast_to(mesh.simplices[:, None, :], vals.shape)
        mask = entry >= 0
        self.weight_map = sp.csr_matrix(
            (vals[mask], (entry[mask], vertex[mask])), shape=(self.nnz, mesh.n_vertices)
        )

    def _scatter(self, local: np.ndarray) -> np.ndarray:
        return np.bincount(self._slot, weights=local.reshape(-1)[self._keep], minlength=self.nnz)

    def matrix(self, data: np.ndarray) -> sp.csr_matrix:
        """CSR matrix on the shared pattern with the given data array."""
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.size, self.size))

    def mass(self) -> sp.csr_matrix:
        return self.matrix(self.mass_data.copy())

    def stiffness(self) -> sp.csr_matrix:
        return self.matrix(self.stiffness_data.copy())

    def weighted_mass_data(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        if w.shape[-1] != self.mesh.n_vertices:
            raise ValueError(
                f"weight has {w.shape[-1]} values, mesh has {self.mesh.n_vertices} vertices"
            )
        if w.ndim == 1:
            return self.weight_map @ w
        return (self.weight_map @ w.reshape(-1, w.shape[-1]).T).T.reshape(w.shape[:-1] + (self.nnz,))

    def weighted_mass(self, w: np.ndarray) -> sp.csr_matrix:
        return self.matrix(self.weighted_mass_data(w))


def assemble_mass(mesh: Mesh, full: bool = False) -> sp.csr_matrix:
    """Mass matrix ``(<phi_k, phi_j>)`` over interior dofs (or all vertices)."""
    return P1Assembler(mesh, full).mass()


def assemble_stiffness(mesh: Mesh, full: bool = False) -> sp.csr_matrix:
    """Stiffness matrix ``(<grad phi_k, grad phi_j>)`` with Dirichlet dofs eliminated."""
    return P1Assembler(mesh, full).stiffness()


def assemble_weighted_mass(mesh: Mesh, w, full: bool = False) -> sp.csr_matrix:
    """Matrix ``(int I_h[w] phi_k phi_j)`` for a nodal weight on all vertices.

    Integration is exact (the integrand is piecewise cubic).
    """
    return P1Assembler(mesh, full).weighted_mass(w)


def interpolate(mesh: Mesh, g) -> np.ndarray:
    """Vertex values of ``g``; ``g`` takes an ``(m, dim)`` array of points."""
    return np.asarray(g(mesh.vertices), dtype=float).reshape(mesh.n_vertices)


def write_mesh_text(mesh: Mesh, path) -> None:
    """Plain-text listing of vertices and simplices, for debugging."""
    with open(path, "w") as fh:
        fh.write(f"dim {mesh.dim}\n")
        fh.write(f"vertices {mesh.n_vertices}\n")
        for x, b in zip(mesh.vertices, mesh.boundary_mask):
            fh.write(" ".join(repr(float(v)) for v in x) + f" {int(b)}\n")
        fh.write(f"simplices {mesh.n_simplices}\n")
        for s in mesh.simplices:
            fh.write(" ".join(str(int(v)) for v in s) + "\n")

"""Numerical self-checks of the solver chain, used by ``wavepot selftest``.

Each check returns ``(value, passed)`` for a fixed threshold.
"""

from __future__ import annotations

import warnings

import numpy as np

from .measurement import SensorLayout, apply_psi_star, build_psi
from .mesh import build_unit_cube_mesh
from .param_space import l2l2_inner
from .scenarios import Scenario, build_setup, parameter_field
from .wave import TimeGrid, WaveSolver

__all__ = ["analytic_oracle", "energy_drift", "taylor_ratios", "psi_adjoint", "derivative_adjoint", "run_all"]


def analytic_oracle(refinements=7, dt=5e-3, T=2.0):
    """Relative final-time ``L^2`` error against ``sin(x)(sin t - t cos t)`` on ``(0, pi)``."""
    mesh = build_unit_cube_mesh(1, refinements).scaled(np.pi)
    grid = TimeGrid(T, dt)
    solver = WaveSolver(mesh, grid)
    x = mesh.vertices[mesh.interior, 0]
    f = 2.0 * np.sin(x)[None, :] * np.sin(grid.times)[:, None]
    u = solver.forward_solve(np.zeros((grid.N, mesh.n_vertices)), f)
    tN = grid.times[-1]
    exact = np.sin(x) * (np.sin(tN) - tN * np.cos(tN))
    e = u[-1] - exact
    err = np.sqrt(e @ (solver.M @ e) / (exact @ (solver.M @ exact)))
    return err, err <= 1e-2


def energy_drift(refinements=6, dt=1e-2, T=2.0, t_off=0.5, t_check=0.6):
    """Largest relative energy deviation after the source is switched off."""
    from .wave import discrete_energy

    mesh = build_unit_cube_mesh(1, refinements)
    grid = TimeGrid(T, dt)
    solver = WaveSolver(mesh, grid)
    x = mesh.vertices[mesh.interior, 0]
    t = grid.times
    f = np.exp(-100 * (x - 0.5) ** 2)[None, :] * (np.sin(2 * np.pi * t / t_off) * (t <= t_off))[:, None]
    u, mv = solver.velocity_mass(np.zeros((grid.N, mesh.n_vertices)), f)
    energy = discrete_energy(solver, u, mv)
    tail = energy[t >= t_check]
    drift = float(np.max(np.abs(tail - tail[0])) / tail[0])
    return drift, drift <= 1e-8


def taylor_ratios(eps_list=(1e-1, 3e-2, 1e-2), seed=0):
    """Second-order Taylor remainders ``||S(c + e h) - S(c) - e S'(c) h|| / e**2``."""
    s = Scenario(n=1, parameter="plateau")
    setup = build_setup(s)
    solver, mesh, grid = setup.solver, setup.mesh, setup.grid
    c = parameter_field(s, mesh, grid)
    rng = np.random.default_rng(seed)
    t = grid.times[:, None] / grid.T
    x = mesh.vertices[None, :, 0]
    h = np.zeros_like(c)
    for a in range(1, 4):
        for b in range(1, 4):
            h += rng.standard_normal() * np.sin(a * np.pi * t) * np.sin(b * np.pi * x)
    h *= 10.0
    sources = setup.operator.sources
    u = solver.forward_solve_all(c, sources)
    du = solver.derivative_solve(c, u, h)
    ratios = []
    for eps in eps_list:
        ue = solver.forward_solve_all(c + eps * h, sources)
        r = ue - u - eps * du
        ratios.append(np.sqrt(l2l2_inner(r, r, solver.M, grid)) / eps**2)
    ratios = np.array(ratios)
    spread = ratios.max() / ratios.min() - 1.0
    return ratios, spread < 0.25


def psi_adjoint(seed=0):
    """Relative defect of ``<psi u, y> = l2l2(u, psi* y)`` for random ``u``, ``y``."""
    mesh = build_unit_cube_mesh(1, 6)
    grid = TimeGrid(2.0, 1e-2)
    rng = np.random.default_rng(seed)
    layout = SensorLayout(rng.uniform(0.1, 1.9, 30), rng.uniform(0.1, 0.9, (30, 1)), 0.05, 0.1)
    psi = build_psi(mesh, grid, layout)
    u = rng.standard_normal((grid.N, mesh.K))
    y = rng.standard_normal(layout.l)
    lhs = psi.apply(u) @ y
    rhs = l2l2_inner(u, apply_psi_star(psi, y), psi.mass, grid)
    err = abs(lhs - rhs) / abs(lhs)
    return err, err <= 1e-10


def derivative_adjoint(refinements=4, dt=0.05, sensors="grid"):
    """Relative defect of ``<Phi' h, r> = <h, Phi'* r>_X`` on a coarse 1D setup."""
    s = Scenario(n=1, parameter="plateau", sensors=sensors, refinements=refinements, dt=dt)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        setup = build_setup(s)
    op, mesh, grid = setup.operator, setup.mesh, setup.grid
    c = 0.5 * parameter_field(s, mesh, grid)
    _, u = op.apply(c)
    t = grid.times[:, None]
    x = mesh.vertices[None, :, 0]
    h = np.sin(np.pi * x) * np.cos(1.3 * t + 0.2) * (1 + x)
    r = op.derivative(c, u, np.sin(2 * np.pi * x) * np.sin(2 * t))
    lhs = op.data_inner(op.derivative(c, u, h), r)
    rhs = op.param_inner(h, op.adjoint(c, u, r))
    err = abs(lhs - rhs) / abs(lhs)
    return err, err <= 5e-2


def run_all(out=print):
    """Run every check; returns True when all pass."""
    ok = True
    checks = [
        ("analytic oracle (final-time rel L2 error)", analytic_oracle),
        ("energy conservation (rel drift)", energy_drift),
        ("Taylor remainder ratios", taylor_ratios),
        ("psi/psi* adjoint (rel defect)", psi_adjoint),
        ("Phi'/Phi'* adjoint (rel defect)", derivative_adjoint),
    ]
    for name, fn in checks:
        value, passed = fn()
        ok &= bool(passed)
        shown = np.array2string(np.asarray(value), precision=4) if np.ndim(value) else f"{value:.3e}"
        out(f"{'PASS' if passed else 'FAIL'}  {name}: {shown}")
    return ok

"""Synthetic reconstruction experiments: parameters, actuators, sensors, noise, metrics.

All experiment constants live in ``Scenario``; its defaults are the values
of the reference study (``T = 2``, ``dt = 1e-2``, ``2**n`` actuators at
``{1/3, 2/3}**n`` driven at ``8 pi``, smoothing weights ``2e-2`` and
``2e-3``, discrepancy factor 2).
"""

from __future__ import annotations

import configparser
import dataclasses
import itertools
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .measurement import (
    FullFieldObservation,
    MeasurementOperator,
    SensorLayout,
    SensorObservation,
    build_psi,
    write_measurements,
)
from .mesh import Mesh, P1Assembler, build_unit_cube_mesh
from .param_space import SmoothingWeights, build_fourth_order_system, l2l2_inner, x_inner
from .reginn import ReginnParams, ReginnState, reginn_solve
from .wave import TimeGrid, WaveSolver, write_field_csv

__all__ = [
    "DEFAULT_REFINEMENTS",
    "ScenarioError",
    "Scenario",
    "ErrorReport",
    "c_hat_eval",
    "c_plateau_eval",
    "actuator_positions",
    "source_eval",
    "sensor_layout",
    "add_noise",
    "error_report",
    "Setup",
    "build_setup",
    "synthesize",
    "run_scenario",
    "convergence_study",
    "fit_order",
    "read_config",
    "scenario_from_mapping",
    "write_config",
    "read_parameter_csv",
]

DEFAULT_REFINEMENTS = {1: 6, 2: 5, 3: 4}


class ScenarioError(RuntimeError):
    """A scenario stage failed; the message names the stage."""


def _bump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def c_hat_eval(t, x):
    """Moving smooth bump of height 20 and radius 1/4 centred at ``(1 + t)/4`` on the diagonal.

    ``x`` has a trailing coordinate axis; ``t`` broadcasts against the rest.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    centre = (1.0 + t)[..., None] / 4.0
    return 20.0 * _bump(4.0 * np.linalg.norm(x - centre, axis=-1))


def c_plateau_eval(t, x):
    """``20 (1 - (t - 1)**2)`` inside the ball of radius 1/4 about the cube centre, else 0."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    inside = np.linalg.norm(x - 0.5, axis=-1) < 0.25
    return np.where(inside, 20.0 * (1.0 - np.abs(t - 1.0) ** 2), 0.0)


def actuator_positions(n: int) -> np.ndarray:
    """All points of ``{1/3, 2/3}**n`` in lexicographic order."""
    return np.array(list(itertools.product((1.0 / 3.0, 2.0 / 3.0), repeat=n)))


def source_eval(k: int, t, x, n: int | None = None, omega: float = 8 * np.pi, radius: float = 0.1):
    """Tent-shaped actuator ``k`` oscillating as ``sin(omega t)`` for ``t >= 0``."""
    x = np.asarray(x, dtype=float)
    x2 = x if x.ndim else x[None]
    n = x2.shape[-1] if n is None else n
    pos = actuator_positions(n)
    if not 0 <= k < len(pos):
        raise IndexError(f"actuator index {k} out of range for n={n}")
    t = np.asarray(t, dtype=float)
    dist = np.linalg.norm(x2 - pos[k], axis=-1)
    space = np.where(dist <= radius, 1.0 - dist / radius, 0.0)
    return np.where(t >= 0, space * np.sin(omega * t), 0.0)


def sensor_layout(kind: str, n: int, T: float = 2.0, r_t: float = 0.02, r_x: float | None = None,
                  n_times: int = 20) -> SensorLayout:
    """Sensor arrangement.

    ``grid``: ``5**n`` positions on ``{0.1, 0.3, 0.5, 0.7, 0.9}**n``.
    ``lshape`` (``n = 2``): 25 positions along the left and lower edges, at
    distance ``r_x`` from the boundary.  Every position is read at the
    times ``j T / (n_times + 1)``, ``j = 1 .. n_times``.
    """
    kind = kind.lower()
    if kind == "grid":
        r_x = 0.05 if r_x is None else r_x
        axis = np.array([0.1, 0.3, 0.5, 0.7, 0.9])
        pos = np.array(list(itertools.product(axis, repeat=n)))
    elif kind == "lshape":
        if n != 2:
            raise ValueError("the L-shaped layout is defined for n = 2 only")
        r_x = 0.035 if r_x is None else r_x
        s = np.linspace(r_x, 1.0 - r_x, 13)
        left = np.column_stack([np.full(13, r_x), s])
        lower = np.column_stack([s[1:], np.full(12, r_x)])
        pos = np.vstack([left, lower])
    else:
        raise ValueError(f"unknown sensor layout '{kind}'")
    times = T * np.arange(1, n_times + 1) / (n_times + 1)
    # time-major: all positions at t_1, then all at t_2, ...
    tt = np.repeat(times, len(pos))
    xx = np.tile(pos, (n_times, 1))
    return SensorLayout(tt, xx, r_t, r_x)


def add_noise(data, epsilon: float, seed: int, norm=None):
    """Add uniform noise in ``[-1, 1]`` rescaled to relative level exactly ``epsilon``.

    ``norm`` measures the data (Euclidean by default); the rescaling is
    global over all sources.  The generator is numpy's PCG64 seeded with
    ``seed``.
    """
    data = np.asarray(data, dtype=float)
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if epsilon == 0:
        return data.copy()
    norm = np.linalg.norm if norm is None else norm
    size = norm(data)
    if size == 0:
        raise ValueError("cannot add relative noise to zero data")
    rng = np.random.Generator(np.random.PCG64(seed))
    noise = rng.uniform(-1.0, 1.0, size=data.shape)
    return data + noise * (epsilon * size / norm(noise))


@dataclass
class ErrorReport:
    rel_l2: float
    rel_h2: float
    rel_x: float = float("nan")
    k_star: int = 0
    stopped: str = ""
    runtime: float = float("nan")
    residual_history: list = field(default_factory=list)
    inner_counts: list = field(default_factory=list)

    def to_text(self) -> str:
        """Deterministic summary (wall-clock time is left out)."""
        lines = [
            f"rel_l2 {self.rel_l2!r}",
            f"rel_h2 {self.rel_h2!r}",
            f"rel_x {self.rel_x!r}",
            f"k_star {self.k_star}",
            f"stopped {self.stopped}",
            "inner_counts " + " ".join(str(i) for i in self.inner_counts),
            "residuals " + " ".join(repr(float(r)) for r in self.residual_history),
        ]
        return "\n".join(lines) + "\n"


def error_report(c_rec, c_exact, mass, grid: TimeGrid, state: ReginnState | None = None,
                 weights: SmoothingWeights | None = None) -> ErrorReport:
    """Relative ``L^2(0,T; L^2)`` and ``H^2(0,T; L^2)`` errors.

    ``mass`` must match the spatial size of the fields (the full vertex mass
    matrix for parameter fields).  ``rel_h2`` uses unit derivative weights;
    ``rel_x`` uses ``weights`` (the parameter-space norm) when given.
    """
    c_rec = np.asarray(c_rec, dtype=float)
    c_exact = np.asarray(c_exact, dtype=float)
    e = c_rec - c_exact
    ref = l2l2_inner(c_exact, c_exact, mass, grid)
    if ref <= 0:
        raise ValueError("exact parameter is zero")
    unit = SmoothingWeights(1.0, 1.0)
    rel_l2 = math.sqrt(max(l2l2_inner(e, e, mass, grid), 0.0) / ref)
    rel_h2 = math.sqrt(max(x_inner(e, e, unit, mass, grid), 0.0) / x_inner(c_exact, c_exact, unit, mass, grid))
    rep = ErrorReport(rel_l2, rel_h2)
    if weights is not None:
        rep.rel_x = math.sqrt(max(x_inner(e, e, weights, mass, grid), 0.0)
                              / x_inner(c_exact, c_exact, weights, mass, grid))
    if state is not None:
        rep.k_star = state.k
        rep.stopped = state.stopped.value
        rep.residual_history = [float(r) for r in state.residual_history]
        rep.inner_counts = list(state.inner_counts)
    return rep


@dataclass
class Scenario:
    """One reconstruction experiment.

    ``parameter`` is ``"hat"``, ``"plateau"`` or the path of a field CSV
    (vertex coordinates followed by one column per time node).
    ``sensors`` is ``"full"``, ``"grid"`` or ``"lshape"``.  ``refinements``
    and ``r_x`` default by dimension and layout when left at ``None``.
    ``synthesis_extra_refinements > 0`` generates the data on a finer mesh.
    """

    n: int = 1
    parameter: str = "plateau"
    sensors: str = "full"
    epsilon: float = 1e-2
    seed: int = 0
    T: float = 2.0
    dt: float = 1e-2
    refinements: int | None = None
    omega: float = 8 * np.pi
    actuator_radius: float = 0.1
    r_t: float = 0.02
    r_x: float | None = None
    n_sensor_times: int = 20
    alpha: float = 2e-2
    beta: float = 2e-3
    tau: float = 2.0
    mu_start: float = 0.7
    gamma: float = 0.9
    mu_max: float = 0.99
    max_outer: int = 50
    max_inner: int = 500
    theta: float = 0.5
    cg_tol: float = 1e-10
    product: str = "nodal"
    synthesis_extra_refinements: int = 0

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError(f"unsupported dimension n={self.n}")
        if self.sensors not in ("full", "grid", "lshape"):
            raise ValueError(f"unknown sensor layout '{self.sensors}'")
        if self.sensors == "lshape" and self.n != 2:
            raise ValueError("the L-shaped layout is defined for n = 2 only")

    @property
    def resolved_refinements(self) -> int:
        return DEFAULT_REFINEMENTS[self.n] if self.refinements is None else self.refinements

    @property
    def weights(self) -> SmoothingWeights:
        return SmoothingWeights(self.alpha, self.beta)

    @property
    def reginn_params(self) -> ReginnParams:
        return ReginnParams(self.epsilon, self.tau, self.mu_start, self.gamma, self.mu_max,
                            self.max_outer, self.max_inner)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


def read_parameter_csv(path, mesh: Mesh, grid: TimeGrid) -> np.ndarray:
    """Parameter field ``(N, n_vertices)`` from a field CSV on the same mesh."""
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    values = table[:, mesh.dim:].T
    if values.shape != (grid.N, mesh.n_vertices):
        raise ValueError(f"parameter file holds shape {values.shape}, expected {(grid.N, mesh.n_vertices)}")
    if not np.allclose(table[:, : mesh.dim], mesh.vertices):
        raise ValueError("parameter file vertices do not match the mesh")
    return values


def parameter_field(s: Scenario, mesh: Mesh, grid: TimeGrid) -> np.ndarray:
    """Nodal interpolation ``(N, n_vertices)`` of the scenario's exact parameter."""
    t = grid.times[:, None]
    x = mesh.vertices[None, :, :]
    if s.parameter == "hat":
        return c_hat_eval(t, x)
    if s.parameter == "plateau":
        return c_plateau_eval(t, x)
    return read_parameter_csv(s.parameter, mesh, grid)


def source_fields(s: Scenario, mesh: Mesh, grid: TimeGrid) -> np.ndarray:
    """Nodal actuator fields ``(d, N, n_vertices)``."""
    t = grid.times[:, None]
    x = mesh.vertices[None, :, :]
    d = 2**s.n
    return np.stack([source_eval(k, t, x, s.n, s.omega, s.actuator_radius) for k in range(d)])


@dataclass
class Setup:
    """Discretization and operators of a scenario on one mesh."""

    mesh: Mesh
    grid: TimeGrid
    solver: WaveSolver
    operator: MeasurementOperator
    layout: SensorLayout | None
    full_mass: object


def build_setup(s: Scenario, refinements: int | None = None) -> Setup:
    mesh = build_unit_cube_mesh(s.n, s.resolved_refinements if refinements is None else refinements)
    grid = TimeGrid(s.T, s.dt)
    solver = WaveSolver(mesh, grid, theta=s.theta, tol=s.cg_tol, product=s.product)
    system = build_fourth_order_system(grid.N, grid.dt, s.weights)
    if s.sensors == "full":
        layout = None
        observation = FullFieldObservation(solver.M, grid)
    else:
        layout = sensor_layout(s.sensors, s.n, s.T, s.r_t, s.r_x, s.n_sensor_times)
        observation = SensorObservation(build_psi(mesh, grid, layout), layout)
    op = MeasurementOperator(solver, source_fields(s, mesh, grid), observation, system)
    return Setup(mesh, grid, solver, op, layout, P1Assembler(mesh, full=True).mass())


def _coarse_in_fine(coarse: Mesh, fine: Mesh) -> np.ndarray:
    # nested tensor grids: coarse vertex -> fine vertex by integer coordinates
    m_f = int(round(fine.n_vertices ** (1.0 / fine.dim))) - 1
    idx = np.rint(coarse.vertices * m_f).astype(int)
    strides = (m_f + 1) ** np.arange(fine.dim - 1, -1, -1)
    return idx @ strides


def synthesize(s: Scenario, setup: Setup) -> tuple[np.ndarray, np.ndarray]:
    """Clean and noisy data for the scenario on ``setup``'s discretization."""
    extra = s.synthesis_extra_refinements
    if extra <= 0:
        c_true = parameter_field(s, setup.mesh, setup.grid)
        clean = setup.operator.apply(c_true)[0]
    else:
        fine = build_setup(s, s.resolved_refinements + extra)
        c_fine = parameter_field(s, fine.mesh, fine.grid)
        clean_fine = fine.operator.apply(c_fine)[0]
        if s.sensors == "full":
            # full fields: inject fine nodal values at the coarse vertices
            vmap = _coarse_in_fine(setup.mesh, fine.mesh)
            fine_all = fine.mesh.to_vertices(clean_fine)
            clean = fine_all[..., vmap][..., setup.mesh.interior]
        else:
            clean = clean_fine
    noisy = add_noise(clean, s.epsilon, s.seed, norm=setup.operator.data_norm)
    return clean, noisy


def _stage(label, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ScenarioError:
        raise
    except Exception as exc:
        raise ScenarioError(f"{label} failed: {exc}") from exc


def run_scenario(s: Scenario, out_dir=None, log=None, data=None):
    """Synthesize data, reconstruct with REGINN and measure the error.

    Parameters
    ----------
    s : Scenario
    out_dir : path, optional
        Receives ``report.txt``, ``iterations.csv``, ``reconstruction.csv``
        and, for sensor layouts, ``data.txt``.
    log : file-like or None
        Iteration log stream.
    data : ndarray, optional
        Noisy data to use instead of synthesizing them.

    Returns
    -------
    report : ErrorReport
    state : ReginnState
    """
    t0 = time.perf_counter()
    setup = _stage("setup", build_setup, s)
    if data is None:
        _, noisy = _stage("synthesis", synthesize, s, setup)
    else:
        noisy = np.asarray(data, dtype=float)
    csv_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "iterations.csv")
        if setup.layout is not None:
            write_measurements(os.path.join(out_dir, "data.txt"), noisy, setup.layout)
    c0 = np.zeros((setup.grid.N, setup.mesh.n_vertices))
    state = _stage("reconstruction", reginn_solve, setup.operator, noisy, s.reginn_params, c0,
                   log=log, csv_path=csv_path)
    c_true = parameter_field(s, setup.mesh, setup.grid)
    report = _stage("error report", error_report, state.c, c_true, setup.full_mass, setup.grid, state,
                    s.weights)
    report.runtime = time.perf_counter() - t0
    if out_dir is not None:
        with open(os.path.join(out_dir, "report.txt"), "w") as fh:
            fh.write(report.to_text())
        write_field_csv(os.path.join(out_dir, "reconstruction.csv"), setup.mesh, setup.grid, state.c)
    if log is not None:
        print(f"rel_l2={report.rel_l2:.4f}  rel_h2={report.rel_h2:.4f}  rel_x={report.rel_x:.4f}  "
              f"k*={report.k_star}  "
              f"runtime={report.runtime:.1f}s", file=log)
    return report, state


def fit_order(eps, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(eps)``."""
    return float(np.polyfit(np.log(eps), np.log(errors), 1)[0])


def convergence_study(s: Scenario, eps_list, log=None):
    """Run the scenario for every noise level.

    Returns
    -------
    rows : list of (epsilon, rel_l2, rel_h2)
    orders : tuple (l2_order, h2_order)
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("noise levels must be strictly decreasing")
    rows = []
    for eps in eps_list:
        rep, _ = run_scenario(s.replace(epsilon=eps), log=log)
        rows.append((eps, rep.rel_l2, rep.rel_h2))
    l2 = [r[1] for r in rows]
    h2 = [r[2] for r in rows]
    if any(b > a for a, b in zip(l2, l2[1:])) and log is not None:
        print("warning: L2 error is not monotone in epsilon", file=log)
    return rows, (fit_order(eps_list, l2), fit_order(eps_list, h2))


_INT_FIELDS = {"n", "seed", "refinements", "n_sensor_times", "max_outer", "max_inner",
               "synthesis_extra_refinements"}
_STR_FIELDS = {"parameter", "sensors", "product"}


def write_config(s: Scenario, path) -> None:
    """Key-value file with every scenario field (``None`` written as ``auto``)."""
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep "T" distinct from "t"
    values = {}
    for f in dataclasses.fields(Scenario):
        v = getattr(s, f.name)
        values[f.name] = "auto" if v is None else (repr(v) if isinstance(v, float) else str(v))
    cp["scenario"] = values
    with open(path, "w") as fh:
        cp.write(fh)


def scenario_from_mapping(values, base: Scenario | None = None, source="config") -> Scenario:
    """Scenario from string key-value pairs; missing keys keep the values of ``base``."""
    known = {f.name for f in dataclasses.fields(Scenario)}
    kwargs = {}
    for key, raw in values.items():
        if key not in known:
            raise ValueError(f"{source}: unknown key '{key}'")
        raw = str(raw).strip()
        if raw.lower() in ("auto", "none", ""):
            kwargs[key] = None
        elif key in _STR_FIELDS:
            kwargs[key] = raw
        elif key in _INT_FIELDS:
            kwargs[key] = int(raw)
        else:
            kwargs[key] = float(raw)
    return dataclasses.replace(base, **kwargs) if base is not None else Scenario(**kwargs)


def read_config(path) -> Scenario:
    """Scenario from a key-value file; missing keys keep their defaults."""
    cp = configparser.ConfigParser()
    cp.optionxform = str  # keep "T" distinct from "t"
    if not cp.read(path):
        raise FileNotFoundError(path)
    if "scenario" not in cp:
        raise ValueError(f"{path}: missing [scenario] section")
    return scenario_from_mapping(dict(cp["scenario"]), source=str(path))

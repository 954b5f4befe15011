import warnings

import numpy as np
import pytest
from scipy.integrate import dblquad

from wavepot.measurement import (
    FullFieldObservation,
    MeasurementOperator,
    SensorLayout,
    SensorObservation,
    apply_psi,
    apply_psi_star,
    build_psi,
    kernel_eval,
    measure,
    measure_derivative_adjoint,
    measure_derivative_apply,
    read_measurements,
    write_measurements,
)
from wavepot.mesh import build_unit_cube_mesh
from wavepot.param_space import l2l2_inner
from wavepot.scenarios import Scenario, build_setup, parameter_field, sensor_layout
from wavepot.wave import TimeGrid

# coarse test meshes are below the sensor radius on purpose
pytestmark = pytest.mark.filterwarnings("ignore:sensor radius")


def test_kernel_values():
    assert kernel_eval(0.0, np.zeros(2), 0.02, 0.05) == pytest.approx(60000.0, rel=1e-14)
    assert kernel_eval(0.0, np.array([0.05]), 0.1, 0.1) == pytest.approx(150.0, rel=1e-14)
    assert kernel_eval(0.02, np.zeros(2), 0.02, 0.05) == 0.0
    assert kernel_eval(-0.03, np.zeros(1), 0.02, 0.05) == 0.0
    assert kernel_eval(0.0, np.array([0.03, 0.04]), 0.02, 0.05) == 0.0
    with pytest.raises(ValueError):
        kernel_eval(0.0, np.zeros(1), 0.0, 0.1)


def _one_sensor(t, x, r_t=0.02, r_x=0.05):
    return SensorLayout(np.array([t]), np.array([[x]]), r_t, r_x)


def test_psi_of_constant_is_three():
    mesh = build_unit_cube_mesh(1, 10)
    grid = TimeGrid(2.0, 1e-3)
    psi = build_psi(mesh, grid, _one_sensor(1.0, 0.5))
    val = apply_psi(psi, np.ones((grid.N, mesh.K)))
    assert val[0] == pytest.approx(3.0, rel=1e-4)
    assert not np.any(apply_psi(psi, np.zeros((grid.N, mesh.K))))


def test_psi_of_analytic_solution_matches_quadrature():
    mesh = build_unit_cube_mesh(1, 6)
    grid = TimeGrid(2.0, 1e-2)
    r_t, r_x = 0.1, 0.1
    exact = lambda t, x: np.sin(np.pi * x) * (np.sin(t) - t * np.cos(t))
    layout = SensorLayout(np.array([0.7, 1.5]), np.array([[0.3], [0.8]]), r_t, r_x)
    psi = build_psi(mesh, grid, layout)
    x = mesh.vertices[mesh.interior, 0]
    val = apply_psi(psi, exact(grid.times[:, None], x[None]))
    for i in range(2):
        ti, xi = layout.times[i], layout.points[i, 0]
        ref = dblquad(lambda y, s: kernel_eval(ti - s, np.array([xi - y]), r_t, r_x) * exact(s, y),
                      ti - r_t, ti + r_t, xi - r_x, xi + r_x, epsabs=1e-12)[0]
        assert abs(val[i] - ref) <= 0.02 * abs(ref)


def _random_layout(n, l, seed, r_t=0.05, r_x=0.2):
    rng = np.random.default_rng(seed)
    return SensorLayout(rng.uniform(0.1, 1.9, l), rng.uniform(0, 1, (l, n)), r_t, r_x)


@pytest.mark.parametrize("n", [1, 2])
def test_psi_adjoint_identity(n):
    mesh = build_unit_cube_mesh(n, 4 if n == 1 else 3)
    grid = TimeGrid(2.0, 0.05)
    psi = build_psi(mesh, grid, _random_layout(n, 7, n))
    rng = np.random.default_rng(10 + n)
    u = rng.standard_normal((grid.N, mesh.K))
    y = rng.standard_normal(psi.l)
    lhs = apply_psi(psi, u) @ y
    rhs = l2l2_inner(u, apply_psi_star(psi, y), psi.mass, grid)
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)
    assert not np.any(apply_psi_star(psi, np.zeros(psi.l)))
    with pytest.raises(ValueError):
        apply_psi_star(psi, np.zeros(psi.l + 1))


def test_psi_star_unit_vector_support_and_locality():
    mesh = build_unit_cube_mesh(1, 5)
    grid = TimeGrid(2.0, 0.02)
    layout = SensorLayout(np.array([0.5, 1.5]), np.array([[0.3], [0.7]]), 0.05, 0.1)
    psi = build_psi(mesh, grid, layout)
    loads = psi.loads(np.array([1.0, 0.0]))
    x = mesh.vertices[mesh.interior, 0]
    t = grid.times
    rows, cols = np.nonzero(loads)
    h = 1.0 / 32
    assert np.all(np.abs(t[rows] - 0.5) < 0.05)
    assert np.all(np.abs(x[cols] - 0.3) < 0.1 + h)
    # perturbations away from every sensor support leave the readings unchanged
    rng = np.random.default_rng(0)
    u = rng.standard_normal((grid.N, mesh.K))
    v = u.copy()
    v[np.abs(t - 1.0) < 0.3] += 5.0
    assert np.array_equal(apply_psi(psi, u), apply_psi(psi, v))


def test_radius_warning():
    mesh = build_unit_cube_mesh(2, 5)
    grid = TimeGrid(2.0, 0.05)
    with pytest.warns(RuntimeWarning, match="below the mesh width"):
        build_psi(mesh, grid, sensor_layout("lshape", 2, r_t=0.1))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build_psi(mesh, grid, sensor_layout("grid", 2, r_t=0.1))


def test_layout_validation():
    mesh = build_unit_cube_mesh(1, 3)
    grid = TimeGrid(2.0, 0.1)
    with pytest.raises(ValueError):
        build_psi(mesh, grid, _one_sensor(3.0, 0.5))
    with pytest.raises(ValueError):
        build_psi(mesh, grid, SensorLayout([1.0], [[0.5, 0.5]], 0.1, 0.1))
    with pytest.raises(ValueError):
        SensorLayout([1.0, 2.0], [[0.5]], 0.1, 0.1)


def test_measurement_file_round_trip(tmp_path):
    layout = sensor_layout("lshape", 2)
    data = np.random.default_rng(3).standard_normal((4, layout.l)) * 1e-7
    write_measurements(tmp_path / "d.txt", data, layout)
    back, lay2 = read_measurements(tmp_path / "d.txt")
    assert np.array_equal(back, data)
    assert np.array_equal(lay2.times, layout.times) and np.array_equal(lay2.points, layout.points)
    assert (lay2.r_t, lay2.r_x) == (layout.r_t, layout.r_x)
    write_measurements(tmp_path / "f.txt", data)
    back, lay = read_measurements(tmp_path / "f.txt")
    assert lay is None and np.array_equal(back, data)
    with pytest.raises(ValueError):
        write_measurements(tmp_path / "x.txt", data[:, :-1], layout)


def _coarse(sensors, r=4, dt=0.05, parameter="plateau"):
    s = Scenario(n=1, parameter=parameter, sensors=sensors, refinements=r, dt=dt, r_t=0.05)
    setup = build_setup(s)
    return setup, parameter_field(s, setup.mesh, setup.grid)


def _smooth_param(setup, seed):
    rng = np.random.default_rng(seed)
    t = setup.grid.times[:, None]
    x = setup.mesh.vertices[None, :, 0]
    return sum(rng.standard_normal() * np.sin(a * np.pi * x) * np.cos(b * t)
               for a in (1, 2) for b in (0, 1, 2))


@pytest.mark.parametrize("sensors", ["grid", "full"])
def test_derivative_linear_zero_cases(sensors):
    setup, c = _coarse(sensors)
    op = setup.operator
    data, u_all = op.apply(c)
    h = _smooth_param(setup, 1)
    assert not np.any(measure_derivative_apply(op, c, u_all, np.zeros_like(h)))
    assert not np.any(measure_derivative_adjoint(op, c, u_all, np.zeros_like(data)))
    a = measure_derivative_apply(op, c, u_all, h)
    b = measure_derivative_apply(op, c, u_all, -2.0 * h)
    assert np.allclose(b, -2.0 * a, rtol=1e-9, atol=1e-12 * np.abs(a).max())
    r = np.random.default_rng(2).standard_normal(data.shape)
    w1 = measure_derivative_adjoint(op, c, u_all, r)
    w2 = measure_derivative_adjoint(op, c, u_all, 3.0 * r)
    assert np.allclose(w2, 3.0 * w1, rtol=1e-8, atol=1e-12 * np.abs(w1).max())


def _pairing(sensors, r, dt):
    setup, c = _coarse(sensors, r, dt)
    op = setup.operator
    data, u_all = op.apply(c)
    h = _smooth_param(setup, 3)
    rng = np.random.default_rng(4)
    if sensors == "full":
        res = _smooth_param(setup, 5)[None, :, setup.mesh.interior] * np.ones((op.d, 1, 1))
        res = res * rng.standard_normal((op.d, 1, 1))
    else:
        res = rng.standard_normal(data.shape)
    lhs = op.data_inner(op.derivative(c, u_all, h), res)
    rhs = op.param_inner(h, op.adjoint(c, u_all, res))
    return abs(lhs - rhs) / abs(lhs)


@pytest.mark.parametrize("sensors", ["full", "grid"])
def test_derivative_adjoint_pairing(sensors):
    coarse = _pairing(sensors, 4, 0.05)
    fine = _pairing(sensors, 5, 0.025)
    assert coarse <= 5e-2
    assert fine < coarse


def test_measure_composition_and_zero_sources():
    setup, c = _coarse("grid")
    op = setup.operator
    u = setup.solver.forward_solve(c, op.sources[0])
    assert np.array_equal(measure(op, c)[0], apply_psi(op.observation.psi, u))
    zero = MeasurementOperator(setup.solver, np.zeros_like(op.sources), op.observation, op.system)
    assert not np.any(measure(zero, c))
    setup_f, c_f = _coarse("full")
    assert isinstance(setup_f.operator.observation, FullFieldObservation)
    assert isinstance(op.observation, SensorObservation)
    assert np.array_equal(measure(setup_f.operator, c_f), setup_f.operator.waves(c_f))

"""Reconstruction of a space-time potential in the wave equation ``u'' - Laplace u + c u = f``.

Finite elements in space, Crank-Nicolson in time, and REGINN (inexact Newton
with inner CG) as the regularizing inversion method.
"""

from .linalg import BandedMatrix, ConvergenceError, SingularMatrixError, banded_factorize, banded_solve, cg_solve
from .measurement import (
    FullFieldObservation,
    MeasurementOperator,
    SensorLayout,
    SensorObservation,
    apply_psi_star,
    build_psi,
    kernel_eval,
    read_measurements,
    write_measurements,
)
from .mesh import Mesh, P1Assembler, assemble_mass, assemble_stiffness, assemble_weighted_mass, build_unit_cube_mesh
from .param_space import (
    FourthOrderSystem,
    SmoothingWeights,
    build_fourth_order_system,
    l2l2_inner,
    multiply_pointwise,
    smoothing_adjoint,
    x_inner,
)
from .reginn import ReginnParams, ReginnState, StopReason, cg_inner, mu_clamp, mu_proposal, reginn_solve
from .scenarios import (
    ErrorReport,
    Scenario,
    add_noise,
    c_hat_eval,
    c_plateau_eval,
    convergence_study,
    error_report,
    run_scenario,
    sensor_layout,
    source_eval,
)
from .wave import TimeGrid, WaveSolveError, WaveSolver

__version__ = "0.1.0"

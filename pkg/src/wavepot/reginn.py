"""REGINN: inexact Newton iteration with an inner CG regularizer.

The outer loop linearizes ``Phi c = g`` at ``c_k`` and solves the linear
problem ``Phi'(c_k) s = g - Phi c_k`` only roughly, by CG on the normal
equations stopped as soon as the linear residual falls below ``mu_k`` times
the nonlinear one.  The outer loop stops by the discrepancy principle.
"""

from __future__ import annotations

import csv
import enum
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "StopReason",
    "ReginnParams",
    "ReginnState",
    "InnerResult",
    "mu_proposal",
    "mu_clamp",
    "cg_inner",
    "reginn_solve",
]


class StopReason(enum.Enum):
    RUNNING = "running"
    DISCREPANCY = "discrepancy"
    MAX_OUTER = "max_outer"
    INNER_FAILURE = "inner_failure"


@dataclass(frozen=True)
class ReginnParams:
    """Constants of the outer and inner iteration."""

    epsilon: float
    tau: float = 2.0
    mu_start: float = 0.7
    gamma: float = 0.9
    mu_max: float = 0.99
    max_outer: int = 50
    max_inner: int = 500

    def __post_init__(self):
        if not 0 < self.mu_start < self.mu_max < 1:
            raise ValueError("need 0 < mu_start < mu_max < 1")
        if not 0 < self.gamma < 1:
            raise ValueError("need 0 < gamma < 1")
        if not self.tau > 1:
            raise ValueError("need tau > 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.max_outer < 0 or self.max_inner < 1:
            raise ValueError("iteration caps must be positive")


@dataclass
class ReginnState:
    """History of a REGINN run.

    ``residual_history[k]`` is ``||Phi c_k - g||``; ``inner_counts[k-1]``
    and ``mu_history[k-1]`` belong to the step from ``c_{k-1}`` to ``c_k``.
    """

    c: np.ndarray
    k: int = 0
    residual_history: list = field(default_factory=list)
    inner_counts: list = field(default_factory=list)
    mu_history: list = field(default_factory=list)
    step_times: list = field(default_factory=list)
    stopped: StopReason = StopReason.RUNNING
    message: str = ""

    @property
    def residual_norm(self) -> float:
        return self.residual_history[-1]


@dataclass
class InnerResult:
    s: np.ndarray
    iterations: int
    residuals: list
    converged: bool
    message: str = ""


def mu_proposal(i_km2: int, i_km1: int, mu_km1: float, gamma: float) -> float:
    """Proposed tolerance from the two previous inner iteration counts."""
    if i_km1 > i_km2:
        return 1.0 - (i_km2 / i_km1) * (1.0 - mu_km1)
    return gamma * mu_km1


def mu_clamp(mu_tilde: float, tau: float, epsilon: float, g_norm: float, res_norm: float,
             mu_max: float) -> float:
    """Final tolerance, kept above the noise-to-residual ratio."""
    if res_norm <= 0:
        raise ValueError("residual norm must be positive")
    return mu_max * max(tau * epsilon * g_norm / res_norm, mu_tilde)


def cg_inner(A, A_star, b, mu, x_inner, data_inner, max_inner=500):
    """CG on the normal equations ``A* A s = A* b`` (CGLS form), started at 0.

    Returns the first iterate with ``||A s - b|| < mu ||b||`` in the data
    norm.  ``A_star`` must be the adjoint of ``A`` with respect to
    ``x_inner`` and ``data_inner``.

    Returns
    -------
    InnerResult
        ``converged`` is False when ``max_inner`` is reached, the search
        direction vanishes or the iteration stagnates at a least-squares
        residual above the tolerance; ``s`` is then the last iterate.
    """
    b_norm = np.sqrt(data_inner(b, b))
    if b_norm == 0:
        raise ValueError("right-hand side is zero")
    r = b
    d = A_star(r)
    p = d
    gamma = x_inner(d, d)
    # below this the normal-equation residual is rounding noise: the
    # least-squares minimum has been reached without meeting the tolerance
    floor = (64 * np.finfo(float).eps) ** 2 * gamma
    s = np.zeros_like(d)
    residuals = [b_norm]
    for i in range(1, max_inner + 1):
        if gamma <= 0:
            return InnerResult(s, i - 1, residuals, False, "zero search direction")
        if gamma <= floor:
            return InnerResult(s, i - 1, residuals, False,
                               f"stagnated at residual {residuals[-1] / b_norm:.4g} ||b|| > mu ||b||")
        q = A(p)
        qq = data_inner(q, q)
        if qq <= 0:
            return InnerResult(s, i - 1, residuals, False, "search direction in the null space")
        alpha = gamma / qq
        s = s + alpha * p
        r = r - alpha * q
        res = np.sqrt(max(data_inner(r, r), 0.0))
        residuals.append(res)
        if res < mu * b_norm:
            return InnerResult(s, i, residuals, True)
        d = A_star(r)
        gamma_new = x_inner(d, d)
        p = d + (gamma_new / gamma) * p
        gamma = gamma_new
    return InnerResult(s, max_inner, residuals, False, f"no convergence in {max_inner} inner iterations")


def _log_line(k, i, mu, res, ratio, seconds):
    return f"k={k:3d}  inner={i:4d}  mu={mu:.6f}  residual={res:.6e}  rel={ratio:.6e}  time={seconds:.2f}s"


def reginn_solve(op, g_eps, params: ReginnParams, c0, log=None, csv_path=None) -> ReginnState:
    """Reconstruct ``c`` from data ``g_eps``.

    Parameters
    ----------
    op : object
        Provides ``apply(c) -> (data, aux)``, ``derivative(c, aux, h)``,
        ``adjoint(c, aux, r)``, ``data_inner``, ``data_norm`` and
        ``param_inner``.
    g_eps : ndarray
        Noisy data.
    params : ReginnParams
    c0 : ndarray
        Initial guess.
    log : file-like, optional
        Receives one line per outer step (e.g. ``sys.stdout``).
    csv_path : path, optional
        Iteration log as CSV (k, inner, mu, residual); no timings, so
        identical runs give identical files.
    """
    g_norm = op.data_norm(g_eps)
    if g_norm == 0:
        raise ValueError("data are zero")
    target = params.tau * params.epsilon * g_norm
    c = np.array(c0, dtype=float)
    data, aux = op.apply(c)
    b = g_eps - data
    res = op.data_norm(b)
    state = ReginnState(c=c, residual_history=[res])
    rows = [(0, 0, float("nan"), res)]
    if log is not None:
        print(f"k=  0  residual={res:.6e}  rel={res / g_norm:.6e}  target={target:.6e}", file=log)

    while res > target:
        if state.k >= params.max_outer:
            state.stopped = StopReason.MAX_OUTER
            state.message = f"discrepancy not reached in {params.max_outer} outer steps"
            break
        t0 = time.perf_counter()
        k = state.k + 1
        if k <= 2:
            mu_tilde = params.mu_start
        else:
            mu_tilde = mu_proposal(state.inner_counts[-2], state.inner_counts[-1],
                                   state.mu_history[-1], params.gamma)
        mu = mu_clamp(mu_tilde, params.tau, params.epsilon, g_norm, res, params.mu_max)

        inner = cg_inner(
            lambda h: op.derivative(c, aux, h),
            lambda r: op.adjoint(c, aux, r),
            b, mu, op.param_inner, op.data_inner, params.max_inner,
        )
        if not inner.converged:
            state.stopped = StopReason.INNER_FAILURE
            state.message = f"outer step {k} (mu={mu:.4f}): {inner.message}"
            break

        c = c + inner.s
        data, aux = op.apply(c)
        b = g_eps - data
        new_res = op.data_norm(b)
        if new_res >= res:
            warnings.warn(f"outer residual increased at step {k}: {res:.4e} -> {new_res:.4e}",
                          RuntimeWarning, stacklevel=2)
        res = new_res
        state.k = k
        state.c = c
        state.residual_history.append(res)
        state.inner_counts.append(inner.iterations)
        state.mu_history.append(mu)
        seconds = time.perf_counter() - t0
        state.step_times.append(seconds)
        rows.append((k, inner.iterations, mu, res))
        if log is not None:
            print(_log_line(k, inner.iterations, mu, res, res / g_norm, seconds), file=log)
    else:
        state.stopped = StopReason.DISCREPANCY

    if log is not None:
        print(f"stopped: {state.stopped.value} after {state.k} steps {state.message}".rstrip(), file=log)
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "inner", "mu", "residual"])
            for row in rows:
                w.writerow([row[0], row[1], repr(row[2]), repr(row[3])])
    return state

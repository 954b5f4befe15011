"""Linearization and adjoints behind the gradient of the data misfit.

The Taylor remainder of the parameter-to-wave map shrinks quadratically,
and the derivative of the measurement map is paired with its adjoint in
the smoothing parameter space.  Both pairings improve as the grid refines.
"""

from wavepot import checks

ratios, ok = checks.taylor_ratios()
print("Taylor remainder / eps^2 for eps = 1e-1, 3e-2, 1e-2:", ratios, "->", "ok" if ok else "FAIL")

err, _ = checks.psi_adjoint()
print(f"sensor operator vs its adjoint: relative defect {err:.1e}")

for sensors in ("full", "grid"):
    for r, dt in [(4, 0.05), (5, 0.025), (6, 0.0125)]:
        err, _ = checks.derivative_adjoint(r, dt, sensors)
        print(f"{sensors:>4} data, refinements {r}, dt {dt:<7}: "
              f"<Phi' h, r> vs <h, Phi'* r>_X relative defect {err:.1e}")

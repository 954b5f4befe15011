"""Error against noise level: the fitted rate of the reconstruction.

The L2 error of the plateau behaves like eps**0.3, while the H2 error of
the moving bump barely improves at all as the noise decreases.
"""

from wavepot import Scenario, convergence_study

eps = [5e-2, 2.5e-2, 1e-2, 5e-3, 2.5e-3]
for parameter in ("plateau", "hat"):
    rows, (l2, h2) = convergence_study(Scenario(n=1, parameter=parameter), eps)
    print(f"\n{parameter}: epsilon  rel_l2  rel_h2")
    for e, a, b in rows:
        print(f"         {e:.1e}  {a:.4f}  {b:.4f}")
    print(f"fitted order: L2 {l2:.3f}, H2 {h2:.3f}")

"""Forward problem: solve the wave equation and check it against a closed form.

On (0, pi) with zero potential and source 2 sin(x) sin(t) the exact wave is
sin(x)(sin t - t cos t).  The script reports the finite element error for
a few meshes, then shows that energy is conserved once the source stops.
"""

import numpy as np

from wavepot import TimeGrid, WaveSolver, build_unit_cube_mesh
from wavepot.wave import discrete_energy


def final_time_error(refinements, dt):
    mesh = build_unit_cube_mesh(1, refinements).scaled(np.pi)
    grid = TimeGrid(2.0, dt)
    solver = WaveSolver(mesh, grid)
    x = mesh.vertices[mesh.interior, 0]
    f = 2 * np.sin(x)[None] * np.sin(grid.times)[:, None]
    u = solver.forward_solve(np.zeros((grid.N, mesh.n_vertices)), f)
    T = grid.times[-1]
    exact = np.sin(x) * (np.sin(T) - T * np.cos(T))
    e = u[-1] - exact
    return np.sqrt(e @ solver.M @ e / (exact @ solver.M @ exact))


print("refinements  dt       rel. L2 error at T")
for r, dt in [(4, 4e-2), (5, 2e-2), (6, 1e-2), (7, 5e-3)]:
    print(f"{r:11d}  {dt:.0e}  {final_time_error(r, dt):.3e}")

mesh = build_unit_cube_mesh(1, 6)
grid = TimeGrid(2.0, 1e-2)
solver = WaveSolver(mesh, grid)
x = mesh.vertices[mesh.interior, 0]
t = grid.times
f = np.exp(-100 * (x - 0.5) ** 2)[None] * (np.sin(4 * np.pi * t) * (t <= 0.5))[:, None]
u, mv = solver.velocity_mass(np.zeros((grid.N, mesh.n_vertices)), f)
E = discrete_energy(solver, u, mv)
tail = E[t >= 0.6]
print(f"\nenergy after the source stops: {tail[0]:.6e}, max relative drift {np.ptp(tail) / tail[0]:.1e}")

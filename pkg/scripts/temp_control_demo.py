"""Temperature control with a bump initial profile: optimizer vs brute force.

    python3 scripts/temp_control_demo.py [outdir]
"""
import sys
from pathlib import Path

import numpy as np

from composite_spde import control as C
from composite_spde.discretization import SpaceTimeGrid, sample_paths
from composite_spde.linear import InitialCondition

out = Path(sys.argv[1] if len(sys.argv) > 1 else "runs/temp_control_demo")
out.mkdir(parents=True, exist_ok=True)

setup = C.preset("temp-control", theta=0.1, gamma=1.0, sigma0=0.5)
grid = SpaceTimeGrid.symmetric(3.0, 31, 1.0, 20)
paths = sample_paths(3, grid, 4000)
ic = InitialCondition.gaussian_bump(2.0, 0.0, 0.3)
law, cost, coeffs = setup.law, setup.cost, setup.coeffs

for constant in (True, False):
    u0 = C.ControlTrajectory.constant(0.8, grid.nt, law.u_min, law.u_max)
    res = C.optimize(law, cost, u0, coeffs, ic, grid, paths, C.OptimizerConfig(constant=constant))
    tag = "constant" if constant else "time-varying"
    res.trace_to_csv(out / f"trace_{tag}.csv")
    res.u.to_csv(out / f"control_{tag}.csv", grid)
    J = C.cost_eval(law, cost, res.u, coeffs, ic, grid, paths)
    print(f"{tag:>12}: status={res.status} iterations={len(res.trace)} J={J.value:.5f} +- {J.stderr:.5f}")
    print("              u =", np.array2string(res.u.u, precision=3))

values, costs = C.grid_search_constant(law, cost, coeffs, ic, grid, paths, n_cells=100)
J = np.array([c.value for c in costs])
best = int(np.argmin(J))
print(f"grid search: u = {values[best]:.4f}, J = {J[best]:.5f}")
np.savetxt(out / "grid_search.csv", np.column_stack([values, J]), delimiter=",", header="u,J", comments="")

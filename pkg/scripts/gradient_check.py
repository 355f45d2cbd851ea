"""Adjoint, tangent and finite-difference directional derivatives side by side.

    python3 scripts/gradient_check.py [n_paths]
"""
import sys

import numpy as np

from composite_spde import control as C
from composite_spde.discretization import SpaceTimeGrid, sample_paths
from composite_spde.linear import InitialCondition

n_paths = int(sys.argv[1]) if len(sys.argv) > 1 else 4000
setup = C.preset("temp-control", theta=0.1, gamma=1.0, sigma0=0.5)
law, cost, coeffs = setup.law, setup.cost, setup.coeffs
grid = SpaceTimeGrid.symmetric(3.0, 31, 1.0, 20)
paths = sample_paths(3, grid, n_paths)
ic = InitialCondition.gaussian_bump(2.0, 0.0, 0.3)
u = C.ControlTrajectory(np.linspace(0.5, 1.5, grid.nt), law.u_min, law.u_max)

Y = C.forward_solve(law, coeffs, ic, u, grid, paths)
adj = C.adjoint_solve(law, cost, u, Y, paths, grid, coeffs)
g = C.smp_gradient(law, cost, u, Y, adj, grid, coeffs)
print("g(t_k) =", np.array2string(g.g, precision=4))
print(f"regression fallbacks at steps: {adj.fallback_steps}")

rng = np.random.default_rng(0)
print(f"{'direction':>9} {'adjoint':>22} {'tangent':>22} {'finite diff':>22}")
for i in range(5):
    beta = rng.normal(size=grid.nt)
    a = g.directional(beta)
    z = C.variation_derivative(law, cost, u, C.variation_solve(law, coeffs, u, beta, Y, paths, grid), Y)
    f = C.fd_derivative(law, cost, u, beta, coeffs, ic, grid, paths)
    print(f"{i:>9} " + " ".join(f"{d.value:>12.5f} +- {d.stderr:.4f}" for d in (a, z, f)))

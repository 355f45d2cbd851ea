"""Contraction of the Picard map for multiplicative noise, against the Euler oracle.

    python3 scripts/picard_contraction.py [n_paths]
"""
import sys

import numpy as np

from composite_spde.discretization import SpaceTimeGrid, sample_paths
from composite_spde.kernel import CompositeMedium
from composite_spde.linear import InitialCondition
from composite_spde.picard import CoefficientSpec, euler_oracle, picard_solve

n_paths = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
medium = CompositeMedium(1, 4, 1, 2)
grid = SpaceTimeGrid.symmetric(4.0, 81, 1.0, 50)
paths = sample_paths(11, grid, n_paths)
ic = InitialCondition.gaussian_bump(1.0, 0.3, 0.5)

for s in (0.1, 0.5, 1.0):
    coeffs = CoefficientSpec.affine(b_slope=-0.5, s_slope=s)
    Y, diag = picard_solve(medium, coeffs, ic, grid, paths, tol=1e-10, max_iter=40)
    E = euler_oracle(medium, coeffs, ic, grid, paths)
    gap = np.max(np.abs(Y.values[:, -1].mean(0) - E.values[:, -1].mean(0)))
    print(f"sigma = {s} y: {diag.iterations} iterations")
    print("  h_n    ", np.array2string(np.asarray(diag.h), precision=2))
    print("  ratios ", np.array2string(diag.ratios, precision=3))
    print(f"  max |E Y_picard(T) - E Y_oracle(T)| = {gap:.2e}")

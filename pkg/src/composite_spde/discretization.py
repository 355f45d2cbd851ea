"""Grids, Brownian path bundles and the finite-volume generator."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import solve_banded

from .kernel import CompositeMedium


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform grid on ``[x_min, x_max] x [0, T]`` with ``x = 0`` as a node."""

    x_min: float
    x_max: float
    nx: int
    T: float
    nt: int

    def __post_init__(self):
        if not self.x_min < 0 < self.x_max:
            raise ValueError("need x_min < 0 < x_max")
        if self.nx < 3:
            raise ValueError("nx must be at least 3")
        if self.nt < 1:
            raise ValueError("nt must be at least 1")
        if not self.T > 0:
            raise ValueError("T must be positive")
        k = -self.x_min / self.dx
        if abs(k - round(k)) > 1e-9 * max(1.0, k):
            raise ValueError("x = 0 must be a grid node; adjust x_min, x_max or nx")

    @classmethod
    def symmetric(cls, half_width: float, nx: int, T: float, nt: int) -> "SpaceTimeGrid":
        if nx % 2 == 0:
            raise ValueError("a symmetric grid needs an odd node count")
        return cls(-half_width, half_width, nx, T, nt)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def zero_index(self) -> int:
        return int(round(-self.x_min / self.dx))

    @property
    def x(self) -> np.ndarray:
        x = self.x_min + self.dx * np.arange(self.nx)
        x[self.zero_index] = 0.0
        x[-1] = self.x_max
        return x

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(self.nt + 1)


@dataclass
class GridFunction:
    values: np.ndarray
    grid: SpaceTimeGrid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.nx,):
            raise ValueError(f"expected {self.grid.nx} node values, got shape {self.values.shape}")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "value"])
            for xi, vi in zip(self.grid.x, self.values):
                writer.writerow([repr(float(xi)), repr(float(vi))])

    @classmethod
    def from_csv(cls, path, grid: SpaceTimeGrid) -> "GridFunction":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        x = np.array([float(r["x"]) for r in rows])
        if x.shape != (grid.nx,) or not np.allclose(x, grid.x, rtol=0, atol=1e-12):
            raise ValueError("CSV nodes do not match the grid")
        return cls(np.array([float(r["value"]) for r in rows]), grid)


@dataclass(frozen=True)
class BrownianPaths:
    """Brownian increments ``dB[path, step] ~ N(0, dt)``."""

    master_seed: int
    dt: float
    increments: np.ndarray = field(repr=False)

    @property
    def n_paths(self) -> int:
        return self.increments.shape[0]

    @property
    def nt(self) -> int:
        return self.increments.shape[1]

    @property
    def B(self) -> np.ndarray:
        """Path values at the time nodes, ``B[:, 0] = 0``."""
        out = np.zeros((self.n_paths, self.nt + 1))
        np.cumsum(self.increments, axis=1, out=out[:, 1:])
        return out


def path_generator(seed: int, path: int) -> np.random.Generator:
    """Counter-based stream for one path: Philox keyed by the seed, counter by the path."""
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, path, 0]))


def sample_paths(seed: int, grid: SpaceTimeGrid, n_paths: int, first_path: int = 0) -> BrownianPaths:
    """Draw ``n_paths`` Brownian paths on the grid's time steps.

    Path ``p`` only depends on ``(seed, p)``, so bundles can be built in
    pieces or in parallel and always agree bit for bit.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    sd = math.sqrt(grid.dt)
    inc = np.empty((n_paths, grid.nt))
    for i in range(n_paths):
        inc[i] = path_generator(seed, first_path + i).standard_normal(grid.nt)
    inc *= sd
    return BrownianPaths(seed, grid.dt, inc)


def node_weights(grid: SpaceTimeGrid, rho1: float = 1.0, rho2: float = 1.0, domain=None) -> np.ndarray:
    """Quadrature weights ``int hat_j(x) rho(x) dx`` restricted to ``domain``.

    Exact for piecewise-linear integrands; on the full grid this is the
    trapezoidal rule split at the interface.
    """
    x = grid.x
    lo, hi = (x[0], x[-1]) if domain is None else domain
    if lo > hi:
        raise ValueError("empty cost domain")
    w = np.zeros(grid.nx)
    dx = grid.dx
    for i in range(grid.nx - 1):
        l, r = max(x[i], lo), min(x[i + 1], hi)
        if r <= l:
            continue
        rho = rho1 if x[i + 1] <= 0 else rho2
        # integrals of the two hat functions over [l, r]
        right = ((r - x[i]) ** 2 - (l - x[i]) ** 2) / (2 * dx)
        w[i] += rho * ((r - l) - right)
        w[i + 1] += rho * right
    return w


def _face_coefficients(grid: SpaceTimeGrid, k_left: float, k_right: float) -> np.ndarray:
    mid = grid.x[:-1] + grid.dx / 2
    kappa = np.where(mid < 0, k_left, k_right)
    # harmonic mean for a face sitting exactly on the interface
    on_interface = mid == 0
    if np.any(on_interface):
        kappa[on_interface] = 2 * k_left * k_right / (k_left + k_right)
    return kappa


def flux_operator(grid: SpaceTimeGrid, k_left: float, k_right: float, weights: np.ndarray):
    """Tridiagonal ``(W^-1 / 2) d/dx (kappa d/dx)`` with zero-flux ends."""
    kappa = _face_coefficients(grid, k_left, k_right) / grid.dx
    upper = kappa / (2 * weights[:-1])
    lower = kappa / (2 * weights[1:])
    diag = np.zeros(grid.nx)
    diag[:-1] -= upper
    diag[1:] -= lower
    return sparse.diags([lower, diag, upper], [-1, 0, 1], format="csr")


def discrete_generator(a_left: float, a_right: float, rho, grid: SpaceTimeGrid):
    """Finite-volume matrix of ``A`` on the grid (zero row sums, self-adjoint in the rho-weights)."""
    rho1, rho2 = rho
    if min(a_left, a_right, rho1, rho2) <= 0:
        raise ValueError("coefficients must be positive")
    weights = node_weights(grid, rho1, rho2)
    return flux_operator(grid, a_left * rho1, a_right * rho2, weights)


def medium_generator(medium: CompositeMedium, grid: SpaceTimeGrid):
    return discrete_generator(medium.a1, medium.a2, (medium.rho1, medium.rho2), grid)


class ImplicitStep:
    """Solver for ``(I - dt L) X = R`` with tridiagonal ``L``; ``R`` is ``(paths, nx)``."""

    def __init__(self, L, dt: float):
        L = sparse.dia_matrix(L)
        n = L.shape[0]
        ab = np.zeros((3, n))
        ab[0, 1:] = -dt * L.diagonal(1)
        ab[1, :] = 1.0 - dt * L.diagonal(0)
        ab[2, :-1] = -dt * L.diagonal(-1)
        self.ab = ab

    def __call__(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        out = solve_banded((1, 1), self.ab, rhs.T, check_finite=False)
        return np.ascontiguousarray(out.T)


def pairing_defect(medium: CompositeMedium, Y, phi, phi_dx, grid: SpaceTimeGrid, include_dirac: bool = True) -> float:
    """Mismatch of ``<A Y, phi>_rho`` and ``<Y, A* phi>_rho`` on the grid.

    ``A Y`` comes from the discrete generator; ``A* phi`` is the classical
    piecewise second derivative plus the interface point mass
    ``(a2 rho2 - a1 rho1) phi'(0) Y(0) / 2`` (dropped when ``include_dirac`` is
    false).
    """
    x = grid.x
    Yv = np.asarray(getattr(Y, "values", Y), dtype=float)
    ph = np.asarray(phi(x), dtype=float)
    dph = np.asarray(phi_dx(x), dtype=float)
    for end in (0, -1):
        if ph[end] != 0 or dph[end] != 0:
            raise ValueError("test function support must stay inside (x_min, x_max)")
    L = medium_generator(medium, grid)
    w = node_weights(grid, medium.rho1, medium.rho2)
    lhs = float(np.sum(w * (L @ Yv) * ph))

    d2ph = np.gradient(dph, grid.dx, edge_order=2)
    w_left = node_weights(grid, medium.rho1, medium.rho2, (x[0], 0.0))
    w_right = w - w_left
    classical = float(np.sum((medium.a1 * w_left + medium.a2 * w_right) / 2 * d2ph * Yv))
    rhs = classical
    if include_dirac:
        k0 = grid.zero_index
        rhs += 0.5 * (medium.a2 * medium.rho2 - medium.a1 * medium.rho1) * dph[k0] * Yv[k0]
    return abs(lhs - rhs)

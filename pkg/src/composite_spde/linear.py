"""Mild solution of the additive-noise equation and its exact moments.

With ``b = 0`` and ``sigma = sigma0`` the mild solution is

    Y(t, x) = int G(t, x, z) xi(z) dz + sigma0 int_0^t (int G(t - s, x, z) dz) dB_s

and its second moments follow from the Wiener isometry.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .discretization import BrownianPaths, SpaceTimeGrid
from .kernel import CompositeMedium, green_mass, green_matrix, integrate_against


@dataclass(frozen=True)
class InitialCondition:
    """Deterministic bounded initial profile ``xi`` with declared sup bound ``M``."""

    xi: Callable[[np.ndarray], np.ndarray]
    M: float
    name: str = "custom"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.xi(x), dtype=float), x.shape).copy()

    def on_grid(self, grid: SpaceTimeGrid) -> np.ndarray:
        values = self(grid.x)
        if np.any(np.abs(values) > self.M * (1 + 1e-12)):
            raise ValueError(f"initial condition exceeds its declared bound M={self.M}")
        return values

    @classmethod
    def zero(cls) -> "InitialCondition":
        return cls(lambda x: np.zeros_like(x), 0.0, "zero")

    @classmethod
    def constant(cls, value: float) -> "InitialCondition":
        return cls(lambda x: np.full_like(x, value), abs(value), f"constant:{value!r}")

    @classmethod
    def gaussian_bump(cls, amplitude: float = 1.0, center: float = 0.0, width: float = 0.5) -> "InitialCondition":
        def xi(x):
            return amplitude * np.exp(-0.5 * ((x - center) / width) ** 2)

        return cls(xi, abs(amplitude), f"bump:{amplitude!r}:{center!r}:{width!r}")


@dataclass
class StateField:
    """Realisations ``values[path, time step, node]`` of the state."""

    values: np.ndarray = field(repr=False)
    grid: SpaceTimeGrid
    seed: int | None = None
    solver: str = ""

    def __post_init__(self):
        nt1, nx = self.grid.nt + 1, self.grid.nx
        if self.values.ndim != 3 or self.values.shape[1:] != (nt1, nx):
            raise ValueError(f"field shape {self.values.shape} does not match grid ({nt1}, {nx})")
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("state field has non-finite entries")

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def statistics(self):
        """Per-(t, x) mean, sample variance and the MC standard error of the mean."""
        n = self.n_paths
        mean = self.values.mean(axis=0)
        var = self.values.var(axis=0, ddof=1) if n > 1 else np.zeros_like(mean)
        return mean, var, np.sqrt(var / n)


def variance_stderr(samples: np.ndarray, axis: int = 0) -> np.ndarray:
    """Standard error of the sample variance, ``sqrt((m4 - s^4) / n)``."""
    n = samples.shape[axis]
    centred = samples - samples.mean(axis=axis, keepdims=True)
    m2 = np.mean(centred**2, axis=axis)
    m4 = np.mean(centred**4, axis=axis)
    return np.sqrt(np.maximum(m4 - m2**2, 0.0) / n)


def covariance_stderr(a: np.ndarray, b: np.ndarray, axis: int = 0) -> np.ndarray:
    """Sample covariance and its standard error (delta method on the product)."""
    n = a.shape[axis]
    prod = (a - a.mean(axis=axis, keepdims=True)) * (b - b.mean(axis=axis, keepdims=True))
    return prod.mean(axis=axis) * n / (n - 1), prod.std(axis=axis, ddof=1) / np.sqrt(n)


def propagate(medium: CompositeMedium, grid: SpaceTimeGrid, f: np.ndarray, tau_min: float | None = None) -> np.ndarray:
    """``K_k f`` for every time node ``t_k``; row 0 is ``f`` itself."""
    tau_min = grid.dt / 10 if tau_min is None else tau_min
    out = np.empty((grid.nt + 1, grid.nx))
    out[0] = f
    for k in range(1, grid.nt + 1):
        out[k] = green_matrix(medium, k * grid.dt, grid.x, tau_min=tau_min) @ f
    return out


def solve_linear(
    medium: CompositeMedium,
    ic: InitialCondition,
    sigma0: float,
    grid: SpaceTimeGrid,
    paths: BrownianPaths,
    tau_min: float | None = None,
) -> StateField:
    """Pathwise mild solution with left-point Ito sums.

    The stochastic convolution uses the quadrature masses ``int G(t_k - s_m, x, z) dz``
    at every node rather than assuming they equal one.
    """
    if not np.isfinite(sigma0):
        raise ValueError("sigma0 must be finite")
    if paths.nt != grid.nt or not np.isclose(paths.dt, grid.dt):
        raise ValueError("path bundle does not match the time grid")
    det = propagate(medium, grid, ic.on_grid(grid), tau_min)
    mass = propagate(medium, grid, np.ones(grid.nx), tau_min)  # mass[l] = K_l 1

    Y = np.empty((paths.n_paths, grid.nt + 1, grid.nx))
    Y[:, :, :] = det[None]
    dB = paths.increments
    for k in range(1, grid.nt + 1):
        Y[:, k, :] += sigma0 * (dB[:, :k] @ mass[k:0:-1])
    return StateField(Y, grid, paths.master_seed, "linear")


def _time_midpoints(t: float, n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) * t / n


def second_moment_linear(
    medium: CompositeMedium,
    ic: InitialCondition,
    sigma0: float,
    t: float,
    x: float,
    n_time: int = 64,
) -> float:
    """``E Y(t, x)^2 = D(t, x)^2 + sigma0^2 int_0^t (int G(t - u, x, z) dz)^2 du``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return float(ic(np.array([x]))[0] ** 2)
    D = integrate_against(medium, t, x, lambda z: float(ic(np.array([z]))[0]))
    taus = t - _time_midpoints(t, n_time)
    masses = np.array([green_mass(medium, tau, x) for tau in taus])
    return D**2 + sigma0**2 * np.sum(masses**2) * t / n_time


def covariance_linear(medium: CompositeMedium, sigma0: float, t: float, s: float, x: float, n_time: int = 64) -> float:
    """``E[Y(t, x) Y(s, x)]`` for ``xi = 0``."""
    r = min(t, s)
    if r <= 0:
        return 0.0
    u = _time_midpoints(r, n_time)
    mt = np.array([green_mass(medium, t - ui, x) for ui in u])
    ms = np.array([green_mass(medium, s - ui, x) for ui in u])
    return sigma0**2 * float(np.sum(mt * ms)) * r / n_time


def write_paths_csv(field_: StateField, path) -> None:
    """``path,t,x,Y`` rows, one per (path, time node, space node)."""
    t, x = field_.grid.t, field_.grid.x
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "t", "x", "Y"])
        for p in range(field_.n_paths):
            for k in range(t.size):
                for j in range(x.size):
                    writer.writerow([p, repr(float(t[k])), repr(float(x[j])), repr(float(field_.values[p, k, j]))])


def write_stats_csv(field_: StateField, path) -> None:
    """Aggregated ``t,x,mean,variance,stderr`` rows."""
    mean, var, se = field_.statistics()
    t, x = field_.grid.t, field_.grid.x
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "mean", "variance", "stderr"])
        for k in range(t.size):
            for j in range(x.size):
                writer.writerow([repr(float(t[k])), repr(float(x[j])), repr(float(mean[k, j])),
                                 repr(float(var[k, j])), repr(float(se[k, j]))])

"""Picard iteration for the nonlinear mild equation, and a time-stepping oracle."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .discretization import BrownianPaths, ImplicitStep, SpaceTimeGrid, medium_generator
from .kernel import CompositeMedium, green_matrix
from .linear import InitialCondition, StateField, propagate

Coefficient = Callable[..., np.ndarray]  # (t, x, y, u) -> array broadcast like y

FD_STEP = 1e-6


def _zero(t, x, y, u):
    return np.zeros_like(y)


@dataclass(frozen=True)
class CoefficientSpec:
    """Drift ``b`` and volatility ``sigma`` with declared Lipschitz and growth constants.

    Partial derivatives are optional; missing ones fall back to central
    differences.
    """

    b: Coefficient
    sigma: Coefficient
    lip: float
    growth: float
    b_y: Coefficient | None = None
    b_u: Coefficient | None = None
    sigma_y: Coefficient | None = None
    sigma_u: Coefficient | None = None
    name: str = "custom"

    def __post_init__(self):
        if self.lip < 0 or self.growth < 0:
            raise ValueError("Lipschitz and growth constants must be non-negative")

    @classmethod
    def affine(cls, b_slope=0.0, b_const=0.0, s_slope=0.0, s_const=0.0) -> "CoefficientSpec":
        """``b = b_slope y + b_const`` and ``sigma = s_slope y + s_const`` (control independent)."""

        def b(t, x, y, u):
            return b_slope * y + b_const

        def sigma(t, x, y, u):
            return s_slope * y + s_const

        def const(c):
            return lambda t, x, y, u: np.full_like(y, c)

        return cls(
            b, sigma,
            lip=max(abs(b_slope), abs(s_slope)),
            growth=max(abs(b_slope), abs(b_const), abs(s_slope), abs(s_const)),
            b_y=const(b_slope), b_u=_zero, sigma_y=const(s_slope), sigma_u=_zero,
            name=f"affine(b={b_slope!r}y+{b_const!r}, sigma={s_slope!r}y+{s_const!r})",
        )

    @classmethod
    def additive(cls, sigma0: float) -> "CoefficientSpec":
        return cls.affine(s_const=sigma0)

    def _partial(self, fn, explicit, wrt, t, x, y, u):
        if explicit is not None:
            return explicit(t, x, y, u)
        if wrt == "y":
            return (fn(t, x, y + FD_STEP, u) - fn(t, x, y - FD_STEP, u)) / (2 * FD_STEP)
        return (fn(t, x, y, u + FD_STEP) - fn(t, x, y, u - FD_STEP)) / (2 * FD_STEP)

    def db_dy(self, t, x, y, u):
        return self._partial(self.b, self.b_y, "y", t, x, y, u)

    def db_du(self, t, x, y, u):
        return self._partial(self.b, self.b_u, "u", t, x, y, u)

    def dsigma_dy(self, t, x, y, u):
        return self._partial(self.sigma, self.sigma_y, "y", t, x, y, u)

    def dsigma_du(self, t, x, y, u):
        return self._partial(self.sigma, self.sigma_u, "u", t, x, y, u)

    def check_hypotheses(self, n_samples=2000, seed=0, t_max=1.0, x_range=(-5.0, 5.0), y_scale=10.0, u=None):
        """Spot-check the declared Lipschitz and growth constants on random samples."""
        rng = np.random.default_rng(seed)
        t = rng.uniform(0, t_max, n_samples)
        x = rng.uniform(*x_range, n_samples)
        y1 = rng.normal(0, y_scale, n_samples)
        y2 = rng.normal(0, y_scale, n_samples)
        slack = 1e-9 * (1 + np.abs(y1) + np.abs(y2))
        for label, fn in (("b", self.b), ("sigma", self.sigma)):
            d = np.abs(fn(t, x, y1, u) - fn(t, x, y2, u))
            if np.any(d > self.lip * np.abs(y1 - y2) + slack):
                raise ValueError(f"{label} violates the declared Lipschitz constant {self.lip}")
            if np.any(np.abs(fn(t, x, y1, u)) > self.growth * (1 + np.abs(y1)) + slack):
                raise ValueError(f"{label} violates the declared linear-growth constant {self.growth}")


@dataclass
class PicardDiagnostics:
    """``h[n] = sup_(t,x) E|Y_(n+1) - Y_n|^2`` estimated over the path bundle."""

    h: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return max(len(self.h) - 1, 0)

    @property
    def ratios(self) -> np.ndarray:
        h = np.asarray(self.h)
        with np.errstate(divide="ignore", invalid="ignore"):
            return h[1:] / h[:-1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "h_n"])
            for n, hn in enumerate(self.h):
                writer.writerow([n, repr(float(hn))])


class PicardNonConvergence(RuntimeError):
    def __init__(self, diagnostics: PicardDiagnostics, field_: StateField):
        super().__init__(f"Picard iteration stopped after {len(diagnostics.h)} sweeps, last h_n={diagnostics.h[-1]:.3e}")
        self.diagnostics = diagnostics
        self.field = field_


def _control_at(u, k):
    if u is None or np.isscalar(u):
        return u
    return u[min(k, len(u) - 1)]


def _sweep_semigroup(Y, det, K1, coeffs, grid, dB, u):
    """One Picard map applied in place; returns ``sup E|new - old|^2``."""
    x, t, dt = grid.x, grid.t, grid.dt
    S = np.zeros((Y.shape[0], grid.nx))
    K1T = np.ascontiguousarray(K1.T)
    worst = 0.0
    for k in range(grid.nt + 1):
        old = Y[:, k, :]
        new = det[k] + S
        worst = max(worst, float(np.max(np.mean((new - old) ** 2, axis=0))))
        if k < grid.nt:
            uk = _control_at(u, k)
            F = dt * coeffs.b(t[k], x, old, uk) + coeffs.sigma(t[k], x, old, uk) * dB[:, k, None]
            # sum_(m<=k) K_(k+1-m) F_m = K_1 (S_k + F_k) by the semigroup property
            S = (S + F) @ K1T
        Y[:, k, :] = new
    return worst


def _sweep_direct(Y, det, lags, coeffs, grid, dB, u):
    x, t, dt = grid.x, grid.t, grid.dt
    F = np.empty((Y.shape[0], grid.nt, grid.nx))
    worst = 0.0
    for k in range(grid.nt + 1):
        old = Y[:, k, :]
        new = det[k].copy()
        for m in range(k):
            new = new + F[:, m, :] @ lags[k - m].T
        worst = max(worst, float(np.max(np.mean((new - old) ** 2, axis=0))))
        if k < grid.nt:
            uk = _control_at(u, k)
            F[:, k, :] = dt * coeffs.b(t[k], x, old, uk) + coeffs.sigma(t[k], x, old, uk) * dB[:, k, None]
        Y[:, k, :] = new
    return worst


def picard_solve(
    medium: CompositeMedium,
    coeffs: CoefficientSpec,
    ic: InitialCondition,
    grid: SpaceTimeGrid,
    paths: BrownianPaths,
    tol: float = 1e-6,
    max_iter: int = 25,
    u=None,
    convolution: str = "semigroup",
    tau_min: float | None = None,
):
    """Fixed-point iteration of the mild map on a frozen path bundle.

    ``Y_0(t, x) = int G(t, x, z) xi(z) dz`` and each sweep evaluates the
    space-time convolutions with left-point Ito sums.  ``convolution="direct"``
    sums ``K_(k-m) F_m`` over all lags explicitly (O(nt^2) products);
    ``"semigroup"`` factors the sum through the one-step kernel (O(nt)).
    Returns ``(StateField, PicardDiagnostics)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if paths.nt != grid.nt or not np.isclose(paths.dt, grid.dt):
        raise ValueError("path bundle does not match the time grid")
    tau_min = grid.dt / 10 if tau_min is None else tau_min

    det = propagate(medium, grid, ic.on_grid(grid), tau_min)
    Y = np.repeat(det[None], paths.n_paths, axis=0)
    dB = paths.increments
    if convolution == "semigroup":
        K1 = green_matrix(medium, grid.dt, grid.x, tau_min=tau_min)
        sweep = lambda: _sweep_semigroup(Y, det, K1, coeffs, grid, dB, u)  # noqa: E731
    elif convolution == "direct":
        lags = [None] + [green_matrix(medium, l * grid.dt, grid.x, tau_min=tau_min) for l in range(1, grid.nt + 1)]
        sweep = lambda: _sweep_direct(Y, det, lags, coeffs, grid, dB, u)  # noqa: E731
    else:
        raise ValueError(f"unknown convolution mode {convolution!r}")

    diag = PicardDiagnostics()
    for _ in range(max_iter):
        diag.h.append(sweep())
        if not np.isfinite(diag.h[-1]):
            break
        if diag.h[-1] <= tol:
            diag.converged = True
            return StateField(Y, grid, paths.master_seed, f"picard-{convolution}"), diag
    raise PicardNonConvergence(diag, StateField(np.nan_to_num(Y), grid, paths.master_seed, f"picard-{convolution}"))


def euler_oracle(
    medium: CompositeMedium,
    coeffs: CoefficientSpec,
    ic: InitialCondition,
    grid: SpaceTimeGrid,
    paths: BrownianPaths,
    u=None,
) -> StateField:
    """Semi-implicit Euler-Maruyama on the finite-volume generator.

    ``Y_(k+1) = (I - dt L)^(-1) (Y_k + dt b(Y_k) + sigma(Y_k) dB_k)``
    """
    if paths.nt != grid.nt or not np.isclose(paths.dt, grid.dt):
        raise ValueError("path bundle does not match the time grid")
    step = ImplicitStep(medium_generator(medium, grid), grid.dt)
    x, t, dt = grid.x, grid.t, grid.dt
    Y = np.empty((paths.n_paths, grid.nt + 1, grid.nx))
    Y[:, 0, :] = ic.on_grid(grid)
    dB = paths.increments
    for k in range(grid.nt):
        y = Y[:, k, :]
        uk = _control_at(u, k)
        rhs = y + dt * coeffs.b(t[k], x, y, uk) + coeffs.sigma(t[k], x, y, uk) * dB[:, k, None]
        Y[:, k + 1, :] = step(rhs)
    return StateField(Y, grid, paths.master_seed, "euler-oracle")


def _slice_indices(grid, time_indices):
    return sorted({int(k) % (grid.nt + 1) for k in time_indices})


def _pipelined_sweeps(det, K1T, coeffs, grid, dB, u, n_iter, keep):
    """March iterates 1..n_iter together in time; returns (h per iterate, saved slices)."""
    x, t, dt = grid.x, grid.t, grid.dt
    n_paths = dB.shape[0]
    # S[n] accumulates the stochastic convolution that produces iterate n + 1
    S = np.zeros((n_iter, n_paths, grid.nx))
    worst = np.zeros(n_iter)
    saved = {k: np.empty((n_iter + 1, n_paths, grid.nx)) for k in keep}
    diff = np.empty((n_paths, grid.nx))
    for k in range(grid.nt + 1):
        old = np.broadcast_to(det[k], (n_paths, grid.nx))
        if k in saved:
            saved[k][0] = old
        uk = _control_at(u, k)
        for n in range(n_iter):
            new = det[k] + S[n]
            np.subtract(new, old, out=diff)
            np.square(diff, out=diff)
            worst[n] = max(worst[n], float(np.max(diff.mean(axis=0))))
            if k < grid.nt:
                F = dt * coeffs.b(t[k], x, old, uk) + coeffs.sigma(t[k], x, old, uk) * dB[:, k, None]
                F += S[n]
                np.matmul(F, K1T, out=S[n])
            if k in saved:
                saved[k][n + 1] = new
            old = new
    return worst, saved


def picard_slices(
    medium: CompositeMedium,
    coeffs: CoefficientSpec,
    ic: InitialCondition,
    grid: SpaceTimeGrid,
    paths: BrownianPaths,
    time_indices=(-1,),
    tol: float = 1e-6,
    max_iter: int = 25,
    u=None,
    tau_min: float | None = None,
    first_batch: int = 4,
):
    """Semigroup Picard iteration that keeps only selected time slices.

    Iterate ``n + 1`` at step ``k`` needs iterate ``n`` at step ``k`` only, so
    the iterates are marched forward together in a single pass and memory
    stays at a few slices instead of whole fields.  The pass is attempted with
    ``first_batch`` iterates and repeated with twice as many (up to
    ``max_iter``) until one converges.  The arithmetic is the same as
    ``picard_solve(convolution="semigroup")``.  Returns
    ``({k: (paths, nx) array}, PicardDiagnostics)``; raises
    ``PicardNonConvergence`` (with an empty field) otherwise.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    if paths.nt != grid.nt or not np.isclose(paths.dt, grid.dt):
        raise ValueError("path bundle does not match the time grid")
    tau_min = grid.dt / 10 if tau_min is None else tau_min
    keep = _slice_indices(grid, time_indices)

    det = propagate(medium, grid, ic.on_grid(grid), tau_min)
    K1T = np.ascontiguousarray(green_matrix(medium, grid.dt, grid.x, tau_min=tau_min).T)
    n_iter = min(max(first_batch, 1), max_iter)
    while True:
        worst, saved = _pipelined_sweeps(det, K1T, coeffs, grid, paths.increments, u, n_iter, keep)
        diag = PicardDiagnostics()
        for n in range(n_iter):
            diag.h.append(float(worst[n]))
            if not np.isfinite(worst[n]):
                break
            if worst[n] <= tol:
                diag.converged = True
                return {k: saved[k][n + 1].copy() for k in keep}, diag
        if n_iter == max_iter or not np.all(np.isfinite(worst)):
            break
        n_iter = min(2 * n_iter, max_iter)
    raise PicardNonConvergence(diag, StateField(np.zeros((1, grid.nt + 1, grid.nx)), grid, paths.master_seed, "picard-slices"))


def euler_oracle_slices(
    medium: CompositeMedium,
    coeffs: CoefficientSpec,
    ic: InitialCondition,
    grid: SpaceTimeGrid,
    paths: BrownianPaths,
    time_indices=(-1,),
    u=None,
) -> dict:
    """``euler_oracle`` that keeps only the selected time slices."""
    if paths.nt != grid.nt or not np.isclose(paths.dt, grid.dt):
        raise ValueError("path bundle does not match the time grid")
    keep = _slice_indices(grid, time_indices)
    step = ImplicitStep(medium_generator(medium, grid), grid.dt)
    x, t, dt = grid.x, grid.t, grid.dt
    y = np.repeat(ic.on_grid(grid)[None], paths.n_paths, axis=0)
    out = {0: y.copy()} if 0 in keep else {}
    dB = paths.increments
    for k in range(grid.nt):
        uk = _control_at(u, k)
        y = step(y + dt * coeffs.b(t[k], x, y, uk) + coeffs.sigma(t[k], x, y, uk) * dB[:, k, None])
        if k + 1 in keep:
            out[k + 1] = y.copy()
    return out

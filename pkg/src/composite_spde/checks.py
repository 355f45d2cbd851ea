"""Invariant suite for the kernel and the discrete generator.

Each check returns a :class:`CheckRow`; ``run_checks`` evaluates all of them
over a list of media and is what the ``verify-kernel`` command reports.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .discretization import SpaceTimeGrid, medium_generator, node_weights, pairing_defect
from .kernel import (
    CompositeMedium,
    gaussian_bound,
    gaussian_bound_constants,
    green,
    green_interface_limits,
    green_mass,
    integrate_against,
)

TAU_LATTICE = (0.01, 0.1, 1.0, 5.0)
X_LATTICE = (-3.0, -0.5, 0.0, 0.5, 3.0)

DEFAULT_MEDIA = (
    CompositeMedium(1.0, 1.0, 1.0, 1.0),
    CompositeMedium(1.0, 4.0, 1.0, 1.0),
    CompositeMedium(1.0, 1.0, 1.0, 2.0),
    CompositeMedium(0.5, 2.0, 1.0, 1.0),
    CompositeMedium(2.0, 0.5, 3.0, 1.0),
)


@dataclass(frozen=True)
class CheckRow:
    check_name: str
    medium_id: str
    max_abs_error: float
    tolerance: float
    passed: bool


def medium_id(m: CompositeMedium) -> str:
    return f"a1={m.a1:g};a2={m.a2:g};rho1={m.rho1:g};rho2={m.rho2:g}"


def _row(name, m, err, tol):
    err = float(err)
    return CheckRow(name, medium_id(m), err, tol, bool(np.isfinite(err) and err <= tol))


def random_tuples(n: int, seed: int):
    """Samples of ``(tau, x, z)`` with log-uniform ``tau`` in [1e-3, 10] and ``x, z`` in [-5, 5]."""
    rng = np.random.default_rng(seed)
    tau = 10 ** rng.uniform(-3, 1, n)
    return tau, rng.uniform(-5, 5, n), rng.uniform(-5, 5, n)


def check_mass(m: CompositeMedium, tol: float = 1e-8) -> CheckRow:
    err = max(abs(green_mass(m, tau, x) - 1.0) for tau in TAU_LATTICE for x in X_LATTICE)
    return _row("mass", m, err, tol)


def check_positivity(m: CompositeMedium, n: int = 10_000, seed: int = 1) -> CheckRow:
    tau, x, z = random_tuples(n, seed)
    G = green(m, tau, x, z)
    # a zero is only legitimate where the Gaussian factor itself underflows
    direct = (m.h(x) - m.h(z)) ** 2 / (2 * tau)
    bad = np.sum((G < 0) | ((G == 0) & (direct < 700)) | ~np.isfinite(G))
    return _row("positivity", m, float(bad), 0.0)


def check_gaussian_bound(m: CompositeMedium, n: int = 10_000, seed: int = 2) -> CheckRow:
    tau, x, z = random_tuples(n, seed)
    excess = green(m, tau, x, z) - gaussian_bound(m, tau, x, z)
    return _row("gaussian_bound", m, float(max(np.max(excess), 0.0)), 0.0)


def _one_sided(m, tau, x, eps):
    """Richardson-extrapolated one-sided values of ``G(tau, x, .)`` at the interface."""
    left = 2 * green(m, tau, x, -eps) - green(m, tau, x, -2 * eps)
    right = 2 * green(m, tau, x, eps) - green(m, tau, x, 2 * eps)
    return left, right


def check_interface_jump(m: CompositeMedium, tol: float = 1e-9, eps: float = 1e-8) -> CheckRow:
    target = m.rho2 / m.rho1
    err = 0.0
    for tau in TAU_LATTICE:
        for x in X_LATTICE:
            left, right = _one_sided(m, tau, x, eps)
            lo, hi = green_interface_limits(m, tau, x)
            if lo < 1e-200:
                continue
            err = max(err, abs(right / left - target), abs(hi / lo - target))
    return _row("interface_jump", m, err, tol)


def _dz_one_sided(m, tau, x, eps):
    lo, hi = green_interface_limits(m, tau, x)
    g = lambda z: green(m, tau, x, z)  # noqa: E731
    left = (3 * g(0.0) - 4 * g(-eps) + g(-2 * eps)) / (2 * eps)
    right = (-3 * hi + 4 * g(eps) - g(2 * eps)) / (2 * eps)
    return left, right


def check_flux_source(m: CompositeMedium, tol: float = 1e-4, eps: float = 1e-5) -> CheckRow:
    """``a rho d/dz (G / rho)`` (equivalently ``a dG/dz``) agrees on both sides of ``z = 0``."""
    err = 0.0
    for tau in TAU_LATTICE:
        for x in X_LATTICE:
            left, right = _dz_one_sided(m, tau, x, eps)
            jump = abs(m.a1 * left - m.a2 * right)
            err = max(err, jump / max(1.0, abs(m.a1 * left)))
    return _row("flux_continuity_z", m, err, tol)


def check_flux_target(m: CompositeMedium, tol: float = 1e-4, eps: float = 1e-5) -> CheckRow:
    """``a rho dG/dx`` agrees on both sides of ``x = 0`` for every source point."""
    err = 0.0
    for tau in TAU_LATTICE:
        for z in X_LATTICE:
            g = lambda x: green(m, tau, x, z)  # noqa: E731
            left = (3 * g(0.0) - 4 * g(-eps) + g(-2 * eps)) / (2 * eps)
            right = (-3 * g(0.0) + 4 * g(eps) - g(2 * eps)) / (2 * eps)
            fl, fr = m.a1 * m.rho1 * left, m.a2 * m.rho2 * right
            err = max(err, abs(fl - fr) / max(1.0, abs(fl)))
    return _row("flux_continuity_x", m, err, tol)


def check_semigroup(m: CompositeMedium, n: int = 20, seed: int = 3, tol: float = 1e-6) -> CheckRow:
    rng = np.random.default_rng(seed)
    err = 0.0
    for _ in range(n):
        x, z = rng.uniform(-2, 2, 2)
        t1, t2 = rng.uniform(0.05, 1.0, 2)
        lhs = integrate_against(m, t1, x, lambda y: green(m, t2, y, z))
        err = max(err, abs(lhs - green(m, t1 + t2, x, z)))
    return _row("semigroup", m, err, tol)


def check_homogeneous_reduction(m: CompositeMedium, n: int = 1000, seed: int = 4, tol: float = 1e-12):
    if not m.is_homogeneous:
        return None
    tau, x, z = random_tuples(n, seed)
    ref = np.exp(-((x - z) ** 2) / (2 * m.a1 * tau)) / np.sqrt(2 * np.pi * m.a1 * tau)
    return _row("homogeneous_reduction", m, np.max(np.abs(green(m, tau, x, z) - ref)), tol)


def check_bound_constants(m: CompositeMedium) -> CheckRow:
    """The integral of the pointwise bound dominates the unit kernel mass."""
    b = gaussian_bound_constants(m)
    ok = b.c_lambda > 0 and b.c_diff > 0 and b.c1 > 0 and b.mass_bound >= 1.0
    return _row("bound_constants", m, 0.0 if ok else 1.0, 0.0)


def check_generator(m: CompositeMedium, nx: int = 41, tol: float = 1e-10) -> list[CheckRow]:
    grid = SpaceTimeGrid.symmetric(4.0, nx, 1.0, 10)
    L = medium_generator(m, grid).toarray()
    w = node_weights(grid, m.rho1, m.rho2)
    WL = w[:, None] * L
    rows = [
        _row("generator_row_sums", m, np.max(np.abs(L.sum(axis=1))), tol),
        _row("generator_self_adjoint", m, np.max(np.abs(WL - WL.T)), tol),
        _row("generator_dissipative", m, max(float(np.max(np.linalg.eigvals(L).real)), 0.0), tol),
        _row("generator_conservation", m, np.max(np.abs(expm(0.1 * L) @ np.ones(nx) - 1)), 1e-12),
    ]
    return rows


def bump(center: float = 0.3, radius: float = 1.5):
    """Compactly supported ``(1 - s^2)^4`` test function and its derivative."""

    def phi(x):
        s = (np.asarray(x, dtype=float) - center) / radius
        return np.where(np.abs(s) < 1, (1 - s**2) ** 4, 0.0)

    def phi_dx(x):
        s = (np.asarray(x, dtype=float) - center) / radius
        return np.where(np.abs(s) < 1, -8 * s * (1 - s**2) ** 3 / radius, 0.0)

    return phi, phi_dx


def pairing_study(m: CompositeMedium, sizes=(201, 401, 801), half_width: float = 3.0):
    """Pairing defects with and without the interface term under grid refinement."""
    phi, dphi = bump()
    with_dirac, without = [], []
    for nx in sizes:
        grid = SpaceTimeGrid.symmetric(half_width, nx, 1.0, 1)
        Y = np.exp(-((grid.x - 0.2) ** 2))
        with_dirac.append(pairing_defect(m, Y, phi, dphi, grid, include_dirac=True))
        without.append(pairing_defect(m, Y, phi, dphi, grid, include_dirac=False))
    with_dirac, without = np.array(with_dirac), np.array(without)
    orders = np.log2(with_dirac[:-1] / with_dirac[1:])
    return with_dirac, without, orders


def check_pairing(m: CompositeMedium) -> CheckRow:
    """Order >= 1 with the interface term; without it the defect must stay 10x larger."""
    with_dirac, without, orders = pairing_study(m)
    shortfall = max(0.0, 1.0 - float(np.min(orders)))
    if with_dirac[-1] < 1e-13:
        shortfall = 0.0  # exact on these grids
    if m.a1 * m.rho1 != m.a2 * m.rho2 and without[-1] <= 10 * with_dirac[-1]:
        shortfall = max(shortfall, 1.0)
    return _row("pairing_order", m, shortfall, 0.0)


def run_checks(media=DEFAULT_MEDIA, semigroup_samples: int = 20) -> list[CheckRow]:
    rows: list[CheckRow] = []
    for m in media:
        rows.append(_row("lambda_range", m, max(abs(m.lam) - 1.0, 0.0), 0.0))
        rows.append(check_bound_constants(m))
        rows.append(check_mass(m))
        rows.append(check_positivity(m))
        rows.append(check_gaussian_bound(m))
        rows.append(check_interface_jump(m))
        rows.append(check_flux_source(m))
        rows.append(check_flux_target(m))
        rows.append(check_semigroup(m, n=semigroup_samples))
        homog = check_homogeneous_reduction(m)
        if homog is not None:
            rows.append(homog)
        rows.extend(check_generator(m))
        rows.append(check_pairing(m))
    return rows


def write_checks_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["check_name", "medium_id", "max_abs_error", "tolerance", "pass"])
        for r in rows:
            writer.writerow([r.check_name, r.medium_id, repr(r.max_abs_error), repr(r.tolerance), "pass" if r.passed else "fail"])


def literal_bound_violations(m: CompositeMedium, n: int = 10_000, seed: int = 2) -> int:
    """Samples where ``G`` exceeds ``C^lam / sqrt(2 pi tau) exp(-(x - z)^2 / (2 C tau))``.

    This variant puts ``C = min(1 / a_i)`` in the denominator of the
    exponent; it decays faster than the kernel whenever a diffusivity exceeds
    one, so it is not an upper bound in general.
    """
    tau, x, z = random_tuples(n, seed)
    b = gaussian_bound_constants(m)
    alt = b.c_lambda / np.sqrt(2 * math.pi * tau) * np.exp(-((x - z) ** 2) / (2 * b.c_diff * tau))
    return int(np.sum(green(m, tau, x, z) > alt))

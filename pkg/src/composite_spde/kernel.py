"""Closed-form fundamental solution of the two-material diffusion operator.

The operator is ``A = (1 / 2 rho) d/dx (a rho d/dx)`` with ``a, rho`` constant
on ``x <= 0`` and on ``x > 0``.  Its fundamental solution is a Gaussian in the
rescaled coordinate ``h(x)`` plus a reflected Gaussian weighted by the
transmission coefficient ``lambda``::

    G(tau, x, z) = (2 pi tau)^(-1/2) a(z)^(-1/2)
                   * [exp(-(h(x) - h(z))^2 / 2 tau)
                      + lambda sign(z) exp(-(|h(x)| + |h(z)|)^2 / 2 tau)]

``x`` is the backward (observation) variable, ``z`` the forward (source)
variable; ``G`` integrates to one in ``z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import ndtr

TAIL_WIDTH = 8.0  # truncation half-width in units of sqrt(tau) on the h-scale


class KernelDomainError(ValueError):
    """Raised when the kernel is evaluated outside ``tau > 0``."""


@dataclass(frozen=True)
class CompositeMedium:
    """Diffusivities and density weights of the two materials."""

    a1: float
    a2: float
    rho1: float = 1.0
    rho2: float = 1.0

    def __post_init__(self):
        for name in ("a1", "a2", "rho1", "rho2"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")

    @property
    def lam(self) -> float:
        return lambda_coeff(self)

    @property
    def is_homogeneous(self) -> bool:
        return self.a1 == self.a2 and self.rho1 == self.rho2

    def a(self, x):
        return np.where(np.asarray(x) <= 0, self.a1, self.a2)

    def rho(self, x):
        return np.where(np.asarray(x) <= 0, self.rho1, self.rho2)

    def h(self, z):
        return h_map(self, z)

    def h_inv(self, w):
        w = np.asarray(w, dtype=float)
        return np.where(w <= 0, w * math.sqrt(self.a1), w * math.sqrt(self.a2))


@dataclass(frozen=True)
class KernelBounds:
    """Constants of the Gaussian upper bound on ``G``.

    ``c_lambda`` and ``c_diff`` define the pointwise bound
    ``G <= c_lambda / sqrt(2 pi tau) * exp(-c_diff (x - z)^2 / (2 tau))``.
    ``c1 = c_lambda * sqrt(c_diff)`` is the published integrated constant;
    ``mass_bound = c_lambda / sqrt(c_diff)`` is the exact integral of the
    pointwise bound and therefore always dominates the kernel mass.
    """

    c_lambda: float
    c_diff: float
    c1: float
    mass_bound: float


def lambda_coeff(medium: CompositeMedium) -> float:
    s1 = medium.rho1 * math.sqrt(medium.a1)
    s2 = medium.rho2 * math.sqrt(medium.a2)
    return (s2 - s1) / (s2 + s1)


def h_map(medium: CompositeMedium, z):
    z = np.asarray(z, dtype=float)
    out = np.where(z <= 0, z / math.sqrt(medium.a1), z / math.sqrt(medium.a2))
    return out if out.ndim else float(out)


def _sign(z):
    # sign(0) = -1: the interface point belongs to material 1
    return np.where(z <= 0, -1.0, 1.0)


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(~(tau > 0)):
        raise KernelDomainError("G is only defined for elapsed time tau > 0")
    return tau


def green(medium: CompositeMedium, tau, x, z):
    """Pointwise fundamental solution; broadcasts over ``tau, x, z``."""
    tau = _check_tau(tau)
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    hx = h_map(medium, x)
    hz = h_map(medium, z)
    direct = (hx - hz) ** 2 / (2 * tau)
    reflected = (np.abs(hx) + np.abs(hz)) ** 2 / (2 * tau)
    # reflected >= direct, so factor out the direct exponential
    bracket = 1.0 + medium.lam * _sign(z) * np.exp(direct - reflected)
    pref = 1.0 / np.sqrt(2 * np.pi * tau * medium.a(z))
    out = pref * np.exp(-direct) * bracket
    return out if out.ndim else float(out)


def green_interface_limits(medium: CompositeMedium, tau, x):
    """One-sided limits ``(G(z -> 0-), G(z -> 0+))``."""
    tau = _check_tau(tau)
    hx = h_map(medium, x)
    core = np.exp(-(hx**2) / (2 * tau)) / np.sqrt(2 * np.pi * tau)
    lam = medium.lam
    return (1 - lam) * core / math.sqrt(medium.a1), (1 + lam) * core / math.sqrt(medium.a2)


def green_interface_slopes(medium: CompositeMedium, tau, x):
    """One-sided limits of ``dG/dz`` at the interface."""
    tau = _check_tau(tau)
    hx = h_map(medium, x)
    core = np.exp(-(hx**2) / (2 * tau)) / (np.sqrt(2 * np.pi * tau) * tau)
    shape = (hx - medium.lam * np.abs(hx)) * core
    return shape / medium.a1, shape / medium.a2


def gaussian_bound_constants(medium: CompositeMedium) -> KernelBounds:
    c_lambda = (1 + abs(medium.lam)) * (1 / math.sqrt(medium.a1) + 1 / math.sqrt(medium.a2))
    c_diff = min(1 / medium.a1, 1 / medium.a2)
    return KernelBounds(
        c_lambda=c_lambda,
        c_diff=c_diff,
        c1=c_lambda * math.sqrt(c_diff),
        mass_bound=c_lambda / math.sqrt(c_diff),
    )


def gaussian_bound(medium: CompositeMedium, tau, x, z, bounds: KernelBounds | None = None):
    """Right-hand side of the pointwise Gaussian domination of ``G``."""
    tau = _check_tau(tau)
    bounds = bounds or gaussian_bound_constants(medium)
    d2 = (np.asarray(x, dtype=float) - np.asarray(z, dtype=float)) ** 2
    return bounds.c_lambda / np.sqrt(2 * np.pi * tau) * np.exp(-bounds.c_diff * d2 / (2 * tau))


def _source_window(medium, tau, x):
    """z-interval outside of which the kernel mass is below ~1e-15."""
    hx = h_map(medium, x)
    half = TAIL_WIDTH * math.sqrt(tau)
    return float(medium.h_inv(hx - half)), float(medium.h_inv(hx + half))


def integrate_against(medium: CompositeMedium, tau: float, x: float, func, epsabs=1e-13, epsrel=1e-12):
    """Adaptive quadrature of ``z -> G(tau, x, z) func(z)`` split at the interface."""
    if not tau > 0:
        raise KernelDomainError("G is only defined for elapsed time tau > 0")
    lo, hi = _source_window(medium, tau, x)
    pieces = [(lo, min(hi, 0.0)), (max(lo, 0.0), hi)]
    total = 0.0
    for a, b in pieces:
        if b <= a:
            continue
        mid = float(medium.h_inv(h_map(medium, x)))
        points = [mid] if a < mid < b else None
        val, _ = integrate.quad(
            lambda z: green(medium, tau, x, z) * func(z),
            a, b, points=points, epsabs=epsabs, epsrel=epsrel, limit=200,
        )
        total += val
    return total


def green_mass(medium: CompositeMedium, tau: float, x: float) -> float:
    """``int G(tau, x, z) dz`` by adaptive quadrature; equals one."""
    return integrate_against(medium, tau, x, lambda z: 1.0)


def _interval_moments(lo, hi, mu, sd):
    """Zeroth moment and first moment about ``lo`` of N(mu, sd^2) on [lo, hi]."""
    a = (lo - mu) / sd
    b = (hi - mu) / sd
    upper = a > 0
    m0 = np.where(upper, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))
    pdf_a = np.exp(-0.5 * np.where(np.isfinite(a), a, np.inf) ** 2) / math.sqrt(2 * math.pi)
    pdf_b = np.exp(-0.5 * np.where(np.isfinite(b), b, np.inf) ** 2) / math.sqrt(2 * math.pi)
    with np.errstate(invalid="ignore"):
        m1 = np.where(np.isfinite(lo), (mu - lo) * m0 + sd * (pdf_a - pdf_b), 0.0)
    return m0, m1


def interpolation_matrix(nodes, targets):
    """Rows of piecewise-linear hat-function values (constant beyond the ends)."""
    nodes = np.asarray(nodes, dtype=float)
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    eye = np.eye(nodes.size)
    return np.stack([np.interp(targets, nodes, eye[j]) for j in range(nodes.size)], axis=1)


TAIL_FLUSH = 1e-200


def green_matrix(medium: CompositeMedium, tau: float, nodes, targets=None, tau_min: float = 0.0):
    """Matrix ``K`` with ``(K f)_i = int G(tau, x_i, z) f(z) dz``.

    ``f`` is the piecewise-linear interpolant of its node values, extended as
    a constant beyond the first and last node.  The integrals are evaluated in
    closed form cell by cell (Gaussian moments on the ``h``-scale), so the rows
    sum to one up to rounding.  For ``tau < tau_min`` the operator is replaced
    by interpolation (the kernel is an approximate identity).
    """
    if tau < 0:
        raise KernelDomainError("elapsed time must be non-negative")
    nodes = np.asarray(nodes, dtype=float)
    targets = nodes if targets is None else np.atleast_1d(np.asarray(targets, dtype=float))
    if tau == 0 or tau < tau_min:
        return interpolation_matrix(nodes, targets)
    if np.any((nodes[:-1] < 0) & (nodes[1:] > 0)):
        raise ValueError("the interface z = 0 must be a node")

    sd = math.sqrt(tau)
    lam = medium.lam
    w = h_map(medium, nodes)
    hx = h_map(medium, targets)[:, None]
    ahx = np.abs(hx)
    left_cell = (nodes[1:] <= 0)[None, :]

    lo, hi = w[None, :-1], w[None, 1:]
    d0, d1 = _interval_moments(lo, hi, hx, sd)
    r_mu = np.where(left_cell, ahx, -ahx)
    r0, r1 = _interval_moments(lo, hi, r_mu, sd)
    coef = np.where(left_cell, -lam, lam)
    m0 = d0 + coef * r0
    m1 = d1 + coef * r1
    dw = hi - lo
    right_w = m1 / dw
    left_w = m0 - right_w

    K = np.zeros((targets.size, nodes.size))
    K[:, :-1] += left_w
    K[:, 1:] += right_w

    # constant extension beyond the grid
    t_lo0, _ = _interval_moments(-np.inf, w[0], hx[:, 0], sd)
    t_lo_r, _ = _interval_moments(-np.inf, w[0], ahx[:, 0] if nodes[0] <= 0 else -ahx[:, 0], sd)
    K[:, 0] += t_lo0 + (-lam if nodes[0] <= 0 else lam) * t_lo_r
    t_hi0, _ = _interval_moments(w[-1], np.inf, hx[:, 0], sd)
    t_hi_r, _ = _interval_moments(w[-1], np.inf, -ahx[:, 0] if nodes[-1] > 0 else ahx[:, 0], sd)
    K[:, -1] += t_hi0 + (lam if nodes[-1] > 0 else -lam) * t_hi_r
    # far-tail weights near the subnormal range slow every later matmul
    # several-fold and carry no information next to unit row sums
    K[np.abs(K) < TAIL_FLUSH] = 0.0
    return K


def apply_green(medium: CompositeMedium, tau: float, x_targets, f, grid, tau_min: float | None = None):
    """Propagate the grid function ``f`` by the kernel for elapsed time ``tau``.

    ``tau_min`` defaults to a tenth of the grid time step; below it the
    operator acts as the identity.
    """
    if tau_min is None:
        tau_min = grid.dt / 10
    K = green_matrix(medium, tau, grid.x, x_targets, tau_min=tau_min)
    return K @ np.asarray(f, dtype=float)

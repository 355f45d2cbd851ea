import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from composite_spde.discretization import SpaceTimeGrid
from composite_spde.kernel import (
    CompositeMedium,
    KernelDomainError,
    apply_green,
    gaussian_bound,
    gaussian_bound_constants,
    green,
    green_interface_limits,
    green_mass,
    green_matrix,
    h_map,
    integrate_against,
    lambda_coeff,
)

positive = st.floats(min_value=0.05, max_value=20.0, allow_nan=False)
media = st.builds(CompositeMedium, positive, positive, positive, positive)
taus = st.floats(min_value=1e-3, max_value=10.0)
points = st.floats(min_value=-5.0, max_value=5.0)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
def test_medium_rejects_non_positive(bad):
    with pytest.raises(ValueError, match="a2"):
        CompositeMedium(1.0, bad)


@pytest.mark.parametrize(
    "medium, expected",
    [
        (CompositeMedium(1, 1, 1, 1), 0.0),
        (CompositeMedium(1, 4, 1, 1), 1 / 3),
        (CompositeMedium(1, 1, 1, 2), 1 / 3),
    ],
)
def test_lambda_examples(medium, expected):
    assert lambda_coeff(medium) == pytest.approx(expected, abs=1e-15)


@given(media)
def test_lambda_strictly_inside_unit_interval(m):
    lam = m.lam
    assert abs(lam) < 1
    s1, s2 = m.rho1 * math.sqrt(m.a1), m.rho2 * math.sqrt(m.a2)
    assert (lam == 0) == (s1 == s2)


def test_h_map_examples():
    assert h_map(CompositeMedium(4, 1), -2.0) == pytest.approx(-1.0)
    assert h_map(CompositeMedium(3, 7), 0.0) == 0.0
    assert h_map(CompositeMedium(1, 9), 3.0) == pytest.approx(1.0)


@given(media, points, points)
def test_h_map_increasing_and_invertible(m, z1, z2):
    if z1 < z2:
        assert m.h(z1) < m.h(z2)
    assert float(m.h_inv(m.h(z1))) == pytest.approx(z1, abs=1e-12)


def test_green_standard_gaussian_at_origin():
    assert green(CompositeMedium(1, 1), 1.0, 0.0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-14)


def test_density_jump_ratio_matches_density_ratio():
    m = CompositeMedium(1, 1, 1, 2)
    eps = 1e-9
    ratio = green(m, 1.0, 1.0, eps) / green(m, 1.0, 1.0, -eps)
    assert ratio == pytest.approx(2.0, rel=1e-8)
    lo, hi = green_interface_limits(m, 1.0, 1.0)
    assert hi / lo == pytest.approx(2.0, rel=1e-14)


def test_interface_point_belongs_to_left_material():
    m = CompositeMedium(1, 4, 1, 3)
    lo, _ = green_interface_limits(m, 0.7, 0.4)
    assert green(m, 0.7, 0.4, 0.0) == pytest.approx(lo, rel=1e-14)


@pytest.mark.parametrize("tau", [0.0, -0.5])
def test_green_rejects_non_positive_time(tau):
    with pytest.raises(KernelDomainError):
        green(CompositeMedium(1, 1), tau, 0.0, 0.0)
    with pytest.raises(KernelDomainError):
        green_mass(CompositeMedium(1, 1), tau, 0.0)


@settings(max_examples=60)
@given(media, taus, points, points)
def test_positive_and_gaussian_dominated(m, tau, x, z):
    G = green(m, tau, x, z)
    assert G >= 0
    if (m.h(x) - m.h(z)) ** 2 / (2 * tau) < 600:
        assert G > 0
    assert G <= gaussian_bound(m, tau, x, z) * (1 + 1e-12)


@settings(max_examples=40)
@given(positive, st.floats(0.1, 10), taus, points, points)
def test_homogeneous_reduces_to_heat_kernel(a, rho, tau, x, z):
    m = CompositeMedium(a, a, rho, rho)
    ref = math.exp(-((x - z) ** 2) / (2 * a * tau)) / math.sqrt(2 * math.pi * a * tau)
    assert green(m, tau, x, z) == pytest.approx(ref, rel=1e-12, abs=1e-300)


def test_small_tau_stays_finite_for_negative_reflection():
    m = CompositeMedium(4, 1, 1, 1)  # lambda < 0
    z = np.linspace(-0.01, 0.01, 201)
    G = green(m, 1e-8, 0.001, z)
    assert np.all(np.isfinite(G)) and np.all(G >= 0)


@pytest.mark.parametrize("m", [CompositeMedium(1, 1), CompositeMedium(1, 4), CompositeMedium(2, 0.5, 3, 1)])
def test_mass_is_one(m):
    for tau in (0.01, 0.1, 1.0, 5.0):
        for x in (-3.0, -0.5, 0.0, 0.5, 3.0):
            assert abs(green_mass(m, tau, x) - 1) <= 1e-8


def test_mass_asymmetric_example():
    assert green_mass(CompositeMedium(1, 4), 0.5, 1.0) == pytest.approx(1.0, abs=1e-8)


def test_bound_constants_examples():
    b = gaussian_bound_constants(CompositeMedium(1, 1))
    assert (b.c_lambda, b.c_diff, b.c1) == pytest.approx((2.0, 1.0, 2.0))
    b = gaussian_bound_constants(CompositeMedium(1, 4))
    assert (b.c_lambda, b.c_diff, b.c1) == pytest.approx((2.0, 0.25, 1.0))
    # mass equals c1 for this medium
    assert green_mass(CompositeMedium(1, 4), 1.0, 0.3) == pytest.approx(b.c1, abs=1e-8)


@given(media)
def test_bound_constants_positive_and_mass_bound_dominates(m):
    b = gaussian_bound_constants(m)
    assert min(b.c_lambda, b.c_diff, b.c1, b.mass_bound) > 0
    assert b.mass_bound >= 1.0


def test_c1_can_fall_below_unit_mass():
    # with both diffusivities above one the integrated constant c1 is smaller
    # than the kernel mass; the integral of the pointwise bound is not
    m = CompositeMedium(4, 4)
    b = gaussian_bound_constants(m)
    assert b.c1 == pytest.approx(0.5)
    assert green_mass(m, 1.0, 0.0) > b.c1
    assert b.mass_bound == pytest.approx(2.0)


def test_semigroup_identity():
    m = CompositeMedium(1, 4, 1, 2)
    for x, z, t1, t2 in [(0.3, -0.4, 0.2, 0.5), (-1.0, 1.5, 0.7, 0.1), (0.0, 0.0, 0.3, 0.3)]:
        lhs = integrate_against(m, t1, x, lambda y: green(m, t2, y, z))
        assert lhs == pytest.approx(green(m, t1 + t2, x, z), abs=1e-8)


def test_green_matrix_rows_sum_to_one():
    m = CompositeMedium(0.5, 2, 1, 3)
    nodes = np.linspace(-3, 3, 61)
    for tau in (1e-3, 0.1, 2.0):
        K = green_matrix(m, tau, nodes)
        assert np.allclose(K.sum(axis=1), 1.0, atol=1e-13)
        assert np.all(K >= -1e-15)


def test_green_matrix_requires_interface_node():
    with pytest.raises(ValueError, match="interface"):
        green_matrix(CompositeMedium(1, 2), 0.5, np.linspace(-1, 1.5, 5))


def test_green_matrix_matches_quadrature_on_smooth_data():
    m = CompositeMedium(1, 4, 1, 2)
    nodes = np.linspace(-6, 6, 1201)
    f = np.cos(nodes) * np.exp(-0.1 * nodes**2)
    K = green_matrix(m, 0.4, nodes, targets=[-0.7, 0.0, 1.1])
    ref = [integrate_against(m, 0.4, x, lambda z: math.cos(z) * math.exp(-0.1 * z * z)) for x in (-0.7, 0.0, 1.1)]
    assert np.allclose(K @ f, ref, atol=1e-4)


def test_apply_green_examples():
    m = CompositeMedium(1, 1)
    grid = SpaceTimeGrid(-8.0, 8.0, 1601, 1.0, 10)
    ones = np.ones(grid.nx)
    assert np.allclose(apply_green(m, 0.7, [-1.0, 0.0, 2.0], ones, grid), 1.0, atol=1e-13)
    smooth = np.sin(grid.x)
    assert np.allclose(apply_green(m, grid.dt / 20, grid.x, smooth, grid), smooth)
    density = np.exp(-grid.x**2 / 2) / math.sqrt(2 * math.pi)
    value = apply_green(m, 1.0, [0.0], density, grid)[0]
    assert value == pytest.approx(1 / math.sqrt(4 * math.pi), abs=1e-5)


def test_apply_green_rejects_negative_time():
    grid = SpaceTimeGrid(-1.0, 1.0, 5, 1.0, 1)
    with pytest.raises(KernelDomainError):
        apply_green(CompositeMedium(1, 1), -1.0, [0.0], np.ones(5), grid)

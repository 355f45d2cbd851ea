import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from composite_spde.checks import bump, pairing_study
from composite_spde.discretization import (
    GridFunction,
    ImplicitStep,
    SpaceTimeGrid,
    discrete_generator,
    medium_generator,
    node_weights,
    pairing_defect,
    sample_paths,
)
from composite_spde.kernel import CompositeMedium, green_matrix


def test_grid_requires_interface_node():
    with pytest.raises(ValueError, match="node"):
        SpaceTimeGrid(-1.0, 2.0, 5, 1.0, 1)
    grid = SpaceTimeGrid(-1.0, 2.0, 7, 1.0, 4)
    assert grid.x[grid.zero_index] == 0.0
    assert grid.dt == pytest.approx(0.25)


@pytest.mark.parametrize(
    "args",
    [(0.5, 1.0, 5, 1.0, 1), (-1.0, 1.0, 2, 1.0, 1), (-1.0, 1.0, 5, 0.0, 1), (-1.0, 1.0, 5, 1.0, 0)],
)
def test_grid_validation(args):
    with pytest.raises(ValueError):
        SpaceTimeGrid(*args)


def test_symmetric_grid_needs_odd_count():
    with pytest.raises(ValueError):
        SpaceTimeGrid.symmetric(1.0, 10, 1.0, 1)


@given(st.integers(1, 40), st.integers(1, 40), st.floats(0.1, 10))
def test_grid_nodes_hit_ends_and_origin(left, right, dx):
    grid = SpaceTimeGrid(-left * dx, right * dx, left + right + 1, 1.0, 3)
    x = grid.x
    assert x[0] == -left * dx and x[-1] == right * dx and x[left] == 0.0
    assert np.all(np.diff(x) > 0)


def test_grid_function_csv_roundtrip(tmp_path):
    grid = SpaceTimeGrid.symmetric(2.0, 9, 1.0, 1)
    gf = GridFunction(np.sin(grid.x) / 3, grid)
    gf.to_csv(tmp_path / "f.csv")
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "x,value"
    back = GridFunction.from_csv(tmp_path / "f.csv", grid)
    assert np.array_equal(back.values, gf.values)
    with pytest.raises(ValueError):
        GridFunction(np.ones(3), grid)


def test_paths_are_reproducible_and_seed_dependent():
    grid = SpaceTimeGrid(-1.0, 1.0, 3, 1.0, 4)
    a = sample_paths(1, grid, 2).increments
    b = sample_paths(1, grid, 2).increments
    c = sample_paths(2, grid, 2).increments
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_paths_can_be_drawn_in_pieces():
    grid = SpaceTimeGrid(-1.0, 1.0, 3, 1.0, 7)
    whole = sample_paths(99, grid, 10).increments
    parts = np.vstack([sample_paths(99, grid, 4).increments, sample_paths(99, grid, 6, first_path=4).increments])
    assert np.array_equal(whole, parts)


def test_paths_validation():
    grid = SpaceTimeGrid(-1.0, 1.0, 3, 1.0, 4)
    with pytest.raises(ValueError):
        sample_paths(1, grid, 0)
    with pytest.raises(ValueError):
        sample_paths(-1, grid, 1)


def test_path_values_start_at_zero():
    grid = SpaceTimeGrid(-1.0, 1.0, 3, 1.0, 5)
    paths = sample_paths(3, grid, 4)
    assert np.all(paths.B[:, 0] == 0)
    assert np.allclose(np.diff(paths.B, axis=1), paths.increments)


def test_increment_variance_per_step():
    grid = SpaceTimeGrid(-1.0, 1.0, 3, 1.0, 100)
    inc = sample_paths(2024, grid, 100_000).increments
    var = inc.var(axis=0, ddof=1)
    assert np.all((var > 0.0095) & (var < 0.0105))
    # mean within 4 sigma
    assert np.all(np.abs(inc.mean(axis=0)) < 4 * np.sqrt(0.01 / 100_000))


def test_node_weights_integrate_piecewise_linear_exactly():
    grid = SpaceTimeGrid(-2.0, 3.0, 11, 1.0, 1)
    w = node_weights(grid, 2.0, 5.0)
    f = 1 + grid.x
    # int_{-2}^0 2 (1 + x) dx + int_0^3 5 (1 + x) dx
    assert np.dot(w, f) == pytest.approx(0.0 + 5 * (3 + 4.5))
    wd = node_weights(grid, 2.0, 5.0, domain=(-1.0, 1.0))
    assert np.dot(wd, np.ones(grid.nx)) == pytest.approx(2.0 + 5.0)


media = st.builds(
    CompositeMedium,
    st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.1, 10),
)


@settings(max_examples=25, deadline=None)
@given(media)
def test_generator_structure(m):
    grid = SpaceTimeGrid.symmetric(3.0, 31, 1.0, 10)
    L = medium_generator(m, grid).toarray()
    w = node_weights(grid, m.rho1, m.rho2)
    scale = np.max(np.abs(L))
    assert np.max(np.abs(L.sum(axis=1))) <= 1e-12 * scale
    assert np.allclose(w[:, None] * L, (w[:, None] * L).T, atol=1e-12 * scale)
    assert np.max(np.linalg.eigvals(L).real) <= 1e-10 * scale
    assert np.allclose(expm(0.05 * L) @ np.ones(grid.nx), 1.0, atol=1e-12)


def test_generator_second_derivative_consistency():
    grid = SpaceTimeGrid.symmetric(2.0, 41, 1.0, 1)
    L = discrete_generator(1.0, 1.0, (1.0, 1.0), grid)
    out = L @ grid.x**2
    assert np.allclose(out[1:-1], 1.0, atol=1e-12)


def test_generator_rejects_non_positive():
    grid = SpaceTimeGrid.symmetric(1.0, 5, 1.0, 1)
    with pytest.raises(ValueError):
        discrete_generator(0.0, 1.0, (1.0, 1.0), grid)


def test_implicit_step_solves_system():
    m = CompositeMedium(1, 4, 1, 2)
    grid = SpaceTimeGrid.symmetric(2.0, 21, 1.0, 10)
    L = medium_generator(m, grid)
    rhs = np.random.default_rng(0).normal(size=(3, grid.nx))
    X = ImplicitStep(L, grid.dt)(rhs)
    assert np.allclose(X - grid.dt * (L @ X.T).T, rhs, atol=1e-12)


def test_generator_propagation_converges_to_kernel():
    m = CompositeMedium(1, 4)
    errors = []
    for nx in (121, 241, 481):
        grid = SpaceTimeGrid.symmetric(12.0, nx, 1.0, 1)
        f = np.exp(-0.5 * (grid.x / 0.5) ** 2)
        fv = expm(medium_generator(m, grid).toarray()) @ f
        ker = green_matrix(m, 1.0, grid.x) @ f
        errors.append(np.sqrt(np.sum((fv - ker) ** 2) / np.sum(ker**2)))
    assert errors[0] / errors[1] >= 2 and errors[1] / errors[2] >= 2


def test_pairing_homogeneous_without_interface_term():
    m = CompositeMedium(1, 1)
    grid = SpaceTimeGrid.symmetric(3.0, 201, 1.0, 1)
    phi, dphi = bump()
    Y = np.exp(-((grid.x - 0.2) ** 2))
    with_term = pairing_defect(m, Y, phi, dphi, grid, include_dirac=True)
    without = pairing_defect(m, Y, phi, dphi, grid, include_dirac=False)
    assert with_term == without < 1e-3


def test_pairing_vanishing_interface_value():
    m = CompositeMedium(1, 4, 1, 2)
    phi, dphi = bump()
    defects = []
    for nx in (201, 401):
        grid = SpaceTimeGrid.symmetric(3.0, nx, 1.0, 1)
        Y = grid.x * np.exp(-(grid.x**2))
        defects.append(pairing_defect(m, Y, phi, dphi, grid, include_dirac=False))
    assert defects[1] < defects[0] / 1.9


def test_pairing_interface_term_needed_for_asymmetric_medium():
    with_dirac, without, orders = pairing_study(CompositeMedium(1, 4))
    assert np.all(orders >= 1)
    assert without[-1] > 10 * with_dirac[-1]


def test_pairing_rejects_test_function_on_boundary():
    grid = SpaceTimeGrid.symmetric(1.0, 21, 1.0, 1)
    with pytest.raises(ValueError, match="support"):
        pairing_defect(CompositeMedium(1, 1), np.ones(grid.nx), np.cos, lambda x: -np.sin(x), grid)

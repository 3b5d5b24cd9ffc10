import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rlweno import core, weno

BURGERS = core.flux_by_tag("burgers_half_u2")
LINEAR = core.flux_by_tag("linear_u")


# --- independent oracles -----------------------------------------------

def cell_average_reconstruction(cells, values, x_eval):
    """Quadratic with prescribed unit-cell averages over the given cell
    centers, evaluated at x_eval (brute-force linear solve)."""
    rows = [[c * c + 1.0 / 12.0, c, 1.0] for c in cells]
    a, b, g = np.linalg.solve(np.array(rows), np.asarray(values, dtype=float))
    return a * x_eval * x_eval + b * x_eval + g


def monomial_cell_averages(m, centers):
    lo = np.asarray(centers) - 0.5
    hi = np.asarray(centers) + 0.5
    return (hi ** (m + 1) - lo ** (m + 1)) / (m + 1)


STENCILS = [(-2, -1, 0), (-1, 0, 1), (0, 1, 2), (1, 2, 3)]  # interface at +0.5


def test_candidates_match_polynomial_oracle_on_basis():
    # every coefficient, via the unit basis windows
    for k in range(6):
        window = np.zeros(6)
        window[k] = 1.0
        cands = weno.candidate_fluxes(window)
        for r, stencil in enumerate(STENCILS):
            vals = [window[s + 2] for s in stencil]
            assert np.isclose(cands[r],
                              cell_average_reconstruction(stencil, vals, 0.5),
                              atol=1e-12)


def test_candidates_linear_window():
    assert np.allclose(weno.candidate_fluxes([1, 2, 3, 4, 5, 6]), 3.5)


def test_candidates_constant_window():
    assert np.allclose(weno.candidate_fluxes(np.full(6, 2.7)), 2.7)


def test_candidates_quadratic_window():
    window = (np.arange(-2.0, 4.0)) ** 2
    cands = weno.candidate_fluxes(window)
    for r, stencil in enumerate(STENCILS):
        vals = [window[s + 2] for s in stencil]
        assert np.isclose(cands[r],
                          cell_average_reconstruction(stencil, vals, 0.5))


@pytest.mark.parametrize("positive", [True, False])
def test_optimal_weights_are_fifth_order_exact(positive):
    # cell averages of random quartics; the d-weighted blend of the three
    # admissible candidates must reproduce the interface point value exactly
    rng = np.random.default_rng(42)
    centers = np.arange(-2.0, 4.0)
    for _ in range(10):
        coeffs = rng.normal(size=5)
        window = sum(c * monomial_cell_averages(m, centers)
                     for m, c in enumerate(coeffs))
        exact = sum(c * 0.5 ** m for m, c in enumerate(coeffs))
        w = weno.weno_weights(np.zeros(3), positive)
        combined = float(w @ weno.candidate_fluxes(window))
        assert np.isclose(combined, exact, atol=1e-10)


def test_roe_speed_examples():
    assert np.isclose(weno.roe_speed(1.0, 3.0, BURGERS), 2.0)
    assert np.isclose(weno.roe_speed(-1.0, 1.0, BURGERS), 0.0)
    assert np.isclose(weno.roe_speed(2.0, 2.0, BURGERS), 2.0)


def test_roe_speeds_batch_matches_scalar():
    u = np.array([0.3, -1.2, 0.0, 2.0, 2.0, -0.4, 1.1, 0.9])
    batch = weno.roe_speeds_batch(u, BURGERS)
    for j in range(len(u)):
        assert np.isclose(batch[j], weno.roe_speed(u[j], u[(j + 1) % len(u)], BURGERS))


def test_smoothness_constant_window():
    assert np.allclose(weno.smoothness_indicators(np.full(6, 3.3), True), 0.0)
    assert np.allclose(weno.smoothness_indicators(np.full(6, 3.3), False), 0.0)


def test_smoothness_linear_window():
    assert np.allclose(weno.smoothness_indicators([1, 2, 3, 4, 5, 6], True), 1.0)
    assert np.allclose(weno.smoothness_indicators([1, 2, 3, 4, 5, 6], False), 1.0)


def test_smoothness_flags_jump_stencil():
    window = np.array([0.0, 0.0, 0.0, 0.0, 5.0, 5.0])  # jump inside stencil 2 only
    b = weno.smoothness_indicators(window, True)
    assert b[2] > 100 * max(b[0], b[1], 1e-30)
    assert b[0] == 0.0 and b[1] == 0.0


def test_weno_weights_smooth_limits():
    assert np.allclose(weno.weno_weights(np.zeros(3), True), [0.1, 0.6, 0.3, 0.0])
    assert np.allclose(weno.weno_weights(np.zeros(3), False), [0.0, 0.3, 0.6, 0.1])


def test_weno_weights_suppresses_rough_stencil():
    w = weno.weno_weights(np.array([0.0, 0.0, 1e12]), True)
    assert w[2] < 1e-12
    assert np.isclose(w[0] + w[1], 1.0)
    assert np.isclose(w[0] / w[1], 0.1 / 0.6)


@given(st.lists(st.floats(min_value=-5, max_value=5), min_size=6, max_size=6),
       st.booleans())
def test_weights_live_on_simplex_with_excluded_slot(window, positive):
    w = weno.weno_weights(weno.smoothness_indicators(window, positive), positive)
    assert np.all(w >= 0.0)
    assert np.isclose(w.sum(), 1.0, atol=1e-12)
    assert w[3 if positive else 0] == 0.0


@given(st.lists(st.floats(min_value=-5, max_value=5), min_size=6, max_size=6),
       st.booleans())
def test_mirror_symmetry(window, positive):
    w = weno.weno_weights(weno.smoothness_indicators(window, positive), positive)
    rev = weno.weno_weights(
        weno.smoothness_indicators(window[::-1], not positive), not positive)
    assert np.allclose(w, rev[::-1], atol=1e-12)


def test_interface_flux_constant_data():
    u = np.full(6, 1.7)
    assert np.isclose(weno.weno_interface_flux(u, BURGERS), BURGERS.value(1.7))


def test_interface_flux_linear_flux_data():
    u = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    assert np.isclose(weno.weno_interface_flux(u, LINEAR), 3.5)


def test_batch_matches_scalar_path():
    rng = np.random.default_rng(3)
    u = rng.normal(size=24)
    fhat = weno.interface_fluxes(u, BURGERS)
    for j in range(len(u)):
        window = u[(j + np.arange(-2, 4)) % len(u)]
        assert np.isclose(fhat[j], weno.weno_interface_flux(window, BURGERS),
                          atol=1e-13)


def test_flux_derivative_refinement_is_fifth_order():
    errs = []
    for dx in (0.02, 0.01, 0.005):
        J = round(1.0 / dx)
        x = dx * np.arange(J)
        u = np.sin(2 * np.pi * x)
        deriv = -core.rhs_conservative(weno.interface_fluxes(u, LINEAR), dx)
        errs.append(np.linalg.norm(deriv - 2 * np.pi * np.cos(2 * np.pi * x))
                    / np.sqrt(J))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 4.5)


def test_weno_solve_constant():
    grid = core.Grid.for_time(-1.0, 1.0, 0.1, 0.01, 0.3)
    prob = core.ProblemInstance(grid, BURGERS, lambda x: np.full_like(x, -0.4))
    traj = weno.weno_solve(prob)
    assert np.allclose(traj.values(), -0.4, atol=1e-14)


def test_total_variation_bounded_after_shock():
    grid = core.Grid.for_time(-1.0, 1.0, 0.02, 0.002, 0.7)
    prob = core.ProblemInstance(grid, BURGERS, lambda x: -np.sin(np.pi * x))
    traj = weno.weno_solve(prob)
    values = traj.values()
    tv = np.abs(np.diff(values, axis=1, append=values[:, :1])).sum(axis=1)
    shock_step = round(0.4 / grid.dt)
    ratios = tv[shock_step + 1:] / tv[shock_step:-1]
    assert np.all(ratios <= 1.01)

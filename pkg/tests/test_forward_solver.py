import math
import warnings

import numpy as np
import pytest

from ctrwkit import (
    ConfigurationError,
    DomainError,
    LeakageWarning,
    SpaceTimeGrid,
    StabilityError,
    Tanh,
    UnsupportedModelError,
    levy_walk_preset,
    point_mass,
    slice_cdf,
    solution_moments,
    solve_fpe,
    subdiffusion_preset,
    subordination_oracle,
    variable_order_preset,
)

import oracles

GRID = SpaceTimeGrid(-10.0, 10.0, 401, 0.0, 1.0, 1001)


@pytest.fixture(scope="module")
def half_solution():
    return solve_fpe(subdiffusion_preset(0.5), 0.0, 0.0, GRID)


def test_oracle_matches_frozen_values():
    y = np.array(sorted(oracles.SUB_DENSITY_HALF))
    np.testing.assert_allclose(subordination_oracle(0.5, 1.0, 1.0, y), [oracles.SUB_DENSITY_HALF[k] for k in y],
                               rtol=1e-8)
    for k, v in oracles.SUB_DENSITY_HALF.items():
        assert oracles.subordinated_density(0.5, 1.0, 1.0, k) == pytest.approx(v, rel=1e-8)


def test_oracle_other_orders():
    got = subordination_oracle(0.7, 1.0, 1.0, np.array([0.5, 0.0]))
    np.testing.assert_allclose(got, [oracles.SUB_DENSITY_07[0.5], oracles.SUB_DENSITY_07[0.0]], rtol=1e-6)
    assert subordination_oracle(0.3, 1.0, 1.0, np.array([1.0]))[0] == pytest.approx(oracles.SUB_DENSITY_03[1.0],
                                                                                  rel=1e-6)
    assert oracles.subordinated_density(0.7, 1.0, 1.0, 0.5) == pytest.approx(oracles.SUB_DENSITY_07[0.5], rel=1e-8)


def test_oracle_refuses_near_classical_order():
    with pytest.raises(DomainError):
        subordination_oracle(0.99, 1.0, 1.0, np.array([0.0]))


def test_point_mass_split():
    x = np.linspace(0, 1, 11)
    p = point_mass(x, 0.25)
    assert p.sum() * 0.1 == pytest.approx(1.0)
    assert p[2] == pytest.approx(5.0) and p[3] == pytest.approx(5.0)
    with pytest.raises(DomainError):
        point_mass(x, 2.0)


def test_solution_close_to_oracle(half_solution):
    y = GRID.x
    exact = subordination_oracle(0.5, 1.0, 1.0, y)
    l1 = np.abs(half_solution.values[:, -1] - exact).sum() * GRID.dx
    assert l1 <= 1e-3


def test_solution_symmetric_and_normalised(half_solution):
    p = half_solution.values
    np.testing.assert_allclose(p, p[::-1], rtol=0, atol=1e-10 * p.max())
    for j in (1, 500, 1000):
        assert half_solution.slice_mass(j) + half_solution.meta["leakage"][j] == pytest.approx(1.0, abs=1e-10)
    assert half_solution.values.min() >= 0


def test_variance_matches_mean_operational_time(half_solution):
    mean, var, mass = solution_moments(half_solution, 1.0)
    assert mean == pytest.approx(0.0, abs=1e-12)
    assert var == pytest.approx(oracles.INV_GAMMA_1_5, rel=0.02)
    assert mass + half_solution.meta["leakage"][-1] == pytest.approx(1.0, abs=1e-10)
    assert mass == pytest.approx(1.0, abs=1e-6)


def test_moments_rejected_at_injection(half_solution):
    with pytest.raises(DomainError):
        solution_moments(half_solution, 0.0)
    with pytest.raises(DomainError):
        solution_moments(half_solution, 0.00037)


def test_slice_cdf_is_a_cdf(half_solution):
    F = slice_cdf(half_solution, 1.0)
    v = np.linspace(-12, 12, 500)
    c = F(v)
    assert c[0] == 0.0 and c[-1] == pytest.approx(1.0)
    assert np.all(np.diff(c) >= 0)
    assert F(0.0) == pytest.approx(0.5, abs=1e-12)


def test_near_classical_order_is_gaussian():
    grid = SpaceTimeGrid(-8.0, 8.0, 401, 0.0, 1.0, 2001)
    sol = solve_fpe(subdiffusion_preset(0.99), 0.0, 0.0, grid)
    exact = oracles.heat_kernel(grid.x, 1.0)
    assert np.abs(sol.values[:, -1] - exact).sum() * grid.dx <= 1e-2


def test_drift_shifts_mean():
    grid = SpaceTimeGrid(-8.0, 8.0, 321, 0.0, 1.0, 501)
    sol = solve_fpe(subdiffusion_preset(0.5, drift=0.5), 0.0, 0.0, grid)
    mean, _, _ = solution_moments(sol, 1.0)
    # E[X(1)] = b E[E(1)]
    assert mean == pytest.approx(0.5 * oracles.INV_GAMMA_1_5, rel=0.02)


def test_injection_later_than_window_start():
    grid = SpaceTimeGrid(-8.0, 8.0, 161, 0.0, 2.0, 401)
    sol = solve_fpe(subdiffusion_preset(0.5), 1.0, 1.0, grid)
    j = grid.t_index(1.0)
    assert not sol.values[:, :j].any()
    ref = solve_fpe(subdiffusion_preset(0.5), 1.0, 0.0, SpaceTimeGrid(-8.0, 8.0, 161, 0.0, 1.0, 201))
    np.testing.assert_allclose(sol.values[:, -1], ref.values[:, -1], rtol=1e-12, atol=1e-14)


def test_initial_density_input():
    grid = SpaceTimeGrid(-6.0, 6.0, 121, 0.0, 0.5, 101)
    mu = oracles.heat_kernel(grid.x, 0.5)
    sol = solve_fpe(subdiffusion_preset(0.6), mu, 0.0, grid)
    np.testing.assert_array_equal(sol.values[:, 0], mu)
    with pytest.raises(DomainError):
        solve_fpe(subdiffusion_preset(0.6), -mu, 0.0, grid)
    with pytest.raises(ConfigurationError):
        solve_fpe(subdiffusion_preset(0.6), mu[:-1], 0.0, grid)


def test_zero_initial_measure_stays_zero():
    grid = SpaceTimeGrid(-6.0, 6.0, 61, 0.0, 0.5, 51)
    sol = solve_fpe(subdiffusion_preset(0.6), np.zeros(61), 0.0, grid)
    assert not sol.values.any()


def test_levy_walk_is_unsupported():
    with pytest.raises(UnsupportedModelError, match="Monte Carlo"):
        solve_fpe(levy_walk_preset(0.5), 0.0, 0.0, GRID)


def test_unknown_scheme_and_bad_injection():
    with pytest.raises(ConfigurationError):
        solve_fpe(subdiffusion_preset(0.5), 0.0, 0.0, GRID, scheme="crank")
    with pytest.raises(ConfigurationError):
        solve_fpe(subdiffusion_preset(0.5), 0.0, 1.0, GRID)
    with pytest.raises(ConfigurationError):
        solve_fpe(subdiffusion_preset(0.5), 0.0, 0.00037, GRID)


def test_grunwald_scheme_agrees_roughly():
    grid = SpaceTimeGrid(-10.0, 10.0, 201, 0.0, 1.0, 1001)
    a = solve_fpe(subdiffusion_preset(0.5), 0.0, 0.0, grid, scheme="grunwald")
    exact = subordination_oracle(0.5, 1.0, 1.0, grid.x)
    assert np.abs(a.values[:, -1] - exact).sum() * grid.dx <= 5e-2


def test_grunwald_stability_error_suggests_step():
    grid = SpaceTimeGrid(-2.0, 2.0, 401, 0.0, 1.0, 11)
    with pytest.raises(StabilityError) as info:
        solve_fpe(subdiffusion_preset(0.5, drift=3.0), 0.0, 0.0, grid, scheme="grunwald")
    assert 0 < info.value.suggested_dt < 0.1


def test_leakage_warning_on_small_domain():
    grid = SpaceTimeGrid(-1.0, 1.0, 41, 0.0, 1.0, 201)
    with pytest.warns(LeakageWarning):
        sol = solve_fpe(subdiffusion_preset(0.5), 0.0, 0.0, grid)
    assert sol.meta["leakage"][-1] > 1e-4
    assert sol.slice_mass(200) + sol.meta["leakage"][-1] == pytest.approx(1.0, abs=1e-10)


def test_variable_order_runs_and_conserves_mass():
    grid = SpaceTimeGrid(-8.0, 8.0, 161, 0.0, 1.0, 201)
    with warnings.catch_warnings():
        warnings.simplefilter("error", LeakageWarning)
        sol = solve_fpe(variable_order_preset(Tanh(0.5, 0.3, 0.0, 1.0)), 0.0, 0.0, grid)
    assert sol.slice_mass(200) == pytest.approx(1.0, abs=1e-4)
    assert sol.values.min() >= 0
    # walkers are held longer where beta is smaller (x < 0), so mass drifts there
    p = sol.values[:, -1]
    assert p[grid.x < 0].sum() > p[grid.x > 0].sum()


def test_refinement_decreases_error():
    errs = []
    for nx, nt in ((101, 251), (201, 501), (401, 1001)):
        grid = SpaceTimeGrid(-10.0, 10.0, nx, 0.0, 1.0, nt)
        sol = solve_fpe(subdiffusion_preset(0.5), 0.0, 0.0, grid)
        errs.append(np.abs(sol.values[:, -1] - subordination_oracle(0.5, 1.0, 1.0, grid.x)).sum() * grid.dx)
    assert errs[0] > errs[1] > errs[2]
    assert math.log2(errs[0] / errs[2]) / 2 > 1.5

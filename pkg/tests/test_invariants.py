"""Randomised invariant suites; the hypothesis profile in conftest runs 100 cases each."""

import math

import numpy as np
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import gammaln

from ctrwkit import (
    GridField,
    SpaceTimeGrid,
    Tanh,
    bump,
    gl_weights,
    inverse_time_change,
    levy_walk_preset,
    psi_apply,
    sample_pair_path,
    solve_backward,
    solve_fpe,
    subdiffusion_preset,
    variable_order_preset,
)
from ctrwkit.model import stable_tail_integral

orders = st.floats(0.05, 0.95)
seeds = st.integers(0, 2**32 - 1)


@given(beta=orders, n=st.integers(1, 400))
def test_gl_weight_properties(beta, n):
    w = gl_weights(beta, n)
    assert w[0] == 1.0
    assert np.all(w[1:] < 0)
    # |g_k| decreases and partial sums equal binom(n - beta, n) > 0
    assert np.all(np.diff(np.abs(w[1:])) <= 0)
    partial = np.cumsum(w)
    assert np.all(partial > 0) and np.all(np.diff(partial) < 0)
    exact = math.exp(gammaln(n + 1 - beta) - gammaln(1 - beta) - gammaln(n + 1))
    assert math.isclose(partial[-1], exact, rel_tol=1e-9)


@given(beta=orders, seed=seeds, nt=st.integers(5, 120))
def test_psi_positive_and_bounded(beta, seed, nt):
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, nt)
    x = np.linspace(-1.0, 1.0, 4)
    h = rng.random((4, nt))
    h[:, -1] = 0.0
    out = psi_apply(GridField(x, t, h), subdiffusion_preset(beta)).values
    assert np.all(out >= 0)
    bound = h.max() * stable_tail_integral(beta, 1.0 - t)
    assert np.all(out <= bound[None, :] * (1 + 1e-12) + 1e-15)


@given(beta=orders, drift=st.floats(-0.8, 0.8), seed=seeds)
def test_forward_mass_conservation(beta, drift, seed):
    rng = np.random.default_rng(seed)
    grid = SpaceTimeGrid(-3.0, 3.0, 41, 0.0, 1.0, 41)
    mu = rng.random(41) * (np.abs(grid.x) < 1.5)
    sol = solve_fpe(subdiffusion_preset(beta, drift=Tanh(0.0, drift, 0.0, 1.0)), mu, 0.0, grid, leak_tol=np.inf)
    total = sol.values.sum(axis=0) * grid.dx + sol.meta["leakage"]
    np.testing.assert_allclose(total, mu.sum() * grid.dx, rtol=1e-11)
    assert sol.values.min() >= 0


@given(beta=orders, seed=seeds, levy=st.booleans())
def test_clock_is_nondecreasing(beta, seed, levy):
    spec = levy_walk_preset(beta) if levy else subdiffusion_preset(beta)
    path = sample_pair_path(spec, 0.0, 0.5, 0.3, dr=1e-2, rng=np.random.default_rng(seed))
    assert path.D[0] == 0.5
    assert np.all(np.diff(path.D) >= 0)
    # operational time never decreases; paired jumps repeat the r of the node before
    assert np.all(np.diff(path.r) >= 0)
    np.testing.assert_allclose(np.unique(path.r), np.arange(31) * 1e-2, atol=1e-15)


@given(beta=orders, seed=seeds, u=st.floats(0.0, 0.999))
def test_inverse_time_sandwich(beta, seed, u):
    path = sample_pair_path(subdiffusion_preset(beta), 0.0, 0.0, 0.5, dr=1e-2, rng=np.random.default_rng(seed))
    t = u * path.D[-1]
    lo, hi = path.sandwich(t)
    assert lo <= t <= hi
    e = inverse_time_change(path, t)
    assert 0.0 <= e <= path.r[-1]
    assert inverse_time_change(path, 0.5 * t) <= e


@given(seed=seeds, start=st.floats(0.1, 1.0), width=st.floats(0.1, 0.6), variable=st.booleans(),
       beta=st.floats(0.2, 0.8))
def test_backward_maximum_principle(seed, start, width, variable, beta):
    rng = np.random.default_rng(seed)
    grid = SpaceTimeGrid(-3.0, 3.0, 31, 0.0, 2.0, 81)
    spec = variable_order_preset(Tanh(0.5, 0.3, 0.0, 1.0)) if variable else subdiffusion_preset(beta, drift=0.3)
    f = rng.random(31)
    v = solve_backward(spec, f, bump(start, width), grid)
    assert v.values.min() >= 0
    # sup v <= sup f * int g, with the integral taken under the solver's own rule
    assert v.values.max() <= f.max() * v.g_integral_above.max() * (1 + 1e-12)

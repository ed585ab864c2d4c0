import math

import numpy as np
import pytest

from ctrwkit import (
    ConfigurationError,
    HorizonError,
    ctrw_limit_value,
    drift_clock_spec,
    inverse_time_change,
    levy_walk_preset,
    octrw_limit_value,
    sample_pair_path,
    sample_stable_increment,
    simulate_limit,
    small_jump_mean,
    stable_variate,
    subdiffusion_preset,
)
from ctrwkit._probes import PAIRED
from ctrwkit.limit_sampler import _Walker
from ctrwkit.model import TemporalTail
from scipy import integrate, stats

import oracles


def test_zero_span_gives_zero(rng):
    assert sample_stable_increment(0.5, 0.0, rng) == 0.0
    np.testing.assert_array_equal(sample_stable_increment(0.5, 0.0, rng, 4), np.zeros(4))


def test_negative_span_rejected(rng):
    with pytest.raises(ConfigurationError):
        sample_stable_increment(0.5, -1.0, rng)


def test_stable_laplace_transform(rng):
    s = stable_variate(0.5, rng, 100_000)
    assert np.mean(np.exp(-s)) == pytest.approx(math.exp(-1), abs=0.01)


@pytest.mark.parametrize("beta", [0.3, 0.7, 0.95])
def test_stable_laplace_other_orders(beta, rng):
    s = stable_variate(beta, rng, 100_000)
    for lam in (0.5, 2.0):
        assert np.mean(np.exp(-lam * s)) == pytest.approx(math.exp(-(lam**beta)), abs=0.01)


def test_stable_self_similarity(rng):
    a = sample_stable_increment(0.5, 1.0, rng, 100_000)
    b = sample_stable_increment(0.5, 2.0, rng, 100_000)
    assert np.median(b) / np.median(a) == pytest.approx(4.0, rel=0.1)


def test_stable_half_matches_levy_law(rng):
    # order 1/2 with E exp(-lam S) = exp(-sqrt(lam)) is Levy with scale 1/2
    s = stable_variate(0.5, rng, 50_000)
    d = stats.kstest(s, stats.levy(scale=0.5).cdf).statistic
    assert d < 1.63 / math.sqrt(s.size)


def test_order_near_one_is_finite(rng):
    s = stable_variate(0.999, rng, 10_000)
    assert np.all(np.isfinite(s)) and np.all(s > 0)
    assert np.median(s) == pytest.approx(1.0, abs=0.05)


def test_spatial_component_is_brownian():
    # no waiting-time jumps: A is plain Brownian motion in operational time
    spec = drift_clock_spec(gamma=1.0, drift=0.0, diffusion=1.0)
    path = sample_pair_path(spec, 0.0, 0.0, 2.0, dr=0.02, rng=np.random.default_rng(0))
    assert path.A.shape == (101, 1)
    walker = _Walker(spec, 0.02)
    rng = np.random.default_rng(1)
    A, D = np.zeros((10_000, 1)), np.zeros(10_000)
    for _ in range(100):
        A, D = walker.step(A, D, rng, lambda *a: None)
    ends = A[:, 0]
    se = 2.0 * math.sqrt(2.0 / ends.size)
    assert ends.var() == pytest.approx(2.0, abs=3 * se)


def _clock_run(spec, n, r_max, dr, seed, t_cross=None):
    """Vectorised ``(D_{r_max}, E(t_cross))`` for ``n`` independent paths."""
    walker = _Walker(spec, dr)
    rng = np.random.default_rng(seed)
    A = np.zeros((n, 1))
    D = np.zeros(n)
    E = np.full(n, np.nan)
    steps = int(round(r_max / dr))
    for k in range(steps):
        A, D1 = walker.step(A, D, rng, lambda *a: None)
        if t_cross is not None:
            hit = (D <= t_cross) & (D1 > t_cross)
            E[hit] = (k + 1) * dr
        D = D1
    return D, E


def test_clock_laplace_transform():
    d, _ = _clock_run(subdiffusion_preset(0.5), 100_000, 1.0, 0.05, 5)
    assert np.mean(np.exp(-d)) == pytest.approx(math.exp(-1), abs=0.01)


def test_unit_clock_inverse_is_identity():
    spec = drift_clock_spec(gamma=1.0)
    path = sample_pair_path(spec, 0.0, 2.0, 5.0, dr=0.01, rng=np.random.default_rng(0))
    for t in (2.0, 2.5, 3.33, 6.9):
        assert inverse_time_change(path, t) == pytest.approx(t - 2.0, abs=1e-12)


def test_inverse_before_first_node_is_zero():
    spec = drift_clock_spec(gamma=1.0)
    path = sample_pair_path(spec, 0.0, 2.0, 1.0, dr=0.01, rng=np.random.default_rng(0))
    assert inverse_time_change(path, 1.0) == 0.0


def test_horizon_error_beyond_clock():
    spec = subdiffusion_preset(0.5)
    path = sample_pair_path(spec, 0.0, 0.0, 0.01, dr=0.01, rng=np.random.default_rng(1))
    with pytest.raises(HorizonError):
        inverse_time_change(path, path.D[-1] + 1.0)


def test_node_limit_rejected():
    with pytest.raises(ConfigurationError):
        sample_pair_path(subdiffusion_preset(0.5), 0.0, 0.0, 1e3, dr=1e-6)


def test_uncoupled_x_equals_y():
    spec = subdiffusion_preset(0.5)
    path = sample_pair_path(spec, 0.0, 0.0, 3.0, dr=1e-3, rng=np.random.default_rng(2))
    for t in np.linspace(0.01, min(path.D[-1], 5.0) * 0.99, 50):
        assert ctrw_limit_value(path, t) == octrw_limit_value(path, t)


def test_levy_walk_cone_and_straddle():
    spec = levy_walk_preset(0.5)
    rng = np.random.default_rng(4)
    checked = 0
    for _ in range(20):
        path = sample_pair_path(spec, 0.0, 0.0, 2.0, dr=1e-2, rng=rng)
        for t in np.linspace(0.0, path.D[-1] * 0.999, 200):
            x = ctrw_limit_value(path, t)
            assert abs(x) <= t + 1e-12
        for i in path.jump_log[:10]:
            t = 0.5 * (path.D[i - 1] + path.D[i])
            if inverse_time_change(path, t) == path.r[i] and path._crossing(t) == i:
                w = path.D[i] - path.D[i - 1]
                assert octrw_limit_value(path, t) - ctrw_limit_value(path, t) == pytest.approx(
                    path.A[i, 0] - path.A[i - 1, 0])
                assert abs(path.A[i, 0] - path.A[i - 1, 0]) == pytest.approx(w, rel=1e-9)
                checked += 1
    assert checked > 0


def test_levy_walk_total_variation_bound():
    spec = levy_walk_preset(0.5)
    path = sample_pair_path(spec, 0.0, 0.0, 3.0, dr=1e-2, rng=np.random.default_rng(6))
    err = abs(path.total_variation() - (path.D[-1] - 0.0))
    assert err <= path.meta["cutoff_error_bound"] + 1e-9


def test_small_jump_mean_by_quadrature():
    beta, delta = 0.6, 0.01
    h = lambda w: beta * w ** (-beta - 1) / math.gamma(1 - beta)  # noqa: E731
    assert small_jump_mean(beta, delta) == pytest.approx(integrate.quad(lambda w: w * h(w), 0, delta)[0], rel=1e-8)


def test_sandwich_holds():
    spec = subdiffusion_preset(0.5)
    path = sample_pair_path(spec, 0.0, 0.0, 2.0, dr=1e-3, rng=np.random.default_rng(8))
    probes = np.sort(np.random.default_rng(9).uniform(0, path.D[-1] * 0.999, 100))
    prev = -1.0
    for t in probes:
        lo, hi = path.sandwich(t)
        assert lo <= t <= hi
        u = inverse_time_change(path, t)
        assert u >= prev
        prev = u


def test_mean_operational_time():
    _, e = _clock_run(subdiffusion_preset(0.5), 50_000, 12.0, 1e-2, 10, t_cross=1.0)
    assert np.isnan(e).mean() < 1e-3
    oracle = oracles.mean_operational_time(0.5, 1.0)
    assert oracle == pytest.approx(oracles.INV_GAMMA_1_5, rel=1e-12)
    assert np.nanmean(e) == pytest.approx(oracle, rel=0.03)


def test_ensemble_deterministic_and_worker_free():
    spec = subdiffusion_preset(0.5)
    a = simulate_limit(spec, 0.0, 0.0, [0.5, 1.0], 3000, seed=1, dr=1e-2, block_size=1000, workers=1)
    b = simulate_limit(spec, 0.0, 0.0, [0.5, 1.0], 3000, seed=1, dr=1e-2, block_size=1000, workers=2)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.y, b.y)


def test_probe_times_must_follow_start():
    with pytest.raises(ConfigurationError):
        simulate_limit(subdiffusion_preset(0.5), 0.0, 1.0, [0.5], 10, seed=0)


def test_custom_tail_not_sampled():
    spec = drift_clock_spec(gamma=0.0, tail=TemporalTail.custom([0.5, 1.0], [1.0, 0.0]))
    with pytest.raises(Exception):
        sample_pair_path(spec, 0.0, 0.0, 1.0, dr=0.1)


def test_paired_kind_only_for_coupled():
    path = sample_pair_path(subdiffusion_preset(0.5), 0.0, 0.0, 1.0, dr=1e-2, rng=np.random.default_rng(0))
    assert not np.any(path.kind == PAIRED)

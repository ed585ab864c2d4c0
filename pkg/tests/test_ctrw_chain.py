import math

import numpy as np
import pytest

from ctrwkit import (
    DomainError,
    HorizonError,
    chain_ensemble,
    evaluate_ctrw,
    levy_walk_preset,
    sample_chain,
    sample_waiting_time,
    step_chain,
    subdiffusion_preset,
)
from ctrwkit.ctrw_chain import CtrwTrajectory

import oracles


def test_waiting_time_cutoff_at_unit_uniform():
    for c, beta in [(1.0, 0.5), (10.0, 0.3), (1000.0, 0.8)]:
        expected = (math.gamma(1 - beta) * c) ** (-1 / beta)
        assert sample_waiting_time(c, beta, 1.0) == pytest.approx(expected, rel=1e-14)


def test_waiting_time_inverse_value():
    assert sample_waiting_time(1.0, 0.5, 0.5) == pytest.approx(oracles.WAIT_C1_B05_U05, rel=1e-14)


def test_waiting_time_diverges_near_zero():
    vals = [sample_waiting_time(1.0, 0.5, u) for u in (1e-2, 1e-4, 1e-8)]
    assert vals[0] < vals[1] < vals[2] and vals[2] > 1e15


def test_waiting_time_rejects_zero_uniform():
    with pytest.raises(DomainError):
        sample_waiting_time(1.0, 0.5, 0.0)


def test_waiting_time_tail_is_exact(rng):
    c, beta = 5.0, 0.6
    w = sample_waiting_time(c, beta, 1.0 - rng.random(200_000))
    for q in (0.5, 2.0, 10.0):
        expected = min(1.0, q**-beta / math.gamma(1 - beta) / c)
        assert np.mean(w > q) == pytest.approx(expected, abs=4 * math.sqrt(expected * (1 - expected) / w.size) + 1e-12)


def test_unbiased_step_is_fair(rng):
    spec = subdiffusion_preset(0.5)
    right = 0
    n = 20_000
    for _ in range(n):
        x, _ = step_chain(spec, 100.0, (0.0, 0.0), rng)
        right += x > 0
    assert abs(right / n - 0.5) < 4 * 0.5 / math.sqrt(n)


def test_biased_step_frequency(rng):
    # c = 100 gives dx = 0.1, so P(right) - P(left) = 0.1
    spec = subdiffusion_preset(0.5, drift=1.0)
    chain = sample_chain(spec, 100.0, 0.0, 0.0, rng, n_steps=40_000)
    d = np.diff(chain.positions[:, 0])
    np.testing.assert_allclose(np.abs(d), 0.1, rtol=1e-12)
    bias = np.mean(d > 0) - np.mean(d < 0)
    assert bias == pytest.approx(0.1, abs=4 / math.sqrt(d.size))


def test_levy_walk_jump_equals_wait(rng):
    spec = levy_walk_preset(0.5)
    chain = sample_chain(spec, 50.0, 0.0, 0.0, rng, n_steps=2000)
    dx = np.abs(np.diff(chain.positions[:, 0]))
    ds = np.diff(chain.times)
    scale = np.abs(chain.positions).max() + chain.times[-1]
    np.testing.assert_allclose(dx, ds, rtol=0, atol=1e-13 * scale)
    assert chain.times[-1] - chain.times[0] == pytest.approx(dx.sum(), rel=1e-10)


def test_chain_times_increase(rng):
    spec = subdiffusion_preset(0.7)
    chain = sample_chain(spec, 10.0, 0.0, 1.0, rng, horizon=5.0)
    assert np.all(np.diff(chain.times) > 0)
    assert chain.times[0] == 1.0 and chain.positions[0, 0] == 0.0
    assert chain.times[-1] > 5.0


def test_ctrw_evaluation_rules(rng):
    spec = subdiffusion_preset(0.5)
    chain = sample_chain(spec, 10.0, 0.25, 0.0, rng, n_steps=50)
    traj = CtrwTrajectory(chain)
    d1 = chain.times[1]
    assert evaluate_ctrw(traj, 0.0) == 0.25
    assert evaluate_ctrw(traj, d1 - 1e-12 * max(d1, 1)) == 0.25
    assert evaluate_ctrw(traj, d1) == chain.positions[1, 0]
    # right-continuous and piecewise constant
    for n in range(1, 20):
        dn = chain.times[n]
        assert traj(dn) == chain.positions[n, 0]
        mid = 0.5 * (dn + chain.times[n + 1])
        assert traj(mid) == chain.positions[n, 0]


def test_ctrw_beyond_sample_raises(rng):
    spec = subdiffusion_preset(0.5)
    chain = sample_chain(spec, 10.0, 0.0, 0.0, rng, n_steps=5)
    with pytest.raises(HorizonError):
        evaluate_ctrw(CtrwTrajectory(chain), chain.times[-1] + 1.0)
    with pytest.raises(DomainError):
        evaluate_ctrw(CtrwTrajectory(chain), -1.0)


def test_ensemble_matches_single_chain_statistics():
    spec = subdiffusion_preset(0.5)
    x, dropped = chain_ensemble(spec, 100.0, 0.0, 0.0, [1.0], 4000, seed=3)
    assert dropped == 0
    assert x.shape == (4000, 1, 1)
    # X^c(1) lives on the lattice of spacing c^-1/2
    k = x[:, 0, 0] / 0.1
    np.testing.assert_allclose(k, np.round(k), atol=1e-9)


def test_ensemble_independent_of_worker_count():
    spec = subdiffusion_preset(0.5)
    a, _ = chain_ensemble(spec, 50.0, 0.0, 0.0, [0.5, 1.0], 3000, seed=9, block_size=1000, workers=1)
    b, _ = chain_ensemble(spec, 50.0, 0.0, 0.0, [0.5, 1.0], 3000, seed=9, block_size=1000, workers=2)
    np.testing.assert_array_equal(a, b)


def test_ensemble_drops_are_fatal():
    spec = subdiffusion_preset(0.5)
    with pytest.raises(HorizonError):
        chain_ensemble(spec, 1e4, 0.0, 0.0, [1.0], 200, seed=1, max_steps=3, retries=0)

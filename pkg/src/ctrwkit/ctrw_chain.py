"""Pre-limit CTRW chains ``(A^c(n), D^c(n))`` and their CTRW trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from ._probes import PAIRED, ProbeRecorder
from .errors import DomainError, HorizonError, UnsupportedModelError
from .model import GaussianJumps, LatticeJumps, ModelSpec, as_points
from .parallel import DEFAULT_BLOCK, check_dropped, run_blocks

__all__ = [
    "sample_waiting_time",
    "step_chain",
    "DiscreteChain",
    "CtrwTrajectory",
    "sample_chain",
    "evaluate_ctrw",
    "chain_ensemble",
]


def sample_waiting_time(c, beta, u):
    """Invert the pre-limit tail ``P(W > w) = 1 ^ w**-beta / (Gamma(1-beta) c)``.

    ``u`` in ``(0, 1]`` maps to ``W = (Gamma(1 - beta) c u) ** (-1/beta)``;
    ``u = 1`` gives the support cutoff.
    """
    c = np.asarray(c, dtype=float)
    beta = np.asarray(beta, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(c <= 0):
        raise DomainError("scale c must be positive")
    if np.any((beta <= 0) | (beta >= 1)):
        raise DomainError("beta must lie in (0, 1)")
    if np.any((u <= 0) | (u > 1)):
        raise DomainError("uniform variate must lie in (0, 1]; u = 0 is an infinite wait")
    out = (gamma_fn(1.0 - beta) * c * u) ** (-1.0 / beta)
    return float(out) if out.ndim == 0 else out


def _lattice_dx(spec: ModelSpec, c: float) -> float:
    return spec.spatial_jumps.spacing(c)


def _step_arrays(spec: ModelSpec, c: float, x: np.ndarray, s: np.ndarray, rng: np.random.Generator):
    """One chain transition for each row of ``x`` (shape ``(n, d)``) and ``s``."""
    if not spec.tail.is_stable_family:
        raise UnsupportedModelError("pre-limit chains are defined for stable waiting-time tails")
    n = s.shape[0]
    u = 1.0 - rng.random(n)
    w = sample_waiting_time(c, spec.tail.order(x), u)
    s_new = s + w
    if spec.coupled:
        theta = spec.coupling.sample(rng, n)
        x_new = x + w[:, None] * theta + spec.coeffs.b(x, s) / c
    elif isinstance(spec.spatial_jumps, LatticeJumps):
        if spec.dim != 1:
            raise UnsupportedModelError("lattice jumps are one-dimensional")
        dx = _lattice_dx(spec, c)
        _, r = spec.lattice_probabilities(x, s_new, dx)
        right = rng.random(n) < r
        x_new = x + np.where(right, dx, -dx)[:, None]
    elif isinstance(spec.spatial_jumps, GaussianJumps):
        a = spec.coeffs.a(x, s) / c
        z = rng.standard_normal(x.shape)
        x_new = x + spec.coeffs.b(x, s) / c + np.einsum("nij,nj->ni", np.linalg.cholesky(a + 0.0), z)
    else:
        raise UnsupportedModelError(f"model {spec.name!r} has no pre-limit spatial jump law")
    return x_new, s_new


def step_chain(spec: ModelSpec, c: float, state, rng: np.random.Generator):
    """Advance one chain state ``(x, s)`` by a single wait-then-jump transition."""
    x, s = state
    x = as_points(x, spec.dim).reshape(1, spec.dim)
    x_new, s_new = _step_arrays(spec, c, x, np.array([float(s)]), rng)
    x_new = x_new[0]
    return (float(x_new[0]) if spec.dim == 1 else x_new), float(s_new[0])


@dataclass
class DiscreteChain:
    """Sampled prefix ``(A_n, D_n)_{n <= N}`` of a pre-limit chain."""

    spec: ModelSpec
    scale: float
    origin: tuple
    positions: np.ndarray
    times: np.ndarray
    block_size: int = 4096

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    def extend(self, rng: np.random.Generator, n_steps: int | None = None) -> None:
        n_steps = self.block_size if n_steps is None else int(n_steps)
        xs = np.empty((n_steps, self.spec.dim))
        ss = np.empty(n_steps)
        x = self.positions[-1:].copy()
        s = self.times[-1:].copy()
        for k in range(n_steps):
            x, s = _step_arrays(self.spec, self.scale, x, s, rng)
            xs[k], ss[k] = x[0], s[0]
        self.positions = np.concatenate([self.positions, xs])
        self.times = np.concatenate([self.times, ss])

    def extend_until(self, t: float, rng: np.random.Generator, max_steps: int = 10**7) -> None:
        """Sample further blocks until the last jump time exceeds ``t``."""
        while self.times[-1] <= t:
            if self.n_steps >= max_steps:
                raise HorizonError(f"chain did not pass t={t} within {max_steps} steps")
            self.extend(rng)


def sample_chain(spec: ModelSpec, c: float, x0, s0: float, rng: np.random.Generator, *,
                 horizon: float | None = None, n_steps: int | None = None,
                 block_size: int = 4096) -> DiscreteChain:
    x0 = as_points(x0, spec.dim).reshape(1, spec.dim)
    chain = DiscreteChain(spec, float(c), (x0[0].copy(), float(s0)), x0.copy(), np.array([float(s0)]), block_size)
    if n_steps is not None:
        chain.extend(rng, n_steps)
    if horizon is not None:
        chain.extend_until(horizon, rng)
    return chain


@dataclass
class CtrwTrajectory:
    """``X^c(t) = A_n`` for ``D_n <= t < D_{n+1}``: the walker waits, then jumps."""

    chain: DiscreteChain
    meta: dict = field(default_factory=dict)

    def __call__(self, t: float):
        return evaluate_ctrw(self, t)


def evaluate_ctrw(traj: CtrwTrajectory, t: float):
    chain = traj.chain
    s0 = chain.origin[1]
    if t < s0:
        raise DomainError(f"t={t} precedes the chain origin s0={s0}")
    n = int(np.searchsorted(chain.times, t, side="right")) - 1
    if n >= chain.n_steps:
        raise HorizonError(f"t={t} is beyond the last sampled jump time {chain.times[-1]:.6g}")
    a = chain.positions[n]
    return float(a[0]) if chain.spec.dim == 1 else a.copy()


def _chain_block(n: int, rng: np.random.Generator, spec: ModelSpec, c: float, x0, s0: float,
                 times: np.ndarray, max_steps: int, retries: int):
    rec = ProbeRecorder(times, n, spec.dim)
    todo = np.arange(n)
    dropped = 0
    for attempt in range(retries + 1):
        rec.next[todo] = 0
        idx = todo
        x = np.broadcast_to(np.asarray(x0, dtype=float), (idx.size, spec.dim)).copy()
        s = np.full(idx.size, float(s0))
        for _ in range(max_steps):
            if idx.size == 0:
                break
            x1, s1 = _step_arrays(spec, c, x, s, rng)
            # the walker sits at the pre-jump site until D_{n+1}
            rec.record(PAIRED, idx, x, s, x1, s1)
            keep = ~rec.done(idx)
            idx, x, s = idx[keep], x1[keep], s1[keep]
        todo = idx
        if todo.size == 0:
            break
    if todo.size:
        rec.x[todo] = np.nan
        dropped = int(todo.size)
    return rec.x, dropped


def chain_ensemble(spec: ModelSpec, c: float, x0, s0: float, times, n_paths: int, *, seed: int,
                   stream: int = 0, block_size: int = DEFAULT_BLOCK, workers: int = 1,
                   max_steps: int = 10**6, retries: int = 3):
    """Positions ``X^c(t)`` at sorted probe ``times`` for ``n_paths`` independent chains.

    Returns ``(x, dropped)`` with ``x`` of shape ``(n_paths, len(times), d)``;
    paths that exhaust ``max_steps`` on every retry are NaN and counted.
    """
    times = np.asarray(times, dtype=float)
    x0 = as_points(x0, spec.dim).reshape(spec.dim)
    parts = run_blocks(_chain_block, n_paths, seed=seed, stream=stream, block_size=block_size,
                       workers=workers, args=(spec, c, x0, s0, times, max_steps, retries))
    dropped = sum(p[1] for p in parts)
    check_dropped(dropped, n_paths)
    return np.concatenate([p[0] for p in parts]), dropped

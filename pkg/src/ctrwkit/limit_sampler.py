"""Euler sampling of the limit pair ``(A_r, D_r)`` and of its time change.

Uncoupled models advance ``A`` by an Euler-Maruyama step and ``D`` by a
stable subordinator increment whose order is frozen at the step's starting
position.  The coupled Levy walk replaces waiting-time jumps below a cutoff
``delta`` by their mean and draws the remaining jumps as a compound Poisson
stream with paired spatial displacement ``w * theta``.

Path nodes carry a segment kind (see ``_probes``): across ``CONTINUOUS``
segments both components move linearly, at ``CLOCK_JUMP`` nodes only ``D``
jumps, at ``PAIRED`` nodes both jump.  This is what ``E(t)``, ``X(t)`` and
``Y(t)`` are evaluated against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn

from ._probes import CLOCK_JUMP, CONTINUOUS, PAIRED, ProbeRecorder
from .errors import ConfigurationError, HorizonError, UnsupportedModelError
from .model import ModelSpec, as_points, stable_tail
from .parallel import DEFAULT_BLOCK, check_dropped, run_blocks

__all__ = [
    "stable_variate",
    "sample_stable_increment",
    "SpaceTimePath",
    "sample_pair_path",
    "inverse_time_change",
    "ctrw_limit_value",
    "octrw_limit_value",
    "LimitEnsemble",
    "simulate_limit",
    "small_jump_mean",
]

MAX_NODES = 10**8


def stable_variate(beta, rng: np.random.Generator, size=None) -> np.ndarray:
    """Positive stable variates with ``E exp(-lam S) = exp(-lam**beta)``.

    Chambers-Mallows-Stuck (Kanter) transform, evaluated in log space so
    that orders close to one do not overflow.
    """
    beta = np.asarray(beta, dtype=float)
    if size is None:
        size = beta.shape
    theta = np.pi * (1.0 - rng.random(size))
    theta = np.clip(theta, 1e-300, np.pi * (1 - 1e-16))
    w = rng.standard_exponential(size)
    one_m = 1.0 - beta
    log_a = (np.log(np.sin(one_m * theta)) + beta / one_m * np.log(np.sin(beta * theta))
             - np.log(np.sin(theta)) / one_m)
    return np.exp(one_m / beta * (log_a - np.log(w)))


def sample_stable_increment(beta, dr: float, rng: np.random.Generator, size=None):
    """Subordinator increment over operational span ``dr``: ``dr**(1/beta) * S``."""
    if dr < 0:
        raise ConfigurationError("operational span must be nonnegative")
    if dr == 0:
        out = np.zeros(size if size is not None else np.shape(beta))
    else:
        out = dr ** (1.0 / np.asarray(beta, dtype=float)) * stable_variate(beta, rng, size)
    return float(out) if np.ndim(out) == 0 else out


def small_jump_mean(beta: float, delta: float) -> float:
    """``int_0^delta w h_beta(w) dw``, the mean clock advance from jumps below ``delta``."""
    return beta * delta ** (1.0 - beta) / ((1.0 - beta) * gamma_fn(1.0 - beta))


class _Walker:
    """Vectorised one-step update shared by the path and ensemble samplers."""

    def __init__(self, spec: ModelSpec, dr: float, cutoff: float | None = None):
        if dr <= 0:
            raise ConfigurationError("dr must be positive")
        self.spec = spec
        self.dr = float(dr)
        self.coupled = spec.coupled
        if self.coupled:
            beta = spec.tail.beta
            self.beta = beta
            self.delta = float(cutoff) if cutoff is not None else self.dr**2
            self.rate = float(stable_tail(beta, self.delta))
            self.m_delta = small_jump_mean(beta, self.delta)
            self.mean_dir = spec.coupling.mean_direction()
        else:
            if spec.tail.kind not in ("stable", "variable_stable", "none"):
                raise UnsupportedModelError("limit sampling supports stable or absent waiting-time tails")
            self.has_tail = spec.tail.kind != "none"
            a = spec.coeffs.constant_diffusion
            self.noiseless = a is not None and not a.any()
            self.chol = None if a is None or self.noiseless else np.linalg.cholesky(a)

    def step(self, A: np.ndarray, D: np.ndarray, rng: np.random.Generator, emit) -> tuple[np.ndarray, np.ndarray]:
        if self.coupled:
            return self._levy_step(A, D, rng, emit)
        spec, dr = self.spec, self.dr
        n = D.shape[0]
        b = spec.coeffs.b(A, D)
        dD = spec.coeffs.g(A, D) * dr
        if self.has_tail:
            beta = spec.tail.order(A)
            dD = dD + dr ** (1.0 / beta) * stable_variate(beta, rng, n)
        A1 = A + b * dr
        if not self.noiseless:
            z = rng.standard_normal(A.shape)
            if self.chol is not None:
                A1 += math.sqrt(dr) * z @ self.chol.T
            else:
                L = np.linalg.cholesky(spec.coeffs.a(A, D))
                A1 += math.sqrt(dr) * np.einsum("nij,nj->ni", L, z)
        D1 = D + dD
        emit(CLOCK_JUMP if self.has_tail else CONTINUOUS, np.arange(n), A, D, A1, D1)
        return A1, D1

    def _levy_step(self, A, D, rng, emit):
        spec, dr = self.spec, self.dr
        n = D.shape[0]
        A1 = A + (spec.coeffs.b(A, D) + self.m_delta * self.mean_dir) * dr
        D1 = D + self.m_delta * dr
        emit(CONTINUOUS, np.arange(n), A, D, A1, D1)
        counts = rng.poisson(self.rate * dr, n)
        for j in range(int(counts.max(initial=0))):
            rows = np.flatnonzero(counts > j)
            w = self.delta * (1.0 - rng.random(rows.size)) ** (-1.0 / self.beta)
            theta = spec.coupling.sample(rng, rows.size)
            a0, d0 = A1[rows], D1[rows]
            a1, d1 = a0 + w[:, None] * theta, d0 + w
            emit(PAIRED, rows, a0, d0, a1, d1)
            A1[rows], D1[rows] = a1, d1
        return A1, D1


@dataclass
class SpaceTimePath:
    """Sampled nodes ``(r_k, A_k, D_k)`` of the limit pair with segment kinds.

    ``kind[k]`` describes how the path reaches node ``k`` from node ``k-1``;
    paired jumps share their ``r`` with the preceding node.
    """

    dr: float
    r: np.ndarray
    A: np.ndarray
    D: np.ndarray
    kind: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def jump_log(self) -> np.ndarray:
        """Indices of nodes reached by a paired space-time jump."""
        return np.flatnonzero(self.kind == PAIRED)

    def _crossing(self, t: float) -> int:
        if t >= self.D[-1]:
            raise HorizonError(f"t={t} is beyond the sampled clock D(r_max)={self.D[-1]:.6g}")
        return int(np.searchsorted(self.D, t, side="right"))

    def sandwich(self, t: float) -> tuple[float, float]:
        """``(D(E(t)-), D(E(t)))``; both equal ``t`` inside a continuous stretch."""
        i = self._crossing(t)
        if i == 0:
            return self.D[0], self.D[0]
        if self.kind[i] == CONTINUOUS:
            return t, t
        return float(self.D[i - 1]), float(self.D[i])

    def total_variation(self) -> float:
        return float(np.abs(np.diff(self.A, axis=0)).sum())


def sample_pair_path(spec: ModelSpec, x0, s0: float, r_max: float, dr: float = 1e-3,
                     rng: np.random.Generator | None = None, *, cutoff: float | None = None) -> SpaceTimePath:
    """Sample ``(A_r, D_r)`` on ``[0, r_max]`` started from ``(x0, s0)``."""
    if r_max <= 0 or dr <= 0:
        raise ConfigurationError("r_max and dr must be positive")
    n_steps = int(math.ceil(r_max / dr - 1e-9))
    if n_steps > MAX_NODES:
        raise ConfigurationError(f"r_max/dr = {n_steps} steps exceeds the node limit {MAX_NODES}")
    rng = rng if rng is not None else np.random.default_rng()
    walker = _Walker(spec, dr, cutoff)
    A = as_points(x0, spec.dim).reshape(1, spec.dim).copy()
    D = np.array([float(s0)])
    rs, As, Ds, kinds = [0.0], [A[0].copy()], [D[0]], [CONTINUOUS]
    r_end = [0.0]

    # every node of a step, paired jumps included, sits at the end of the step
    def emit(kind, rows, a0, d0, a1, d1):
        rs.append(r_end[0])
        As.append(a1[0].copy())
        Ds.append(float(d1[0]))
        kinds.append(kind)

    for k in range(n_steps):
        r_end[0] = (k + 1) * dr
        A, D = walker.step(A, D, rng, emit)
    meta = {"spec": spec.name, "x0": np.asarray(x0).tolist(), "s0": float(s0), "r_max": n_steps * dr}
    if walker.coupled:
        meta.update(cutoff=walker.delta, cutoff_error_bound=walker.m_delta * n_steps * dr)
    return SpaceTimePath(dr, np.asarray(rs), np.asarray(As), np.asarray(Ds), np.asarray(kinds, dtype=np.int8), meta)


def inverse_time_change(path: SpaceTimePath, t: float) -> float:
    """``E(t) = inf{u : D_u > t}``."""
    i = path._crossing(t)
    if i == 0:
        return float(path.r[0])
    if path.kind[i] == CONTINUOUS:
        w = (t - path.D[i - 1]) / (path.D[i] - path.D[i - 1])
        return float(path.r[i - 1] + w * (path.r[i] - path.r[i - 1]))
    return float(path.r[i])


def _value(path: SpaceTimePath, t: float, octrw: bool):
    i = path._crossing(t)
    if i == 0:
        a = path.A[0]
    elif path.kind[i] == CONTINUOUS:
        w = (t - path.D[i - 1]) / (path.D[i] - path.D[i - 1])
        a = path.A[i - 1] + w * (path.A[i] - path.A[i - 1])
    elif path.kind[i] == PAIRED and not octrw:
        a = path.A[i - 1]
    else:
        a = path.A[i]
    return float(a[0]) if path.dim == 1 else a.copy()


def ctrw_limit_value(path: SpaceTimePath, t: float):
    """``X(t) = A(E(t)-)`` when ``D`` jumps across ``t`` at ``E(t)``, else ``A(E(t))``."""
    return _value(path, t, octrw=False)


def octrw_limit_value(path: SpaceTimePath, t: float):
    """``Y(t) = A(E(t))``: the overshooting walker already sits at the jump target."""
    return _value(path, t, octrw=True)


@dataclass
class LimitEnsemble:
    """``x[p, k]`` = ``X(times[k])`` on path ``p`` (``y`` likewise for ``Y``)."""

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray | None
    dropped: int
    meta: dict = field(default_factory=dict)


def _limit_block(n: int, rng: np.random.Generator, spec: ModelSpec, x0, s0: float, times: np.ndarray,
                 dr: float, cutoff, max_steps: int, octrw: bool, retries: int):
    walker = _Walker(spec, dr, cutoff)
    rec = ProbeRecorder(times, n, spec.dim, octrw=octrw)
    todo = np.arange(n)
    for attempt in range(retries + 1):
        rec.next[todo] = 0
        gidx = todo
        A = np.broadcast_to(np.asarray(x0, dtype=float), (gidx.size, spec.dim)).copy()
        D = np.full(gidx.size, float(s0))

        def emit(kind, rows, a0, d0, a1, d1):
            rec.record(kind, gidx[rows], a0, d0, a1, d1)

        for _ in range(max_steps):
            if gidx.size == 0:
                break
            A, D = walker.step(A, D, rng, emit)
            keep = ~rec.done(gidx)
            if not keep.all():
                gidx, A, D = gidx[keep], A[keep], D[keep]
        todo = gidx
        if todo.size == 0:
            break
    if todo.size:
        rec.x[todo] = np.nan
        if rec.y is not None:
            rec.y[todo] = np.nan
    return rec.x, rec.y, int(todo.size)


def simulate_limit(spec: ModelSpec, x0, s0: float, times, n_paths: int, *, seed: int, dr: float = 1e-3,
                   stream: int = 0, block_size: int = DEFAULT_BLOCK, workers: int = 1,
                   max_steps: int = 10**6, cutoff: float | None = None, octrw: bool = True,
                   retries: int = 3) -> LimitEnsemble:
    """Sample ``X`` (and ``Y``) at sorted probe ``times`` over ``n_paths`` limit paths."""
    times = np.asarray(times, dtype=float)
    if times.size == 0 or times[0] < s0:
        raise ConfigurationError("probe times must be nonempty and not precede s0")
    x0 = as_points(x0, spec.dim).reshape(spec.dim)
    parts = run_blocks(_limit_block, n_paths, seed=seed, stream=stream, block_size=block_size, workers=workers,
                       args=(spec, x0, s0, times, dr, cutoff, max_steps, octrw, retries))
    x = np.concatenate([p[0] for p in parts])
    y = np.concatenate([p[1] for p in parts]) if octrw else None
    dropped = sum(p[2] for p in parts)
    check_dropped(dropped, n_paths)
    meta = {"dr": dr, "seed": seed, "stream": stream, "block_size": block_size, "n_paths": n_paths}
    if spec.coupled:
        delta = cutoff if cutoff is not None else dr**2
        meta["cutoff"] = delta
    return LimitEnsemble(times, x, y, dropped, meta)

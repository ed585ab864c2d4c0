"""Statistics that tie Monte Carlo ensembles to the PDE solutions and to each other."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .ctrw_chain import chain_ensemble
from .errors import ConfigurationError, DomainError, HorizonWarning
from .forward_solver import slice_cdf
from .grids import GridMeasure
from .limit_sampler import _Walker, simulate_limit
from .model import ModelSpec, as_points
from .parallel import DEFAULT_BLOCK, run_blocks

__all__ = [
    "EmpiricalSample",
    "mc_law_estimate",
    "ks_distance",
    "ks_threshold",
    "PowerFit",
    "fit_power_exponent",
    "PotentialEstimate",
    "potential_estimate",
    "mc_pairing",
    "LawComparison",
    "compare_ctrw_octrw",
    "AggregationResult",
    "aggregation_test",
]


@dataclass
class EmpiricalSample:
    """Finite sample of scalar (or vector) values with optional weights."""

    values: np.ndarray
    weights: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.size == 0:
            raise DomainError("empty sample")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("sample contains non-finite values")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != self.values.shape[:1] or np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=1e-9):
                raise DomainError("weights must be nonnegative, one per value, and sum to 1")
            self.weights = w

    def __len__(self) -> int:
        return self.values.shape[0]

    def mean(self) -> float:
        return float(np.average(self.values, axis=0, weights=self.weights))

    def var(self) -> float:
        m = self.mean()
        return float(np.average((self.values - m) ** 2, axis=0, weights=self.weights))


def mc_law_estimate(spec: ModelSpec, x0, s0: float, t: float, n_paths: int, *, seed: int,
                    engine: str = "limit", c: float | None = None, dr: float = 1e-3, workers: int = 1,
                    octrw: bool = False, stream: int = 0, block_size: int = DEFAULT_BLOCK):
    """I.i.d. samples of ``X^c(t)`` (``engine="chain"``) or ``X(t)`` (``engine="limit"``).

    With ``octrw=True`` (limit engine) returns the pair ``(X, Y)`` of samples
    taken on the same paths.  One-dimensional models yield scalar samples.
    """
    if n_paths < 1:
        raise ConfigurationError("n_paths must be at least 1")
    prov = {"spec": spec.name, "t": t, "n_paths": n_paths, "seed": seed, "engine": engine}
    if engine == "chain":
        if c is None:
            raise ConfigurationError("chain engine needs a scale c")
        x, dropped = chain_ensemble(spec, c, x0, s0, [t], n_paths, seed=seed, stream=stream,
                                    workers=workers, block_size=block_size)
        prov.update(c=c, dropped=dropped)
        return EmpiricalSample(_finite(x[:, 0]), provenance=prov)
    if engine != "limit":
        raise ConfigurationError(f"unknown engine {engine!r}")
    ens = simulate_limit(spec, x0, s0, [t], n_paths, seed=seed, dr=dr, stream=stream, workers=workers,
                         octrw=octrw, block_size=block_size)
    prov.update(dr=dr, dropped=ens.dropped)
    xs = EmpiricalSample(_finite(ens.x[:, 0]), provenance=prov)
    if octrw:
        return xs, EmpiricalSample(_finite(ens.y[:, 0]), provenance=dict(prov, octrw=True))
    return xs


def _finite(x: np.ndarray) -> np.ndarray:
    keep = np.all(np.isfinite(x), axis=-1)
    x = x[keep]
    return x[:, 0] if x.shape[-1] == 1 else x


def _ecdf_pair(a: np.ndarray, wa, b: np.ndarray, wb) -> float:
    pts = np.union1d(a, b)
    out = []
    for vals, w in ((a, wa), (b, wb)):
        order = np.argsort(vals, kind="mergesort")
        sv = vals[order]
        cw = np.cumsum(w[order]) if w is not None else np.arange(1, sv.size + 1) / sv.size
        idx = np.searchsorted(sv, pts, side="right")
        out.append(np.where(idx > 0, cw[np.maximum(idx - 1, 0)], 0.0))
    return float(np.max(np.abs(out[0] - out[1])))


def ks_distance(sample, reference, *, t: float | None = None) -> float:
    """Sup-distance between the sample CDF and a reference law.

    ``reference`` may be another sample (two-sample statistic, ties
    handled exactly), a CDF callable, or a ``GridMeasure`` whose slice at
    ``t`` is used.
    """
    s = sample if isinstance(sample, EmpiricalSample) else EmpiricalSample(np.asarray(sample))
    if s.values.ndim != 1:
        raise ConfigurationError("KS distances are one-dimensional")
    if isinstance(reference, GridMeasure):
        if t is None:
            raise ConfigurationError("pass t to compare against a grid measure slice")
        reference = slice_cdf(reference, t)
    if callable(reference):
        order = np.argsort(s.values, kind="mergesort")
        v = s.values[order]
        w = np.full(v.size, 1.0 / v.size) if s.weights is None else s.weights[order]
        hi = np.cumsum(w)
        lo = hi - w
        F = np.asarray(reference(v), dtype=float)
        # ties: the empirical CDF jumps only at the last copy of a value
        last = np.r_[v[1:] != v[:-1], True]
        first = np.r_[True, v[1:] != v[:-1]]
        return float(max(np.max(np.abs(hi[last] - F[last])), np.max(np.abs(F[first] - lo[first]))))
    r = reference if isinstance(reference, EmpiricalSample) else EmpiricalSample(np.asarray(reference))
    return _ecdf_pair(s.values, s.weights, r.values, r.weights)


def ks_threshold(n: int, m: int | None = None, level: float = 0.99) -> float:
    """Asymptotic KS critical value: ``c/sqrt(n)`` or ``c sqrt((n+m)/(n m))``."""
    c = math.sqrt(-0.5 * math.log((1.0 - level) / 2.0))
    if m is None:
        return c / math.sqrt(n)
    return c * math.sqrt((n + m) / (n * m))


@dataclass
class PowerFit:
    slope: float
    stderr: float
    intercept: float


def fit_power_exponent(ts, values) -> PowerFit:
    """Least-squares slope of ``log values`` against ``log ts``."""
    ts = np.asarray(ts, dtype=float)
    values = np.asarray(values, dtype=float)
    if ts.size < 3 or ts.shape != values.shape:
        raise DomainError("need matching values at three or more times")
    if np.any(values <= 0) or np.any(ts <= 0):
        raise DomainError("power fits need positive times and values")
    res = stats.linregress(np.log(ts), np.log(values))
    return PowerFit(float(res.slope), float(res.stderr), float(res.intercept))


@dataclass
class PotentialEstimate:
    mean: float
    stderr: float
    uncleared: float
    n_paths: int


def _potential_block(n, rng, spec, f, x0, s0, r_max, dr, support_top):
    walker = _Walker(spec, dr)
    A = np.broadcast_to(x0, (n, spec.dim)).copy()
    D = np.full(n, float(s0))
    acc = np.zeros(n)
    alive = np.arange(n)
    steps = int(math.ceil(r_max / dr - 1e-9))
    for _ in range(steps):
        if alive.size == 0:
            break
        a, d = A[alive], D[alive]
        a1, d1 = walker.step(a, d, rng, lambda *args: None)
        # midpoint in space; in time only the continuous clock drift is spread over the step
        gval = np.asarray(spec.coeffs.g(a, d), dtype=float)
        if walker.coupled:
            d_mid = d + 0.5 * walker.m_delta * dr
            a_mid = a + 0.5 * (spec.coeffs.b(a, d) + walker.m_delta * walker.mean_dir) * dr
        else:
            d_mid = d + 0.5 * gval * dr
            a_mid = 0.5 * (a + a1)
        acc[alive] += np.asarray(f(a_mid, d_mid), dtype=float) * dr
        A[alive], D[alive] = a1, d1
        if support_top is not None:
            alive = alive[d1 <= support_top]
    uncleared = 0 if support_top is None else int(np.sum(D <= support_top))
    return acc, uncleared


def potential_estimate(spec: ModelSpec, f: Callable, x, s: float, n_paths: int, r_max: float, *, seed: int,
                       dr: float = 1e-3, support_top: float | None = None, workers: int = 1,
                       block_size: int = DEFAULT_BLOCK) -> PotentialEstimate:
    """Monte Carlo ``Uf(x, s) = E int_0^r_max f(A_r, D_r) dr``.

    ``f(a, d)`` takes positions ``(n, d)`` and clock values ``(n,)``.  With
    ``support_top`` set, paths stop once their clock passes it (``f`` must
    vanish above), and a ``HorizonWarning`` is issued when more than 1% of
    paths are still below it at ``r_max``.
    """
    x0 = as_points(x, spec.dim).reshape(spec.dim)
    parts = run_blocks(_potential_block, n_paths, seed=seed, block_size=block_size, workers=workers,
                       args=(spec, f, x0, s, r_max, dr, support_top))
    acc = np.concatenate([p[0] for p in parts])
    uncleared = sum(p[1] for p in parts) / n_paths
    if uncleared > 0.01:
        warnings.warn(f"{uncleared:.1%} of paths did not clear the support by r_max={r_max}", HorizonWarning,
                      stacklevel=2)
    se = float(acc.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else float("nan")
    return PotentialEstimate(float(acc.mean()), se, uncleared, n_paths)


def mc_pairing(spec: ModelSpec, f: Callable, g: Callable, x0, s0: float, probe_times, n_paths: int, *,
               seed: int, dr: float = 1e-3, octrw: bool = False, workers: int = 1) -> tuple[float, float]:
    """Monte Carlo ``int g(t) E^{x0,s0}[f(X_t)] dt`` (or with ``Y``) by trapezoid over ``probe_times``.

    Returns ``(mean, standard error)`` across paths.
    """
    t = np.asarray(probe_times, dtype=float)
    ens = simulate_limit(spec, x0, s0, t, n_paths, seed=seed, dr=dr, octrw=octrw, workers=workers)
    pos = ens.y if octrw else ens.x
    vals = np.asarray(f(pos[..., 0] if spec.dim == 1 else pos), dtype=float) * g(t)[None, :]
    w = np.zeros_like(t)
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    per_path = vals @ w
    per_path = per_path[np.isfinite(per_path)]
    return float(per_path.mean()), float(per_path.std(ddof=1) / math.sqrt(per_path.size))


@dataclass
class LawComparison:
    statistic: float
    threshold: float
    n: int
    m: int

    @property
    def rejects(self) -> bool:
        return self.statistic > self.threshold


def compare_ctrw_octrw(spec: ModelSpec, x0, s0: float, t: float, n_paths: int, *, seed: int,
                       dr: float = 1e-3, level: float = 0.99, workers: int = 1) -> LawComparison:
    """Two-sample KS test of ``X(t)`` against ``Y(t)`` drawn from independent ensembles."""
    xs, _ = mc_law_estimate(spec, x0, s0, t, n_paths, seed=seed, dr=dr, octrw=True, stream=0, workers=workers)
    _, ys = mc_law_estimate(spec, x0, s0, t, n_paths, seed=seed, dr=dr, octrw=True, stream=1, workers=workers)
    d = ks_distance(xs, ys)
    return LawComparison(d, ks_threshold(len(xs), len(ys), level), len(xs), len(ys))


@dataclass
class AggregationResult:
    p_early: float
    p_late: float
    z: float
    critical: float

    @property
    def significant(self) -> bool:
        return self.z > self.critical


def aggregation_test(x_early: np.ndarray, x_late: np.ndarray, center: float, radius: float = 0.5,
                     level: float = 0.99) -> AggregationResult:
    """One-sided paired test that occupation of ``|x - center| <= radius`` grows from early to late.

    ``x_early`` and ``x_late`` are positions of the same paths at two times.
    """
    a = np.asarray(x_early, dtype=float)
    b = np.asarray(x_late, dtype=float)
    keep = np.isfinite(a) & np.isfinite(b)
    ia = (np.abs(a[keep] - center) <= radius).astype(float)
    ib = (np.abs(b[keep] - center) <= radius).astype(float)
    diff = ib - ia
    se = diff.std(ddof=1) / math.sqrt(diff.size)
    z = diff.mean() / se if se > 0 else (math.inf if diff.mean() > 0 else 0.0)
    return AggregationResult(float(ia.mean()), float(ib.mean()), float(z), float(stats.norm.ppf(level)))

"""Model coefficients and the three preset families.

A :class:`ModelSpec` bundles the data of the space-time generator: spatial
drift ``b`` and diffusion ``a``, the temporal drift ``gamma``, the tail
``H(x, s; v)`` of the waiting-time Levy measure, the pre-limit spatial jump law
and the coupling between jumps and waiting times.

Field conventions: positions are arrays of shape ``(..., d)`` and times arrays
of shape ``(...)``.  Scalar fields return shape ``(...)``, the drift returns
``(..., d)`` and the diffusion ``(..., d, d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import DomainError

__all__ = [
    "Constant",
    "Tanh",
    "Well",
    "Oscillating",
    "ConstantVector",
    "ConstantMatrix",
    "CoefficientField",
    "TemporalTail",
    "LatticeJumps",
    "GaussianJumps",
    "NoJumps",
    "Uncoupled",
    "LevyWalk",
    "ModelSpec",
    "subdiffusion_preset",
    "variable_order_preset",
    "levy_walk_preset",
    "drift_clock_spec",
    "eval_tail",
    "stable_tail",
    "stable_tail_integral",
    "as_points",
]


def stable_tail(beta, v):
    """Tail function ``v**-beta / Gamma(1 - beta)`` of the stable waiting law."""
    beta = np.asarray(beta, dtype=float)
    v = np.asarray(v, dtype=float)
    return v ** (-beta) / gamma_fn(1.0 - beta)


def stable_tail_integral(beta, v):
    """Antiderivative ``v**(1 - beta) / Gamma(2 - beta)`` of :func:`stable_tail`."""
    beta = np.asarray(beta, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.maximum(v, 0.0) ** (1.0 - beta) / gamma_fn(2.0 - beta)


def as_points(x, dim: int = 1) -> np.ndarray:
    """Coerce scalars and 1-d arrays of positions to shape ``(..., dim)``."""
    x = np.asarray(x, dtype=float)
    if dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    return x


def _coord(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[..., 0] if x.ndim else x


# --------------------------------------------------------------------------
# scalar and vector fields (picklable, so ensembles can cross process bounds)


@dataclass(frozen=True)
class Constant:
    value: float
    depends_on_time = False

    def __call__(self, x, s):
        shape = np.broadcast_shapes(np.shape(_coord(x)), np.shape(s))
        return np.full(shape, float(self.value))

    @property
    def bound(self) -> float:
        return abs(self.value)

    @property
    def lipschitz(self) -> float:
        return 0.0


@dataclass(frozen=True)
class Tanh:
    """``base + amplitude * tanh((x - center) / scale)`` of the first coordinate."""

    base: float = 0.0
    amplitude: float = 1.0
    center: float = 0.0
    scale: float = 1.0
    depends_on_time = False

    def __call__(self, x, s):
        z = self.base + self.amplitude * np.tanh((_coord(x) - self.center) / self.scale)
        return np.broadcast_to(z, np.broadcast_shapes(z.shape, np.shape(s))).copy()

    @property
    def bound(self) -> float:
        return abs(self.base) + abs(self.amplitude)

    @property
    def lipschitz(self) -> float:
        return abs(self.amplitude) / self.scale


@dataclass(frozen=True)
class Well:
    """Gaussian well: equals ``floor`` at ``center`` and rises to ``ceiling``."""

    floor: float
    ceiling: float
    center: float = 0.0
    width: float = 1.0
    depends_on_time = False

    def __call__(self, x, s):
        u = (_coord(x) - self.center) / self.width
        z = self.ceiling - (self.ceiling - self.floor) * np.exp(-0.5 * u * u)
        return np.broadcast_to(z, np.broadcast_shapes(z.shape, np.shape(s))).copy()

    @property
    def bound(self) -> float:
        return max(abs(self.floor), abs(self.ceiling))

    @property
    def lipschitz(self) -> float:
        return abs(self.ceiling - self.floor) / self.width * math.exp(-0.5)


@dataclass(frozen=True)
class Oscillating:
    """Time-periodic field ``base + amplitude * sin(omega * s + phase)``."""

    amplitude: float
    omega: float = 1.0
    phase: float = 0.0
    base: float = 0.0
    depends_on_time = True

    def __call__(self, x, s):
        s = np.asarray(s, dtype=float)
        z = self.base + self.amplitude * np.sin(self.omega * s + self.phase)
        return np.broadcast_to(z, np.broadcast_shapes(np.shape(_coord(x)), z.shape)).copy()

    @property
    def bound(self) -> float:
        return abs(self.base) + abs(self.amplitude)

    @property
    def lipschitz(self) -> float:
        return 0.0


@dataclass(frozen=True)
class ConstantVector:
    values: tuple[float, ...]
    depends_on_time = False

    def __call__(self, x, s):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.values, dtype=float), x.shape).copy()

    @property
    def bound(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class ConstantMatrix:
    values: tuple[tuple[float, ...], ...]
    depends_on_time = False

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def __call__(self, x, s):
        x = np.asarray(x, dtype=float)
        m = self.matrix
        return np.broadcast_to(m, x.shape[:-1] + m.shape).copy()

    @property
    def bound(self) -> float:
        return float(np.abs(self.matrix).max())

    @classmethod
    def scalar(cls, value: float, dim: int = 1) -> "ConstantMatrix":
        return cls(tuple(tuple(float(value) if i == j else 0.0 for j in range(dim)) for i in range(dim)))


def _as_field(value: float | Callable) -> Callable:
    if callable(value):
        return value
    return Constant(float(value))


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientField:
    """Drift, diffusion and temporal drift of the space-time generator.

    ``bound`` is a declared bound on all three coefficients; it is asserted on
    probe grids by :meth:`check`, never proven.
    """

    dim: int
    drift: Callable
    diffusion: Callable
    gamma: Callable
    bound: float

    def b(self, x, s) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.drift(x, s), dtype=float)
        if out.shape == x.shape[:-1]:
            out = out[..., None]
        return np.broadcast_to(out, np.broadcast_shapes(out.shape, x.shape))

    def a(self, x, s) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.diffusion(x, s), dtype=float)
        if self.dim == 1 and out.shape[-2:] != (1, 1):
            out = out[..., None, None]
        return out

    def g(self, x, s) -> np.ndarray:
        return np.asarray(self.gamma(x, s), dtype=float)

    @property
    def constant_diffusion(self) -> np.ndarray | None:
        if isinstance(self.diffusion, ConstantMatrix):
            return self.diffusion.matrix
        if isinstance(self.diffusion, Constant) and self.dim == 1:
            return np.array([[self.diffusion.value]])
        return None

    @property
    def time_homogeneous_clock(self) -> bool:
        return not getattr(self.gamma, "depends_on_time", True)

    def check(self, x, s, tol: float = 1e-12) -> None:
        """Assert symmetry/PSD of ``a``, ``gamma >= 0`` and the declared bound."""
        a = self.a(x, s)
        if not np.allclose(a, np.swapaxes(a, -1, -2), atol=tol):
            raise DomainError("diffusion matrix is not symmetric")
        if np.linalg.eigvalsh(a).min(initial=0.0) < -tol:
            raise DomainError("diffusion matrix is not positive semidefinite")
        g = self.g(x, s)
        if g.min(initial=0.0) < 0.0:
            raise DomainError("temporal drift gamma must be nonnegative")
        peak = max(np.abs(self.b(x, s)).max(initial=0.0), np.abs(a).max(initial=0.0), np.abs(g).max(initial=0.0))
        if peak > self.bound * (1 + 1e-12) + tol:
            raise DomainError(f"coefficient magnitude {peak:g} exceeds declared bound {self.bound:g}")


@dataclass(frozen=True)
class TemporalTail:
    """Tail ``H(x, s; v)`` of the waiting-time Levy measure.

    ``kind`` is one of ``"stable"`` (fixed order ``beta``), ``"variable_stable"``
    (order ``beta_field(x)``), ``"custom"`` (tabulated, spatially uniform,
    piecewise linear between ``table`` knots, constant below the first knot and
    zero past the last) or ``"none"`` (no waiting-time jumps).
    """

    kind: str
    beta: float | None = None
    beta_field: Callable | None = None
    table: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    @classmethod
    def stable(cls, beta: float) -> "TemporalTail":
        if not 0.0 < beta < 1.0:
            raise DomainError(f"stable order beta must lie in (0, 1), got {beta}")
        return cls("stable", beta=float(beta))

    @classmethod
    def variable(cls, beta_field: Callable) -> "TemporalTail":
        return cls("variable_stable", beta_field=beta_field)

    @classmethod
    def custom(cls, v, H) -> "TemporalTail":
        v = np.asarray(v, dtype=float)
        H = np.asarray(H, dtype=float)
        if v.ndim != 1 or v.shape != H.shape or v.size < 2:
            raise DomainError("custom tail needs matching 1-d knot and value arrays")
        if v[0] <= 0 or np.any(np.diff(v) <= 0):
            raise DomainError("custom tail knots must be positive and increasing")
        if np.any(H < 0) or np.any(np.diff(H) > 0):
            raise DomainError("custom tail must be nonnegative and nonincreasing")
        return cls("custom", table=(tuple(v), tuple(H)))

    @classmethod
    def none(cls) -> "TemporalTail":
        return cls("none")

    @property
    def is_stable_family(self) -> bool:
        return self.kind in ("stable", "variable_stable")

    def order(self, x) -> np.ndarray:
        """Stable order at positions ``x`` (shape ``(..., d)``)."""
        if self.kind == "stable":
            return np.full(np.shape(_coord(x)), self.beta)
        if self.kind == "variable_stable":
            return np.asarray(self.beta_field(x, np.zeros(np.shape(_coord(x)))), dtype=float)
        raise DomainError(f"tail of kind {self.kind!r} has no stable order")

    def H(self, x, s, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.is_stable_family:
            return stable_tail(self.order(x), v)
        if self.kind == "none":
            return np.zeros(np.broadcast_shapes(np.shape(_coord(x)), v.shape))
        knots, vals = (np.asarray(t) for t in self.table)
        out = np.interp(v, knots, vals, left=vals[0], right=0.0)
        return np.broadcast_to(out, np.broadcast_shapes(np.shape(_coord(x)), v.shape))

    def cumulative(self, x, v) -> np.ndarray:
        """``int_0^v H(x; w) dw``."""
        v = np.asarray(v, dtype=float)
        if self.is_stable_family:
            return stable_tail_integral(self.order(x), v)
        if self.kind == "none":
            return np.zeros(np.broadcast_shapes(np.shape(_coord(x)), v.shape))
        knots, vals = (np.asarray(t) for t in self.table)
        nodes = np.concatenate([[0.0], knots])
        heights = np.concatenate([[vals[0]], vals])
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (heights[1:] + heights[:-1]) * np.diff(nodes))])
        vc = np.clip(v, 0.0, nodes[-1])
        k = np.clip(np.searchsorted(nodes, vc, side="right") - 1, 0, nodes.size - 2)
        frac = vc - nodes[k]
        slope = (heights[k + 1] - heights[k]) / (nodes[k + 1] - nodes[k])
        out = cum[k] + heights[k] * frac + 0.5 * slope * frac * frac
        return np.broadcast_to(out, np.broadcast_shapes(np.shape(_coord(x)), v.shape))

    def laplace(self, lam, x=None) -> np.ndarray:
        """Laplace transform of ``v -> H(x; v)`` at (complex) ``lam``.

        The tabulated branch uses the exact transform of the piecewise-linear
        table; it loses accuracy for ``|lam|`` far below the inverse knot span.
        """
        lam = np.asarray(lam, dtype=complex)
        if self.is_stable_family:
            beta = self.beta if x is None or self.kind == "stable" else self.order(x)
            return lam ** (np.asarray(beta) - 1.0)
        if self.kind == "none":
            return np.zeros_like(lam)
        knots, vals = (np.asarray(t) for t in self.table)
        nodes = np.concatenate([[0.0], knots])
        heights = np.concatenate([[vals[0]], vals])
        out = np.zeros_like(lam)
        for a, b, ha, hb in zip(nodes[:-1], nodes[1:], heights[:-1], heights[1:]):
            q = (hb - ha) / (b - a)
            p = ha - q * a
            ea, eb = np.exp(-lam * a), np.exp(-lam * b)
            out = out + p * (ea - eb) / lam + q * (ea * (a / lam + 1 / lam**2) - eb * (b / lam + 1 / lam**2))
        return out


@dataclass(frozen=True)
class LatticeJumps:
    """Nearest-neighbour lattice jumps with spacing ``c ** -exponent``."""

    exponent: float = 0.5

    def spacing(self, c: float) -> float:
        return float(c) ** (-self.exponent)


@dataclass(frozen=True)
class GaussianJumps:
    """Gaussian jumps with mean ``b / c`` and covariance ``a / c``."""


@dataclass(frozen=True)
class NoJumps:
    pass


@dataclass(frozen=True)
class Uncoupled:
    pass


@dataclass(frozen=True)
class LevyWalk:
    """Jump length equals waiting time; directions drawn from ``weights``.

    ``directions`` holds unit vectors; ``None`` with ``dim >= 2`` means the
    uniform law on the sphere.
    """

    weights: tuple[float, ...] = (0.5, 0.5)
    directions: tuple[tuple[float, ...], ...] | None = ((1.0,), (-1.0,))
    dim: int = 1

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.directions is None:
            z = rng.standard_normal((n, self.dim))
            return z / np.linalg.norm(z, axis=1, keepdims=True)
        dirs = np.asarray(self.directions, dtype=float)
        idx = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        return dirs[idx]

    def mean_direction(self) -> np.ndarray:
        if self.directions is None:
            return np.zeros(self.dim)
        return np.asarray(self.weights) @ np.asarray(self.directions, dtype=float)


@dataclass(frozen=True)
class ModelSpec:
    """Immutable model description shared by samplers and solvers."""

    name: str
    coeffs: CoefficientField
    tail: TemporalTail
    spatial_jumps: LatticeJumps | GaussianJumps | NoJumps = NoJumps()
    coupling: Uncoupled | LevyWalk = Uncoupled()
    params: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if isinstance(self.coupling, LevyWalk):
            a = self.coeffs.constant_diffusion
            if a is None or np.any(a != 0):
                raise DomainError("Levy-walk coupling requires zero diffusion")
            if not isinstance(self.coeffs.gamma, Constant) or self.coeffs.gamma.value != 0:
                raise DomainError("Levy-walk coupling requires zero temporal drift")
            if self.tail.kind != "stable":
                raise DomainError("Levy-walk coupling is defined for a fixed stable order")

    @property
    def dim(self) -> int:
        return self.coeffs.dim

    @property
    def coupled(self) -> bool:
        return isinstance(self.coupling, LevyWalk)

    @property
    def time_homogeneous_clock(self) -> bool:
        return self.coeffs.time_homogeneous_clock

    def lattice_probabilities(self, x, s, dx: float) -> tuple[np.ndarray, np.ndarray]:
        """Left/right jump probabilities ``(l, r)`` with ``r - l = b * dx``."""
        b = self.coeffs.b(as_points(x), s)[..., 0]
        r = 0.5 * (1.0 + b * dx)
        if np.any(r < 0.0) or np.any(r > 1.0):
            raise DomainError(f"lattice spacing {dx:g} too coarse for drift bound: |b dx| > 1")
        return 1.0 - r, r

    def prelimit_tail(self, c: float, x, s, w) -> np.ndarray:
        """Waiting-time tail ``1 ^ H(w) / c`` of the pre-limit chain at scale ``c``."""
        return np.minimum(1.0, self.tail.H(x, s, w) / c)

    def jump_tail_mass(self, v: float, direction: int | None = None) -> float:
        """Levy-walk mass ``K(|z| > v, w > v)``, optionally for one direction index."""
        if not self.coupled:
            raise DomainError("jump_tail_mass is defined for coupled Levy-walk specs")
        h = float(stable_tail(self.tail.beta, v))
        if direction is None:
            return h
        return float(self.coupling.weights[direction]) * h

    def check_invariants(self, x, s, v=None) -> None:
        """Probe-grid assertions of the coefficient and tail invariants."""
        self.coeffs.check(x, s)
        if v is None:
            v = np.logspace(-4, 4, 81)
        H = self.tail.H(np.asarray(x)[:, None, :], np.asarray(s)[:, None], np.asarray(v)[None, :])
        if np.any(np.diff(H, axis=-1) > 1e-12 * np.abs(H[..., :-1]).max(initial=1.0)):
            raise DomainError("tail H is not nonincreasing in v")
        sup_mass = float(np.max(self.tail.cumulative(x, np.ones(len(x)))))
        if not math.isfinite(sup_mass):
            raise DomainError("tail is not integrable on (0, 1)")


def eval_tail(spec: ModelSpec, x, s, v) -> np.ndarray:
    """``H(x, s; v)`` for ``v > 0``; scalar ``x`` is read as a 1-d position."""
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise DomainError("tail argument v must be positive")
    out = spec.tail.H(as_points(x, spec.dim), s, v)
    return float(out) if np.ndim(out) == 0 or np.size(out) == 1 else out


# --------------------------------------------------------------------------
# presets


def _drift_field(drift, dim: int = 1) -> Callable:
    if callable(drift):
        return drift
    if dim == 1:
        return Constant(float(drift))
    return ConstantVector(tuple(float(d) for d in np.broadcast_to(np.asarray(drift, dtype=float), (dim,))))


def subdiffusion_preset(beta: float, drift: float | Callable = 0.0, *, jumps: str = "lattice") -> ModelSpec:
    """Subdiffusion under a space-time dependent bias.

    Limit coefficients ``a = 1``, ``gamma = 0`` and stable waiting times of
    order ``beta``; the pre-limit chain jumps on a lattice of spacing
    ``c ** -0.5`` (or with Gaussian jumps when ``jumps="gaussian"``).
    """
    if not 0.0 < beta < 1.0:
        raise DomainError(f"beta must lie in (0, 1), got {beta}")
    b = _drift_field(drift)
    bound = max(1.0, getattr(b, "bound", 1.0))
    coeffs = CoefficientField(1, b, ConstantMatrix.scalar(1.0), Constant(0.0), bound)
    spatial = {"lattice": LatticeJumps(0.5), "gaussian": GaussianJumps()}[jumps]
    return ModelSpec("subdiffusion", coeffs, TemporalTail.stable(beta), spatial, Uncoupled(),
                     params={"beta": beta, "drift": b, "jumps": jumps})


def variable_order_preset(
    beta_field: Callable | float,
    *,
    epsilon: float = 0.05,
    lipschitz: float | None = None,
    probe: np.ndarray | None = None,
) -> ModelSpec:
    """Unbiased subdiffusion whose trap depth ``beta(x)`` varies in space.

    ``beta_field`` must stay within ``(epsilon, 1 - epsilon)``; the range and
    the declared Lipschitz constant are checked on ``probe`` (default: 4001
    points on ``[-100, 100]``).
    """
    field_ = _as_field(beta_field)
    if probe is None:
        probe = np.linspace(-100.0, 100.0, 4001)
    xs = np.asarray(probe, dtype=float)[:, None]
    vals = np.asarray(field_(xs, np.zeros(len(xs))), dtype=float)
    if vals.min() <= epsilon or vals.max() >= 1.0 - epsilon:
        raise DomainError(
            f"beta(x) must lie in ({epsilon}, {1 - epsilon}); probe range is [{vals.min():.4g}, {vals.max():.4g}]"
        )
    lip = lipschitz if lipschitz is not None else getattr(field_, "lipschitz", None)
    if lip is not None:
        slopes = np.abs(np.diff(vals)) / np.diff(xs[:, 0])
        if slopes.max() > lip * (1 + 1e-6) + 1e-12:
            raise DomainError(f"beta(x) violates declared Lipschitz constant {lip}")
    coeffs = CoefficientField(1, Constant(0.0), ConstantMatrix.scalar(1.0), Constant(0.0), 1.0)
    return ModelSpec("variable_order", coeffs, TemporalTail.variable(field_), LatticeJumps(0.5), Uncoupled(),
                     params={"beta_field": field_, "epsilon": epsilon})


def levy_walk_preset(
    beta: float,
    drift: float | Callable | tuple = 0.0,
    direction_weights=(0.5, 0.5),
    *,
    dim: int = 1,
    directions=None,
) -> ModelSpec:
    """Unit-speed Levy walk with drift ``b``.

    In one dimension ``direction_weights`` are the probabilities of ``+1`` and
    ``-1``.  For ``dim >= 2`` pass unit ``directions`` with matching weights, or
    ``direction_weights="uniform"`` for the uniform law on the sphere.
    """
    if not 0.0 < beta < 1.0:
        raise DomainError(f"beta must lie in (0, 1), got {beta}")
    if isinstance(direction_weights, str):
        if direction_weights != "uniform" or dim < 2:
            raise DomainError("only 'uniform' is accepted as a named direction law, for dim >= 2")
        coupling = LevyWalk(weights=(), directions=None, dim=dim)
    else:
        w = np.asarray(direction_weights, dtype=float)
        if np.any(w < 0) or not math.isclose(w.sum(), 1.0, abs_tol=1e-12):
            raise DomainError("direction weights must form a probability distribution")
        if directions is None:
            if dim != 1 or w.size != 2:
                raise DomainError("explicit directions are required unless dim == 1 with two weights")
            directions = ((1.0,), (-1.0,))
        dirs = np.asarray(directions, dtype=float).reshape(w.size, dim)
        if not np.allclose(np.linalg.norm(dirs, axis=1), 1.0):
            raise DomainError("directions must be unit vectors")
        coupling = LevyWalk(tuple(w.tolist()), tuple(map(tuple, dirs.tolist())), dim)
    b = _drift_field(drift, dim)
    bound = max(getattr(b, "bound", 1.0), 1e-300)
    coeffs = CoefficientField(dim, b, ConstantMatrix.scalar(0.0, dim), Constant(0.0), bound)
    return ModelSpec("levy_walk", coeffs, TemporalTail.stable(beta), NoJumps(), coupling,
                     params={"beta": beta, "drift": b, "direction_weights": direction_weights, "dim": dim})


def drift_clock_spec(gamma: float = 1.0, drift: float = 0.0, diffusion: float = 0.0,
                     tail: TemporalTail | None = None) -> ModelSpec:
    """Degenerate 1-d model whose clock is ``D_r = s + gamma * r`` (plus ``tail`` jumps)."""
    if gamma < 0:
        raise DomainError("gamma must be nonnegative")
    coeffs = CoefficientField(1, Constant(float(drift)), ConstantMatrix.scalar(diffusion), Constant(float(gamma)),
                              max(abs(drift), abs(diffusion), gamma))
    return ModelSpec("drift_clock", coeffs, tail or TemporalTail.none(), NoJumps(), Uncoupled(),
                     params={"gamma": gamma, "drift": drift, "diffusion": diffusion})

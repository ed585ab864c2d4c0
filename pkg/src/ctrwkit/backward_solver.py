"""Backward (Kolmogorov) solver for ``v(x, s) = int_{t>s} g(t) E^{x,s}[f(X_t)] dt``.

The equation ``-A v = Psi h`` with ``h(x, s) = f(x) g(s)`` is marched
downward in ``s``: the waiting-time part only looks at later times, so each
level is a tridiagonal solve against already computed levels.

For uncoupled models the discretisation is the exact matrix transpose of
the renewal scheme in :mod:`forward_solver`, so pairing a forward solution
with a backward one reproduces the same number up to rounding.  With
``c_0 = eta_0`` and ``c_k = eta_k - eta_{k-1}`` (``k >= 1``, all negative)
each level solves

    (c_0 - L) v_i = (Psi h)_i - sum_{j>i} c_{j-i} v_j.

For the Levy walk the same weights act along the light-cone diagonals
``(x + k theta dx, s + k ds)`` of each direction ``theta = +-1``, which needs
``dx == ds``.  Outside the spatial domain ``v`` is zero.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ConvergenceWarning, PreconditionError, UnsupportedModelError
from .forward_solver import FokkerPlanckOperator
from .frac_ops import psi_apply, tail_increments
from .grids import GridField, SpaceTimeGrid
from .model import ModelSpec

__all__ = ["BackwardField", "solve_backward", "terminal_expectation", "bump", "backward_grid"]


@dataclass
class BackwardField(GridField):
    """``values[i, j] = v(x[i], s[j])`` together with the sampled inputs."""

    f_values: np.ndarray | None = None
    g_values: np.ndarray | None = None

    @property
    def g_integral_above(self) -> np.ndarray:
        """``int_{t > s_j} g(t) dt`` under the same right-endpoint rule as the solver."""
        g = self.g_values
        tail = np.zeros_like(g)
        tail[:-1] = np.cumsum((g[1:] * self.dt)[::-1])[::-1]
        return tail


def _sample(fn, pts: np.ndarray) -> np.ndarray:
    return np.asarray(fn(pts) if callable(fn) else fn, dtype=float) * np.ones_like(pts)


def bump(t: float, width: float):
    """Normalised polynomial bump ``30/w (u(1-u))^2`` on ``(t, t + w)``."""

    def g(s):
        u = (np.asarray(s, dtype=float) - t) / width
        inside = (u > 0) & (u < 1)
        return np.where(inside, 30.0 / width * (u * (1 - u)) ** 2, 0.0)

    return g


def _weights(spec: ModelSpec, x: np.ndarray, dt: float, n: int) -> np.ndarray:
    """``c_0 = eta_0``, ``c_k = eta_k - eta_{k-1}``; shape ``(1, n)`` or ``(nx, n)``."""
    eta = tail_increments(spec, x, dt, n) / dt
    gam = np.broadcast_to(np.asarray(spec.coeffs.g(x[:, None], np.zeros(x.size)), dtype=float), x.shape)
    if np.any(gam):
        eta = np.broadcast_to(eta, (x.size, n)).copy()
        eta[:, 0] += gam / dt
        if np.allclose(eta, eta[:1]):
            eta = eta[:1]
    c = eta.copy()
    c[:, 1:] -= eta[:, :-1]
    return c


def solve_backward(spec: ModelSpec, f, g, grid: SpaceTimeGrid) -> BackwardField:
    """Solve for ``v`` on ``grid`` given ``f(x)`` and a compactly supported ``g(s)``.

    ``f`` and ``g`` are vectorised callables or arrays on ``grid.x`` and
    ``grid.t``.  ``g`` must vanish on the top two time nodes.
    """
    if spec.dim != 1:
        raise UnsupportedModelError("the PDE solvers are one-dimensional")
    if not spec.time_homogeneous_clock:
        raise UnsupportedModelError("the backward scheme needs gamma and H independent of time")
    x, t = grid.x, grid.t
    fv = _sample(f, x)
    gv = _sample(g, t)
    if np.any(gv[-2:] != 0):
        raise PreconditionError("g must be supported strictly inside the time window")
    h = GridField(x, t, np.outer(fv, gv))
    rhs = psi_apply(h, spec, method="renewal").values
    if spec.coupled:
        values = _march_levy(spec, rhs, x, t)
    else:
        values = _march_uncoupled(spec, rhs, x, t)
    meta = {"spec": spec.name, "scheme": "renewal-transpose"}
    return BackwardField(x, t, values, meta, f_values=fv, g_values=gv)


def _march_uncoupled(spec: ModelSpec, rhs: np.ndarray, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    nx, n = rhs.shape
    dt = float(t[1] - t[0])
    c = _weights(spec, x, dt, n)
    uniform = c.shape[0] == 1
    timedep = any(getattr(fld, "depends_on_time", True) for fld in (spec.coeffs.drift, spec.coeffs.diffusion))
    op = FokkerPlanckOperator.assemble(spec, x, t[0] + 0.5 * dt).transpose()
    v = np.zeros((n, nx))
    last = _last_active(rhs)
    for i in range(last, -1, -1):
        if timedep:
            op = FokkerPlanckOperator.assemble(spec, x, t[i] + 0.5 * dt).transpose()
        r = rhs[:, i].copy()
        m = n - 1 - i
        if m > 0:
            if uniform:
                r -= c[0, 1 : m + 1] @ v[i + 1 :]
            else:
                r -= np.einsum("ik,ki->i", c[:, 1 : m + 1], v[i + 1 :])
        v[i] = op.shifted_solve(c[:, 0], r)
    return v.T.copy()


def _last_active(rhs: np.ndarray) -> int:
    active = np.flatnonzero(np.abs(rhs).max(axis=0) > 0)
    return int(active[-1]) if active.size else -1


def _march_levy(spec: ModelSpec, rhs: np.ndarray, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    nx, n = rhs.shape
    dt = float(t[1] - t[0])
    if not math.isclose(float(x[1] - x[0]), dt, rel_tol=1e-9):
        raise ConfigurationError("the Levy-walk backward scheme needs dx == ds")
    c = _weights(spec, x, dt, n)[0]
    lam = dict(zip((int(round(d[0])) for d in spec.coupling.directions), spec.coupling.weights))
    lp, lm = lam.get(1, 0.0), lam.get(-1, 0.0)
    zero_diff = spec.coeffs.constant_diffusion is not None and not spec.coeffs.constant_diffusion.any()
    if not zero_diff:
        raise UnsupportedModelError("Levy walk with diffusion is not supported")
    timedep = getattr(spec.coeffs.drift, "depends_on_time", True)
    op = FokkerPlanckOperator.assemble(spec, x, t[0] + 0.5 * dt).transpose()
    # skewed storage: Wp[q + n - 1, j] = v(x_{q+j}, s_j), Wm[q, j] = v(x_{q-j}, s_j)
    Wp = np.zeros((nx + n - 1, n))
    Wm = np.zeros((nx + n - 1, n))
    m_idx = np.arange(nx)
    v = np.zeros((nx, n))
    for i in range(_last_active(rhs), -1, -1):
        if timedep:
            op = FokkerPlanckOperator.assemble(spec, x, t[i] + 0.5 * dt).transpose()
        r = rhs[:, i].copy()
        m = n - 1 - i
        if m > 0:
            w = c[1 : m + 1]
            # v(x_{p+k}, s_{i+k}) = Wp[p - i + n - 1, i + k]
            r -= lp * (Wp[n - 1 - i : n - 1 - i + nx, i + 1 :] @ w)
            # v(x_{p-k}, s_{i+k}) = Wm[p + i, i + k]
            r -= lm * (Wm[i : i + nx, i + 1 :] @ w)
        vi = op.shifted_solve(np.full(nx, c[0]), r)
        v[:, i] = vi
        Wp[m_idx - i + n - 1, i] = vi
        Wm[m_idx + i, i] = vi
    return v


def backward_grid(spec: ModelSpec, x0: float, s0: float, t_top: float, *, ds: float, nx: int = 401,
                  f_support: tuple[float, float] | None = None, width: float = 10.0,
                  padding: float = 0.1) -> SpaceTimeGrid:
    """Grid for :func:`solve_backward` covering ``[s0, t_top]`` plus ``padding`` of the span.

    Levy-walk grids use ``dx = ds`` and a half-width of the light cone; other
    models use ``nx`` nodes over the diffusive envelope of
    :func:`forward_solver.forward_grid`.
    """
    from .forward_solver import _operational_envelope

    span = t_top - s0
    top = t_top + padding * span
    nt = int(math.ceil((top - s0) / ds)) + 1
    top = s0 + (nt - 1) * ds
    if spec.coupled:
        half = (top - s0) + abs(float(getattr(spec.coeffs.drift, "bound", 0.0))) * (top - s0) + 2 * ds
        lo, hi = x0 - half, x0 + half
        if f_support is not None:
            lo, hi = min(lo, f_support[0]), max(hi, f_support[1])
        k_lo = math.floor((lo - x0) / ds)
        k_hi = math.ceil((hi - x0) / ds)
        return SpaceTimeGrid(x0 + k_lo * ds, x0 + k_hi * ds, k_hi - k_lo + 1, s0, top, nt)
    op_time = _operational_envelope(spec, top - s0)
    a_max = float(getattr(spec.coeffs.diffusion, "bound", 1.0))
    b_max = float(getattr(spec.coeffs.drift, "bound", 0.0))
    half = b_max * op_time + width * math.sqrt(max(a_max, 1e-12) * op_time)
    return SpaceTimeGrid(x0 - half, x0 + half, nx, s0, top, nt)


@dataclass
class TerminalExpectation:
    """Extrapolated ``E^{x,s}[f(X_t)]`` with the raw bump-width sweep."""

    field: GridField
    widths: tuple[float, ...]
    sweep: list[GridField] = field(default_factory=list)

    def at(self, x: float, s: float) -> float:
        return self.field.at(x, s)

    def sweep_at(self, x: float, s: float) -> list[float]:
        return [fld.at(x, s) for fld in self.sweep]


def terminal_expectation(spec: ModelSpec, f, t: float, grid: SpaceTimeGrid,
                         widths: tuple[float, ...] = (0.2, 0.1, 0.05)) -> TerminalExpectation:
    """``E^{x,s}[f(X_t)]`` from backward solves with bumps concentrating at ``t`` from the right.

    The last two widths are combined by linear Richardson extrapolation in
    the width; the sweep is returned alongside.  A sweep whose successive
    differences do not shrink triggers ``ConvergenceWarning``.
    """
    widths = tuple(float(w) for w in widths)
    if len(widths) < 2 or any(b >= a for a, b in zip(widths, widths[1:])):
        raise ConfigurationError("bump widths must be a decreasing sequence of length >= 2")
    if not (grid.t_min < t and t + widths[0] < grid.t_max - 2 * grid.dt):
        raise ConfigurationError("t and the widest bump must lie inside the time window")
    sweep = [solve_backward(spec, f, bump(t, w), grid) for w in widths]
    vals = [fld.values for fld in sweep]
    ratio = widths[-2] / widths[-1]
    extrap = (ratio * vals[-1] - vals[-2]) / (ratio - 1.0)
    if len(vals) >= 3:
        # only levels below t carry the expectation; inside the bumps the sweep need not settle
        below = grid.t <= t + 1e-12 * max(1.0, abs(t))
        d1 = np.abs(vals[-2] - vals[-3])[:, below].max()
        d2 = np.abs(vals[-1] - vals[-2])[:, below].max()
        if d2 > d1 * (1 + 1e-9):
            warnings.warn("bump-width sweep is not contracting; extrapolation is unreliable",
                          ConvergenceWarning, stacklevel=2)
    out = GridField(grid.x, grid.t, extrap, {"t": t, "widths": widths})
    return TerminalExpectation(out, widths, [GridField(f.x, f.t, f.values) for f in sweep])

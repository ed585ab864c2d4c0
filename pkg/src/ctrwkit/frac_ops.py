"""Discrete fractional operators on space-time grids.

Fields are ``GridField`` objects with ``values[i, j]`` at ``(x[i], t[j])``.
Operators acting "backward in time" (the negative fractional derivative,
the fractional integral, ``Psi`` and ``Upsilon``) only reference larger
``t`` and require the input to vanish at the top of the window.  Operators
acting on measures (``Psi*`` and its inverse) only reference smaller ``t``.

Measures are handled through their time-cell masses: column ``j`` of a
``GridMeasure`` is the density of the mass carried by the cell
``[t_j, t_j + dt)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import gamma as gamma_fn

from .errors import ConfigurationError, PreconditionError, UnsupportedModelError
from .grids import GridField, GridMeasure
from .model import ModelSpec, stable_tail, stable_tail_integral

__all__ = [
    "gl_weights",
    "apply_neg_frac_derivative",
    "apply_frac_derivative",
    "neg_frac_integral",
    "psi_apply",
    "upsilon_apply",
    "psi_star_apply",
    "psi_star_inverse",
    "tail_increments",
    "MemoryKernel",
    "memory_kernel",
    "talbot_invert",
]

DIRECT_LIMIT = 4096


def gl_weights(beta: float, n: int) -> np.ndarray:
    """Grunwald-Letnikov weights ``g_0..g_n`` with ``g_k = (-1)^k binom(beta, k)``."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    k = np.arange(1, n + 1)
    return np.concatenate([[1.0], np.cumprod((k - 1 - beta) / k)])


def _orders(beta, x: np.ndarray) -> np.ndarray:
    """Per-node orders as a column ``(nx, 1)`` from a scalar, array or callable."""
    if callable(beta):
        beta = beta(x[:, None], np.zeros_like(x))
    return np.broadcast_to(np.asarray(beta, dtype=float), x.shape)[:, None]


def _correlate_up(values: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``out[:, j] = sum_m w[:, m] * values[:, j + m]`` (zero beyond the last column).

    Direct summation keeps sign structure exact (nonnegative in, nonnegative
    out); long windows switch to FFT.
    """
    nx, n = values.shape
    w = np.broadcast_to(w, (nx, w.shape[-1]))[:, :n]
    if n <= DIRECT_LIMIT:
        out = np.empty_like(values)
        for i in range(nx):
            out[i] = np.convolve(values[i, ::-1], w[i])[:n][::-1]
        return out
    return fftconvolve(values[:, ::-1], w, axes=1)[:, :n][:, ::-1]


def _correlate_down(values: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``out[:, j] = sum_m w[:, m] * values[:, j - m]`` (causal convolution)."""
    nx, n = values.shape
    w = np.broadcast_to(w, (nx, w.shape[-1]))[:, :n]
    if n <= DIRECT_LIMIT:
        out = np.empty_like(values)
        for i in range(nx):
            out[i] = np.convolve(values[i], w[i])[:n]
        return out
    return fftconvolve(values, w, axes=1)[:, :n]


def _require_top_vanishing(h: GridField, rtol: float = 1e-12) -> None:
    scale = np.abs(h.values).max(initial=0.0)
    if np.abs(h.values[:, -1]).max(initial=0.0) > rtol * max(scale, 1e-300):
        raise PreconditionError("field must vanish at the top of the time window")


def apply_neg_frac_derivative(field: GridField, beta) -> GridField:
    """Grunwald-Letnikov negative fractional derivative along ``t``.

    ``dt**-beta * sum_k g_k f(x, t + k dt)``, truncated at the window top.
    ``beta`` may be a scalar, a per-node array or a callable ``beta(x, s)``.
    """
    _require_top_vanishing(field)
    n = field.values.shape[1]
    b = _orders(beta, field.x)
    k = np.arange(1, n)
    w = np.concatenate([np.ones_like(b), np.cumprod((k - 1 - b) / k, axis=1)], axis=1)
    out = _correlate_up(field.values, w) * field.dt ** (-b)
    return field.with_values(out)


def apply_frac_derivative(field: GridField, alpha) -> GridField:
    """Grunwald-Letnikov Riemann-Liouville derivative of order ``alpha`` in forward time."""
    n = field.values.shape[1]
    b = _orders(alpha, field.x)
    k = np.arange(1, n)
    w = np.concatenate([np.ones_like(b), np.cumprod((k - 1 - b) / k, axis=1)], axis=1)
    return field.with_values(_correlate_down(field.values, w) * field.dt ** (-b))


def _trapezoid_weights(alpha: np.ndarray, dt: float, n: int) -> np.ndarray:
    """Product-trapezoid weights for ``int_0^inf f(r) r^(alpha-1) dr / Gamma(alpha)``.

    Exact for ``f`` piecewise linear between nodes; ``alpha`` is ``(nx, 1)``.
    """
    k = np.arange(n, dtype=float)[None, :]
    k1 = k + 1.0
    i0 = dt**alpha * (k1**alpha - k**alpha) / alpha
    i1 = dt**alpha * (k1 ** (alpha + 1) - k ** (alpha + 1)) / (alpha + 1) - k * i0
    w = i0 - i1
    w[:, 1:] += i1[:, :-1]
    return w / gamma_fn(alpha)


def neg_frac_integral(field: GridField, beta) -> GridField:
    """Negative Riemann-Liouville integral ``(1/Gamma(beta)) int_0^inf f(t + r) r^(beta-1) dr``."""
    n = field.values.shape[1]
    w = _trapezoid_weights(_orders(beta, field.x), field.dt, n)
    return field.with_values(_correlate_up(field.values, w))


def _cell_moments_custom(spec: ModelSpec, dt: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    # tabulated tails are bounded, so 8-point Gauss-Legendre per cell is plenty
    nodes, wts = np.polynomial.legendre.leggauss(8)
    u = 0.5 * (nodes + 1.0)
    k = np.arange(n)[:, None]
    v = (k + u[None, :]) * dt
    Hv = spec.tail.H(np.zeros((1, 1)), 0.0, v).reshape(v.shape)
    i0 = 0.5 * dt * (Hv * wts).sum(axis=1)
    i1 = 0.5 * dt * (Hv * u * wts).sum(axis=1)
    return i0[None, :], i1[None, :]


def _psi_weights(spec: ModelSpec, x: np.ndarray, dt: float, n: int) -> np.ndarray:
    tail = spec.tail
    if tail.kind == "none":
        return np.zeros((1, n))
    if tail.is_stable_family:
        pts = x[:, None]
        return _trapezoid_weights(1.0 - tail.order(pts)[:, None], dt, n)
    i0, i1 = _cell_moments_custom(spec, dt, n)
    w = i0 - i1
    w[:, 1:] += i1[:, :-1]
    return w


def tail_increments(spec: ModelSpec, x: np.ndarray, dt: float, n: int) -> np.ndarray:
    """``Hbar((k+1) dt) - Hbar(k dt)`` for ``k < n``, with ``Hbar`` the tail antiderivative.

    Returns shape ``(nx, n)`` (or ``(1, n)`` for spatially uniform tails).
    """
    tail = spec.tail
    tau = dt * np.arange(n + 1, dtype=float)
    if tail.kind == "none":
        return np.zeros((1, n))
    if tail.is_stable_family:
        beta = tail.beta if tail.kind == "stable" else tail.order(x[:, None])[:, None]
        cum = np.atleast_2d(stable_tail_integral(beta, tau[None, :]))
    else:
        cum = np.asarray(tail.cumulative(np.zeros((1, 1)), tau)).reshape(1, -1)
    return np.diff(cum, axis=1)


def _gamma_field(spec: ModelSpec, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    g = spec.coeffs.g(x[:, None, None], t[None, :])
    return np.broadcast_to(np.asarray(g, dtype=float).reshape(np.shape(g)[:2]), (x.size, t.size))


def psi_apply(h: GridField, spec: ModelSpec, method: str = "trapezoid") -> GridField:
    """``Psi h = gamma h + int_{v>0} h(x, s+v) H(x, s; v) dv`` on the grid.

    ``method="trapezoid"`` integrates the linear interpolant of ``h`` exactly
    against ``H``.  ``method="renewal"`` uses the right-endpoint cell rule
    ``gamma h(s + dt) + sum_k h(s + (k+1) dt) int_{cell k} H``, the form that
    is exactly dual to the forward solver's time stepping.
    """
    _require_top_vanishing(h)
    if spec.tail.kind not in ("stable", "variable_stable", "custom", "none"):
        raise UnsupportedModelError(f"unknown tail kind {spec.tail.kind!r}")
    x, t, dt = h.x, h.t, h.dt
    n = t.size
    gam = _gamma_field(spec, x, t)
    if method == "trapezoid":
        out = gam * h.values + _correlate_up(h.values, _psi_weights(spec, x, dt, n))
    elif method == "renewal":
        shifted = np.zeros_like(h.values)
        shifted[:, :-1] = h.values[:, 1:]
        out = gam * shifted + _correlate_up(shifted, tail_increments(spec, x, dt, n))
    else:
        raise ConfigurationError(f"unknown quadrature method {method!r}")
    return h.with_values(out)


def _levy_weights(beta: float, dt: float, m_max: int) -> np.ndarray:
    """Weights ``c_m`` with ``int h_beta(w) G(w) dw = sum_{m>=1} c_m G(m dt)``.

    ``G`` is interpolated linearly between nodes and ``G(0) = 0``, so the
    singular first cell only needs the first moment of ``h_beta``.
    """
    m = np.arange(m_max + 1, dtype=float)
    a, b = m * dt, (m + 1) * dt
    first = beta / ((1.0 - beta) * gamma_fn(1.0 - beta)) * (b ** (1.0 - beta) - a ** (1.0 - beta))
    zeroth = np.zeros_like(m)
    zeroth[1:] = stable_tail(beta, a[1:]) - stable_tail(beta, b[1:])
    hi = (first - a * zeroth) / dt
    lo = zeroth - hi
    c = np.zeros_like(m)
    c[1:] = lo[1:] + hi[:-1]
    return c


def upsilon_apply(h: GridField, spec: ModelSpec) -> GridField:
    """``Upsilon h``: like ``Psi h`` but with the pending jump already applied in space.

    Uncoupled models give ``psi_apply``.  For the Levy walk, with
    ``G(y, s, w) = int_0^w h(y, s + v) dv``,
    ``Upsilon h(x, s) = sum_theta lambda_theta int h_beta(w) G(x + w theta, s, w) dw``,
    evaluated on a grid with ``dx == dt`` so that ``x + w theta`` stays on nodes.
    Targets outside the spatial domain contribute zero.
    """
    if not spec.coupled:
        return psi_apply(h, spec)
    if spec.dim != 1:
        raise UnsupportedModelError("grid Upsilon is one-dimensional")
    _require_top_vanishing(h)
    dt = h.dt
    if not math.isclose(h.dx, dt, rel_tol=1e-9):
        raise ConfigurationError("Levy-walk operators need dx == dt")
    nx, n = h.values.shape
    coef = _levy_weights(spec.tail.beta, dt, nx)
    # C[:, j] = int_{t_0}^{t_j} h, constant past the window top
    C = np.zeros((nx, n))
    C[:, 1:] = np.cumsum(0.5 * dt * (h.values[:, 1:] + h.values[:, :-1]), axis=1)
    j = np.arange(n)
    out = np.zeros_like(h.values)
    for lam, theta in zip(spec.coupling.weights, spec.coupling.directions):
        step = int(round(theta[0]))
        for m in range(1, nx):
            k = step * m
            dst = slice(max(0, -k), min(nx, nx - k))
            src = slice(max(0, k), min(nx, nx + k))
            G = C[src][:, np.minimum(j + m, n - 1)] - C[src]
            out[dst] += lam * coef[m] * G
    return h.with_values(out)


def psi_star_apply(measure: GridMeasure, spec: ModelSpec) -> GridMeasure:
    """``Psi* m (dy, dt) = gamma m + dt int_{sigma<t} m(dy, d sigma) H(y, sigma; t - sigma)``.

    Cell masses starting at ``t_i`` spread over later cells through the tail
    antiderivative: ``n_j = gamma m_j + sum_{i<=j} m_i (Hbar((j-i+1) dt) - Hbar((j-i) dt))``.
    """
    x, t, dt = measure.x, measure.t, measure.dt
    n = t.size
    gam = _gamma_field(spec, x, t)
    v = measure.values
    out = gam * v + _correlate_down(v, tail_increments(spec, x, dt, n))
    return GridMeasure(x, t, out, dict(measure.meta), injection=measure.injection)


@dataclass
class MemoryKernel:
    """Renewal measure ``V`` of the clock on ``t`` (per spatial node when ``x`` is set).

    ``values`` is the density of ``V`` at ``t``; ``atom`` is its mass at zero;
    ``cum`` is ``V([0, t])`` on the same grid.
    """

    t: np.ndarray
    values: np.ndarray
    cum: np.ndarray
    atom: np.ndarray | float = 0.0
    provenance: str = "closed_form"
    x: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def increments(self, dt: float, n: int) -> np.ndarray:
        """``Vbar((k+1) dt) - Vbar(k dt)`` for ``k < n`` with ``Vbar(0) = 0``; shape ``(rows, n)``.

        Closed forms are evaluated analytically; inverted kernels difference
        the tabulated ``cum`` and must be tabulated at ``dt, 2 dt, ...``.
        """
        if "beta" in self.meta:
            beta = np.asarray(self.meta["beta"], dtype=float).reshape(-1, 1)
            k = np.arange(n + 1, dtype=float)[None, :]
            return np.diff(dt**beta * k**beta, axis=1) / gamma_fn(1.0 + beta)
        if self.provenance == "closed_form":
            return np.full((1, n), dt / self.meta["gamma"])
        if self.t.size < n or not np.allclose(self.t[:n], dt * np.arange(1, n + 1), rtol=1e-9, atol=0.0):
            raise ConfigurationError("memory kernel is not tabulated on the measure's time steps")
        cum = np.atleast_2d(self.cum)[:, :n]
        return np.diff(np.concatenate([np.zeros((cum.shape[0], 1)), cum], axis=1), axis=1)


def talbot_invert(F, t, M: int = 32) -> np.ndarray:
    """Fixed-Talbot numerical inverse Laplace transform of ``F`` at ``t > 0``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t <= 0):
        raise ValueError("Talbot inversion needs t > 0")
    r = 2.0 * M / (5.0 * t)
    theta = np.arange(1, M) * np.pi / M
    cot = 1.0 / np.tan(theta)
    s = r[:, None] * theta * (cot + 1j)
    sigma = theta + (theta * cot - 1.0) * cot
    terms = np.exp(t[:, None] * s) * F(s) * (1.0 + 1j * sigma)
    return r / M * (0.5 * np.exp(r * t) * np.real(F(r + 0j)) + np.real(terms).sum(axis=1))


def memory_kernel(spec: ModelSpec, t_grid, *, x=None, M: int = 32) -> MemoryKernel:
    """Renewal density ``V`` with ``int e^{-lam t} V(dt) = 1 / (lam (gamma + H^(lam)))``.

    Stable tails with ``gamma = 0`` use ``t^(beta-1)/Gamma(beta)``; everything
    else goes through fixed-Talbot inversion.  Only time-homogeneous clocks
    are supported.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise ConfigurationError("memory-kernel grid must be positive and increasing")
    if not spec.time_homogeneous_clock:
        raise UnsupportedModelError("memory kernel needs gamma and H independent of time")
    tail = spec.tail
    gamma_const = _clock_drift(spec, x)
    if tail.is_stable_family and not np.any(gamma_const):
        if tail.kind == "variable_stable":
            if x is None:
                raise ConfigurationError("variable-order kernels need spatial nodes x")
            beta = tail.order(np.asarray(x, dtype=float)[:, None])[:, None]
        else:
            beta = tail.beta
        values = t ** (beta - 1.0) / gamma_fn(beta)
        cum = t**beta / gamma_fn(1.0 + beta)
        meta = {"beta": np.asarray(beta).tolist()}
        return MemoryKernel(t, values, cum, 0.0, "closed_form", None if x is None else np.asarray(x), meta)
    if tail.kind == "none":
        if not np.all(gamma_const > 0):
            raise ConfigurationError("a clock without jumps needs gamma > 0")
        gval = float(np.max(gamma_const))
        values = np.full_like(t, 1.0 / gval)
        return MemoryKernel(t, values, t / gval, 0.0, "closed_form", None, {"gamma": gval})
    if tail.kind == "variable_stable":
        raise UnsupportedModelError("variable-order kernels with gamma > 0 are not supported")
    gval = float(np.max(gamma_const))
    x0 = np.zeros((1, 1))

    def renewal(lam, power):
        # far left on the contour the tail transform overflows and the integrand vanishes
        with np.errstate(all="ignore"):
            out = 1.0 / (lam**power * (gval + tail.laplace(lam, x0 if tail.kind != "stable" else None)))
        return np.where(np.isfinite(out), out, 0.0)

    atom = 0.0
    if gval == 0 and tail.kind == "custom":
        atom = 1.0 / float(tail.table[1][0])
    # renewal density without the atom, and the cumulative with it
    values = talbot_invert(lambda lam: renewal(lam, 1) - atom, t, M)
    cum = talbot_invert(lambda lam: renewal(lam, 2), t, M)
    return MemoryKernel(t, values, cum, atom, "laplace_inverted", None, {"gamma": gval, "M": M})


def _clock_drift(spec: ModelSpec, x) -> np.ndarray:
    pts = np.zeros((1, 1)) if x is None else np.asarray(x, dtype=float).reshape(-1, 1)
    return np.atleast_1d(np.asarray(spec.coeffs.g(pts, np.zeros(pts.shape[0])), dtype=float))


def psi_star_inverse(measure: GridMeasure, kernel: MemoryKernel) -> GridMeasure:
    """``(Psi*)^-1 n = d/dt (V * n)`` on time cells.

    With ``Vbar`` the renewal function and ``w_k = Vbar((k+1) dt) - Vbar(k dt)``
    the output density on cell ``j`` is ``sum_{i<=j} n_i (w_{j-i} - w_{j-i-1}) / dt``.
    Laplace-inverted kernels must be tabulated at ``dt, 2 dt, ...`` covering the window.
    """
    dt = measure.dt
    n = measure.t.size
    w = kernel.increments(dt, n)
    if w.shape[0] not in (1, measure.x.size):
        raise ConfigurationError("memory kernel and measure disagree on spatial nodes")
    b = w.copy()
    b[:, 1:] -= w[:, :-1]
    mass = _correlate_down(measure.values, b)
    return GridMeasure(measure.x, measure.t, mass / dt, dict(measure.meta), injection=measure.injection)

"""Finite-difference solver for the fractional Fokker-Planck equation in one dimension.

The unknown is the law ``P*`` of an uncoupled walker injected with initial
law ``mu`` at time ``s``.  Writing ``phi = (Psi*)^-1 P*`` for the potential
density, the equation ``d/dt P* = L* phi + mu delta_s`` is marched in time
with ``L* q = -d/dy(b q) + 1/2 d^2/dy^2(a q)`` in flux form (upwind drift,
central diffusion, absorbing edges).

Two schemes are available:

``"renewal"`` (default)
    ``Psi*`` is discretised on time cells with the exact tail antiderivative,
    so each level solves ``(eta_0 - L*) phi_j = sum_{i<j} (eta_{j-1-i} - eta_{j-i}) phi_i``
    and ``P*_{j+1} = sum_{i<=j} eta_{j-i} phi_i``.  The level matrix is an
    M-matrix and the history weights are nonnegative, so the solution is
    nonnegative and conserves mass up to boundary outflow.  Handles any
    time-homogeneous tail and temporal drift ``gamma``.
``"grunwald"``
    Grunwald-Letnikov weights for ``d_t^(1-beta)`` with implicit diffusion
    and lagged explicit drift (stable tails with ``gamma = 0`` only).  First
    order with a larger error constant; kept for comparison.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.linalg import solve_banded
from scipy.special import gamma as gamma_fn
from scipy.special import gammaln

from .errors import (
    ConfigurationError,
    DomainError,
    LeakageWarning,
    NegativityError,
    StabilityError,
    UnsupportedModelError,
)
from .frac_ops import _correlate_down, gl_weights, tail_increments
from .grids import GridMeasure, SpaceTimeGrid
from .model import ModelSpec

__all__ = [
    "FokkerPlanckOperator",
    "solve_fpe",
    "forward_grid",
    "point_mass",
    "subordination_oracle",
    "solution_moments",
    "slice_cdf",
]


@dataclass
class FokkerPlanckOperator:
    """Tridiagonal flux-form stencil of ``L*`` on the nodes ``x`` (zero outside).

    ``drift_bands``/``diffusion_bands`` hold the matrix in ``solve_banded``
    layout: row 0 the super-diagonal (shifted right), row 1 the diagonal,
    row 2 the sub-diagonal.
    """

    x: np.ndarray
    drift_bands: np.ndarray
    diffusion_bands: np.ndarray

    @classmethod
    def assemble(cls, spec: ModelSpec, x: np.ndarray, t: float) -> "FokkerPlanckOperator":
        dy = float(x[1] - x[0])
        nx = x.size
        faces = np.concatenate([[x[0] - 0.5 * dy], 0.5 * (x[1:] + x[:-1]), [x[-1] + 0.5 * dy]])
        b = spec.coeffs.b(faces[:, None], np.full(nx + 1, t))[:, 0]
        bp, bm = np.maximum(b, 0.0), np.minimum(b, 0.0)
        a = spec.coeffs.a(x[:, None], np.full(nx, t)).reshape(nx)
        drift = np.zeros((3, nx))
        drift[1] = -(bp[1:] - bm[:-1]) / dy
        drift[0, 1:] = -bm[1:-1] / dy
        drift[2, :-1] = bp[1:-1] / dy
        diff = np.zeros((3, nx))
        diff[1] = -a / dy**2
        diff[0, 1:] = 0.5 * a[1:] / dy**2
        diff[2, :-1] = 0.5 * a[:-1] / dy**2
        return cls(x, drift, diff)

    @property
    def bands(self) -> np.ndarray:
        return self.drift_bands + self.diffusion_bands

    @staticmethod
    def _apply(bands: np.ndarray, q: np.ndarray) -> np.ndarray:
        out = bands[1] * q
        out[:-1] += bands[0, 1:] * q[1:]
        out[1:] += bands[2, :-1] * q[:-1]
        return out

    def apply(self, q: np.ndarray) -> np.ndarray:
        return self._apply(self.bands, q)

    def apply_drift(self, q: np.ndarray) -> np.ndarray:
        return self._apply(self.drift_bands, q)

    def apply_diffusion(self, q: np.ndarray) -> np.ndarray:
        return self._apply(self.diffusion_bands, q)

    def shifted_solve(self, diag: np.ndarray, rhs: np.ndarray, part: str = "full") -> np.ndarray:
        """Solve ``(diag - L) u = rhs`` with ``L`` the full stencil or its diffusion part."""
        bands = self.bands if part == "full" else self.diffusion_bands
        ab = -bands
        ab[1] += diag
        return solve_banded((1, 1), ab, rhs, check_finite=False)

    def transpose(self) -> "FokkerPlanckOperator":
        """Stencil of the backward operator ``L`` (the matrix transpose of ``L*``)."""

        def flip(B):
            out = np.zeros_like(B)
            out[1] = B[1]
            out[0, 1:] = B[2, :-1]
            out[2, :-1] = B[0, 1:]
            return out

        return FokkerPlanckOperator(self.x, flip(self.drift_bands), flip(self.diffusion_bands))

    def column_sums(self) -> np.ndarray:
        """Column sums of the stencil; zero away from the two edge columns."""
        B = self.bands
        out = B[1].copy()
        out[1:] += B[0, 1:]
        out[:-1] += B[2, :-1]
        return out


def point_mass(x: np.ndarray, x0: float, mass: float = 1.0) -> np.ndarray:
    """Density on ``x`` of a point mass at ``x0``, split linearly between neighbouring nodes."""
    dy = float(x[1] - x[0])
    u = (x0 - x[0]) / dy
    i = int(math.floor(u))
    if not 0 <= i < x.size - 1 and not math.isclose(u, x.size - 1):
        raise DomainError(f"point {x0} lies outside the spatial grid")
    out = np.zeros_like(x, dtype=float)
    if i >= x.size - 1:
        out[-1] = mass / dy
        return out
    w = u - i
    out[i] += (1.0 - w) * mass / dy
    out[i + 1] += w * mass / dy
    return out


def _initial_density(mu, x: np.ndarray) -> np.ndarray:
    if np.ndim(mu) == 0:
        return point_mass(x, float(mu))
    mu = np.asarray(mu, dtype=float)
    if mu.shape != x.shape:
        raise ConfigurationError("initial density must live on the spatial grid")
    if np.any(mu < 0):
        raise DomainError("initial measure must be nonnegative")
    return mu.copy()


def _check_solvable(spec: ModelSpec) -> None:
    if spec.coupled:
        raise UnsupportedModelError(
            "no Fokker-Planck solver for the coupled Levy walk: its generator does not split into "
            "a spatial part and a waiting-time part; use Monte Carlo for its laws"
        )
    if spec.dim != 1:
        raise UnsupportedModelError("the PDE solvers are one-dimensional")
    if not spec.time_homogeneous_clock:
        raise UnsupportedModelError("memory inversion needs gamma and H independent of time")


def _depends_on_time(spec: ModelSpec) -> bool:
    c = spec.coeffs
    return any(getattr(f, "depends_on_time", True) for f in (c.drift, c.diffusion))


def solve_fpe(spec: ModelSpec, mu, s: float, grid: SpaceTimeGrid, scheme: str = "renewal", *,
              negativity_tol: float = 1e-12, leak_tol: float = 1e-4) -> GridMeasure:
    """Law of the walker on ``grid`` after injection of ``mu`` at time ``s``.

    ``mu`` is a density on ``grid.x`` or a scalar position (unit point mass).
    Columns before ``s`` are zero and column ``s`` holds ``mu``.  The result
    records the boundary outflow in ``meta["leakage"]`` (cumulative, per
    level) and warns with ``LeakageWarning`` when it exceeds ``leak_tol``.
    """
    _check_solvable(spec)
    x, t = grid.x, grid.t
    js = grid.t_index(s)
    if js >= grid.nt - 1:
        raise ConfigurationError("injection time must lie below the top of the time window")
    mu = _initial_density(mu, x)
    total = float(mu.sum() * grid.dx)
    if scheme == "renewal":
        dens, leak = _march_renewal(spec, mu, x, t[js:], grid.dt)
    elif scheme == "grunwald":
        dens, leak = _march_grunwald(spec, mu, x, t[js:], grid.dt)
    else:
        raise ConfigurationError(f"unknown scheme {scheme!r}")
    values = np.zeros((grid.nx, grid.nt))
    values[:, js:] = dens
    low = values.min(initial=0.0)
    if low < -negativity_tol * values.max(initial=0.0):
        i, j = np.unravel_index(np.argmin(values), values.shape)
        raise NegativityError(f"density {low:.3e} at x={x[i]:.4g}, t={t[j]:.4g} ({scheme} scheme)")
    leakage = np.zeros(grid.nt)
    leakage[js:] = leak
    if total > 0 and leak[-1] > leak_tol * total:
        warnings.warn(f"boundary outflow {leak[-1]:.2e} exceeds {leak_tol:g} of the mass; widen the domain",
                      LeakageWarning, stacklevel=2)
    meta = {"scheme": scheme, "s": float(s), "mass": total, "leakage": leakage, "spec": spec.name}
    return GridMeasure(x, t, values, meta, injection=(mu, float(s)))


def _march_renewal(spec, mu, x, t, dt):
    nx, n = x.size, t.size
    K = n - 1
    eta = np.broadcast_to(tail_increments(spec, x, dt, K) / dt, (nx, K)).copy()
    gam = np.broadcast_to(np.asarray(spec.coeffs.g(x[:, None], np.zeros(nx)), dtype=float), (nx,))
    eta[:, 0] += gam / dt
    if np.any(eta[:, 0] <= 0):
        raise UnsupportedModelError("clock without drift or waiting-time jumps cannot advance")
    d = eta[:, :-1] - eta[:, 1:]
    uniform = np.allclose(eta, eta[:1])
    dT = d[0][:, None] if uniform else d.T
    timedep = _depends_on_time(spec)
    op = FokkerPlanckOperator.assemble(spec, x, t[0] + 0.5 * dt)
    phis = np.zeros((K, nx))
    leak = np.zeros(n)
    for j in range(K):
        if timedep:
            op = FokkerPlanckOperator.assemble(spec, x, t[j] + 0.5 * dt)
        if j == 0:
            rhs = mu
        elif uniform:
            rhs = dT[j - 1::-1, 0] @ phis[:j]
        else:
            rhs = np.einsum("ki,ki->i", dT[j - 1::-1], phis[:j])
        phis[j] = op.shifted_solve(eta[:, 0], rhs)
        leak[j + 1] = leak[j] - op.apply(phis[j]).sum() * (x[1] - x[0])
    dens = np.zeros((nx, n))
    dens[:, 0] = mu
    dens[:, 1:] = _correlate_down(phis.T.copy(), eta)
    return dens, leak


def _march_grunwald(spec, mu, x, t, dt):
    tail = spec.tail
    if not tail.is_stable_family or np.any(spec.coeffs.g(x[:, None], np.zeros(x.size))):
        raise UnsupportedModelError("the Grunwald scheme needs a stable tail and gamma = 0")
    nx, n = x.size, t.size
    dy = float(x[1] - x[0])
    beta = np.broadcast_to(tail.order(x[:, None]), (nx,))
    tau = dt**beta
    k = np.arange(1, n)
    alpha = (1.0 - beta)[:, None]
    g = np.concatenate([np.ones((nx, 1)), np.cumprod((k - 1 - alpha) / k, axis=1)], axis=1)
    uniform = np.allclose(beta, beta[0])
    if uniform:
        g1 = gl_weights(1.0 - beta[0], n)[1:]
    timedep = _depends_on_time(spec)
    P = np.zeros((n, nx))
    P[0] = mu
    leak = np.zeros(n)
    total = mu.sum() * dy
    op = FokkerPlanckOperator.assemble(spec, x, t[0])
    for j in range(n - 1):
        if timedep:
            op = FokkerPlanckOperator.assemble(spec, x, t[j])
        if j == 0 or timedep:
            speed = np.abs(op.drift_bands[1]).max(initial=0.0) * dy
            if speed > 0 and np.max(tau) * speed / dy > 1.0:
                raise StabilityError(
                    f"explicit drift violates dt^beta |b| / dy <= 1 (|b| ~ {speed:.3g}, dy = {dy:.3g})",
                    suggested_dt=0.9 * (dy / speed) ** (1.0 / float(np.min(beta))),
                )
        # sum_{k>=1} g_k P_{j+1-k}
        if uniform:
            hist = g1[: j + 1][::-1] @ P[: j + 1]
        else:
            hist = np.einsum("ik,ki->i", g[:, j + 1:0:-1], P[: j + 1])
        rhs = P[j] + op.apply_diffusion(tau * hist) + op.apply_drift(tau * (P[j] + hist))
        # implicit newest diffusion term: (I - L_d tau) P_{j+1}; solve for tau P_{j+1}
        u = op.shifted_solve(1.0 / tau, rhs, part="diffusion")
        P[j + 1] = u / tau
        leak[j + 1] = total - P[j + 1].sum() * dy
    return P.T.copy(), leak


def forward_grid(spec: ModelSpec, x0: float, s: float, t_end: float, *, nx: int = 401, nt: int = 2001,
                 width: float = 10.0) -> SpaceTimeGrid:
    """Grid on ``[s, t_end]`` whose spatial extent covers the diffusive envelope.

    The half-width is the drift displacement plus ``width`` standard
    deviations of ``sqrt(a E[E(t)])``, with the mean operational time
    ``E[E(t)] = t^beta / Gamma(1 + beta)`` maximised over the attainable
    orders.
    """
    span = t_end - s
    if span <= 0:
        raise ConfigurationError("t_end must exceed s")
    op_time = _operational_envelope(spec, span)
    a_max = float(spec.coeffs.diffusion.bound) if hasattr(spec.coeffs.diffusion, "bound") else 1.0
    b_max = float(spec.coeffs.drift.bound) if hasattr(spec.coeffs.drift, "bound") else 0.0
    half = b_max * op_time + width * math.sqrt(max(a_max, 1e-12) * op_time)
    return SpaceTimeGrid(x0 - half, x0 + half, nx, s, t_end, nt)


def _operational_envelope(spec: ModelSpec, span: float) -> float:
    tail = spec.tail
    g = float(np.max(np.asarray(spec.coeffs.g(np.zeros((1, 1)), np.zeros(1)))))
    if not tail.is_stable_family:
        return span / g if g > 0 else span
    if tail.kind == "stable":
        betas = np.array([tail.beta])
    else:
        probe = np.linspace(-100.0, 100.0, 2001)[:, None]
        b = tail.order(probe)
        betas = np.linspace(b.min(), b.max(), 9)
    return float(np.max(span**betas / gamma_fn(1.0 + betas)))


def subordination_oracle(beta: float, a: float, t: float, y, *, terms: int = 400) -> np.ndarray:
    """Density of ``B(a E(t))`` at ``y`` for ``B`` standard Brownian motion.

    ``E(t)`` is the inverse ``beta``-stable subordinator.  For ``beta = 1/2``
    its density is ``(pi t)^(-1/2) exp(-u^2 / (4 t))`` and the mixture is
    computed by adaptive quadrature after ``u = w^2``.  Other orders use the
    Wright-function series for the density of ``E(t)`` in multiprecision and
    raise ``DomainError`` when the series does not settle.
    """
    if not 0.0 < beta < 1.0 or a <= 0 or t <= 0:
        raise DomainError("need 0 < beta < 1, a > 0 and t > 0")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if beta == 0.5:
        def q(u):
            return math.exp(-u * u / (4.0 * t)) / math.sqrt(math.pi * t)
        w_max = np.inf
    else:
        q = _wright_density(beta, t, terms)
        # M_beta(z) ~ exp(-(1-beta) beta^(beta/(1-beta)) z^(1/(1-beta))); stop where that is e^-60
        z_max = (60.0 / ((1.0 - beta) * beta ** (beta / (1.0 - beta)))) ** (1.0 - beta)
        w_max = math.sqrt(z_max * t**beta)

    out = np.empty_like(y)
    for i, yy in enumerate(y):
        def integrand(w, yy=yy):
            u = w * w
            var = a * u
            return 2.0 * w * math.exp(-yy * yy / (2.0 * var)) / math.sqrt(2.0 * math.pi * var) * q(u)

        out[i] = integrate.quad(integrand, 0.0, w_max, epsabs=1e-13, epsrel=1e-11, limit=400)[0]
    return out


def _wright_density(beta: float, t: float, terms: int):
    import mpmath as mp

    def plan(z: float) -> tuple[int, int]:
        # log10 sizes of |z^k / (k! Gamma(1 - beta - beta k))| to size the precision and term count
        k = np.arange(1, 20 * terms)
        logs = (k * math.log(max(z, 1e-300)) - gammaln(k + 1.0) + gammaln(beta * (k + 1.0))) / math.log(10)
        peak = max(float(logs.max()), 0.0)
        past = np.flatnonzero((logs < peak - 40) & (k > int(np.argmax(logs))))
        if past.size == 0:
            raise DomainError(f"Wright series for beta={beta} needs more than {k[-1]} terms at z={z:.3g}")
        return int(peak) + 40, int(k[past[0]]) + 1

    def M(z: float) -> float:
        dps, n = plan(z)
        with mp.workdps(dps):
            zz, bb = mp.mpf(z), mp.mpf(beta)
            # rgamma vanishes at the poles of Gamma; its argument must be formed at full precision
            total = mp.fsum((-zz) ** k * mp.rgamma(1 - bb - bb * k) / mp.factorial(k) for k in range(n))
            return float(total)

    cache: dict[float, float] = {}

    def q(u):
        if u not in cache:
            val = M(u * t ** (-beta)) * t ** (-beta)
            if val < -1e-12:
                raise DomainError("Wright series lost precision (negative density)")
            cache[u] = max(val, 0.0)
        return cache[u]

    return q


def solution_moments(field: GridMeasure, t: float) -> tuple[float, float, float]:
    """``(mean, variance, mass)`` of the spatial slice at grid time ``t``."""
    j = int(np.argmin(np.abs(field.t - t)))
    if not math.isclose(field.t[j], t, rel_tol=1e-9, abs_tol=1e-12):
        raise DomainError(f"time {t} is not a grid node")
    if field.injection is not None and t <= field.injection[1]:
        raise DomainError("moments are defined for t after the injection time")
    p = field.values[:, j]
    dy = field.dx
    mass = float(math.fsum(p * dy))
    if mass <= 0:
        raise DomainError("empty slice")
    mean = float(math.fsum(p * field.x * dy) / mass)
    var = float(math.fsum(p * (field.x - mean) ** 2 * dy) / mass)
    return mean, var, mass


def slice_cdf(field: GridMeasure, t: float):
    """Normalised CDF of the slice at ``t`` as a callable (piecewise-linear density)."""
    j = int(np.argmin(np.abs(field.t - t)))
    p = np.clip(field.values[:, j], 0.0, None)
    dy = field.dx
    x = field.x
    # density linear between nodes, zero beyond the edges
    xe = np.concatenate([[x[0] - dy], x, [x[-1] + dy]])
    pe = np.concatenate([[0.0], p, [0.0]])
    cells = 0.5 * (pe[1:] + pe[:-1]) * dy
    total = cells.sum()
    if total <= 0:
        raise DomainError("empty slice")
    cum = np.concatenate([[0.0], np.cumsum(cells)]) / total

    def cdf(v):
        v = np.asarray(v, dtype=float)
        k = np.clip(np.searchsorted(xe, v, side="right") - 1, 0, xe.size - 2)
        u = np.clip((v - xe[k]) / dy, 0.0, 1.0)
        part = dy * (pe[k] * u + 0.5 * (pe[k + 1] - pe[k]) * u * u) / total
        return np.clip(cum[k] + part, 0.0, 1.0)

    return cdf

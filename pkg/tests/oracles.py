"""Reference values computed independently of the package (closed forms, mpmath, quadrature)."""

from __future__ import annotations

import math

import mpmath as mp
import numpy as np
from scipy import integrate

SQRT_PI = math.sqrt(math.pi)

# frozen values, recomputed by the tests below from their definitions
INV_GAMMA_1_5 = 1.1283791670955126  # 1/Gamma(1.5) = 2/sqrt(pi)
H_HALF_AT_1 = 0.5641895835477563  # 1/sqrt(pi)
H_HALF_AT_4 = 0.28209479177387814  # 4^-0.5/sqrt(pi)
WAIT_C1_B05_U05 = 1.2732395447351628  # (sqrt(pi)/2)^-2 = 4/pi
RIGHT_TAIL_07 = 0.39493270848342943  # 0.7/sqrt(pi)
SUB_DENSITY_HALF = {0.0: 0.5770337386164697, 1.0: 0.19166522116514657, 2.5: 0.025379426407041805}
SUB_DENSITY_07 = {0.0: 0.5106219542167408, 0.5: 0.3445225156775311}
SUB_DENSITY_03 = {1.0: 0.18131868634107814}
INDICATOR_PSI = 0.2535974307898293  # (2/sqrt(pi)) (sqrt(1.5) - 1)
GAUSS_TEST_HALF = 0.6133546514700053  # E exp(-X(1)^2) for beta = 1/2, a = 1


def mean_operational_time(beta: float, t: float) -> float:
    """``E[E(t)]`` by quadrature of the inverse-subordinator density for beta = 1/2."""
    if beta == 0.5:
        q = lambda u: math.exp(-u * u / (4 * t)) / math.sqrt(math.pi * t)  # noqa: E731
        return integrate.quad(lambda u: u * q(u), 0, np.inf, epsabs=1e-14)[0]
    return t**beta / math.gamma(1 + beta)


def gaussian_test_expectation(t: float) -> float:
    """``E exp(-B(E(t))^2) = E (1 + 2 E(t))^(-1/2)`` for beta = 1/2."""
    q = lambda u: math.exp(-u * u / (4 * t)) / math.sqrt(math.pi * t)  # noqa: E731
    return integrate.quad(lambda u: q(u) / math.sqrt(1 + 2 * u), 0, np.inf, epsabs=1e-14)[0]


def subordinated_density(beta: float, a: float, t: float, y: float) -> float:
    """Density of ``B(a E(t))`` at ``y`` by mpmath Talbot inversion of its transform in ``t``."""
    with mp.workdps(30):
        F = lambda s: s ** (beta - 1) * mp.exp(-abs(y) * mp.sqrt(2 * s**beta / a)) / mp.sqrt(2 * a * s**beta)  # noqa: E731
        return float(mp.invertlaplace(F, t, method="talbot"))


def heat_kernel(y, var: float):
    y = np.asarray(y, dtype=float)
    return np.exp(-y * y / (2 * var)) / np.sqrt(2 * np.pi * var)


def ramp_neg_derivative(beta: float, tau: float) -> float:
    """Marchaud form of the negative fractional derivative of ``(top - s)_+`` at distance ``tau`` below top."""
    with mp.workdps(30):
        f = lambda r: max(tau - r, 0)  # noqa: E731
        val = mp.quad(lambda r: (f(0) - f(r)) * r ** (-1 - beta), [0, tau, mp.inf])
        return float(beta / mp.gamma(1 - beta) * val)


def neg_rl_integral_indicator(beta: float, lo: float, hi: float) -> float:
    """``(1/Gamma(beta)) int_lo^hi r^(beta-1) dr`` by quadrature."""
    return integrate.quad(lambda r: r ** (beta - 1), lo, hi)[0] / math.gamma(beta)


def gl_binomial(beta: float, k: int) -> float:
    """``(-1)^k binom(beta, k)`` with mpmath binomials."""
    return float((-1) ** k * mp.binomial(beta, k))

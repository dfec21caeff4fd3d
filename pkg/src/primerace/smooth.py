"""Smooth surrogates for ordering indicators.

``theta`` is the normalized antiderivative of the bump-free density

    f(x) = exp(-|x|)                (|x| >= 1)
    f(x) = (7 - 4x^2 + x^4) / (4e)  (|x| < 1)

which is C^2 at ``x = +-1``.  ``h^{+-}_{S,delta}(x) = prod_{(i,j) in S}
theta((x_i - x_j +- sqrt(delta)) / delta)`` approximates the indicator of the
region ``x_i > x_j`` for all pairs of ``S`` from above (+) and below (-).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .model import OrderingSpec

E = math.e
M0 = 74.0 / (15.0 * E)        # total mass of f
_P_LEFT = math.exp(-1.0)      # mass of f on (-inf, -1]


def _poly_mass(x):
    # integral of the patch polynomial from -1 to x
    x = np.asarray(x, dtype=np.float64)
    P = lambda t: (7 * t - 4 * t**3 / 3 + t**5 / 5) / (4 * E)
    return P(x) - P(-1.0)


def density(x):
    """``f(x)``, the unnormalized derivative of ``theta``."""
    x = np.asarray(x, dtype=np.float64)
    inner = (7 - 4 * x * x + x**4) / (4 * E)
    return np.where(np.abs(x) >= 1, np.exp(-np.abs(x)), inner)


def density_derivative(x, order: int = 1):
    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    if order == 1:
        outer = -np.sign(x) * np.exp(-ax)
        inner = (-8 * x + 4 * x**3) / (4 * E)
    elif order == 2:
        outer = np.exp(-ax)
        inner = (-8 + 12 * x * x) / (4 * E)
    else:
        raise ValueError("orders 1 and 2 only")
    return np.where(ax >= 1, outer, inner)


def theta(x):
    """Smooth step from 0 to 1 with ``theta(0) = 1/2`` and ``theta(x) + theta(-x) = 1``."""
    x = np.asarray(x, dtype=np.float64)
    lo = np.exp(np.minimum(x, -1.0)) / M0
    hi = 1.0 - np.exp(-np.maximum(x, 1.0)) / M0
    mid = (_P_LEFT + _poly_mass(np.clip(x, -1.0, 1.0))) / M0
    out = np.where(x <= -1, lo, np.where(x >= 1, hi, mid))
    return out if out.ndim else float(out)


def log_theta(x):
    """``log theta(x)`` without underflow on the left tail."""
    x = np.asarray(x, dtype=np.float64)
    lo = np.minimum(x, -1.0) - math.log(M0)
    hi = np.log1p(-np.exp(-np.maximum(x, 1.0)) / M0)
    mid = np.log((_P_LEFT + _poly_mass(np.clip(x, -1.0, 1.0))) / M0)
    out = np.where(x <= -1, lo, np.where(x >= 1, hi, mid))
    return out if out.ndim else float(out)


def theta_derivative(x, order: int = 1):
    """``theta^{(m)}(x)`` for ``m = 1, 2, 3``."""
    if order == 1:
        return density(x) / M0
    return density_derivative(x, order - 1) / M0


def _ratio(x, m):
    return abs(float(theta_derivative(x, m))) / float(theta(x))


def derivative_ratio_constants(grid: int = 200001) -> tuple[float, float, float]:
    """``kappa_m = sup_x |theta^{(m)}(x)| / theta(x)`` for ``m = 1, 2, 3``.

    On ``x <= -1`` all three ratios equal 1 (``theta`` is a multiple of ``e^x``);
    on ``x >= 1`` they are decreasing and bounded by their value at 1, so the
    supremum is found on ``[-1, 1]`` by a dense scan refined with a bounded
    scalar search around the best grid point.
    """
    xs = np.linspace(-1.0, 1.0, grid)
    th = theta(xs)
    out = []
    for m in (1, 2, 3):
        r = np.abs(theta_derivative(xs, m)) / th
        i = int(np.argmax(r))
        lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, grid - 1)]
        best = float(r[i])
        if hi > lo:
            res = minimize_scalar(lambda t: -_ratio(t, m), bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-13})
            best = max(best, -float(res.fun))
        out.append(max(best, 1.0))
    return tuple(out)


@dataclass(frozen=True)
class SmoothTestParams:
    delta: float
    spec: OrderingSpec
    sign: int = +1   # +1 for h^+, -1 for h^-

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @property
    def sandwich_ok(self) -> bool:
        """Whether ``exp(-1/sqrt(delta)) <= 1/n^2``."""
        return math.exp(-1.0 / math.sqrt(self.delta)) <= 1.0 / self.spec.n**2


def _args(params: SmoothTestParams, x):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    I, J = params.spec.index_arrays
    return (x[:, I] - x[:, J] + params.sign * math.sqrt(params.delta)) / params.delta


def log_h(params: SmoothTestParams, x) -> np.ndarray:
    """``log h(x)`` row-wise, summed in log space."""
    u = _args(params, x)
    return np.sum(log_theta(u), axis=1) if u.shape[1] else np.zeros(u.shape[0])


def h_eval(params: SmoothTestParams, x):
    """``h^{+-}_{S,delta}`` at one point (1-d input) or row-wise (2-d input).

    Factors are combined in log space; values below ``1e-300`` are therefore the
    exact exponential of the summed logs rather than an accumulated underflow.
    """
    scalar = np.ndim(x) == 1
    v = np.exp(log_h(params, x))
    return float(v[0]) if scalar else v


def h_gradient(params: SmoothTestParams, x) -> np.ndarray:
    """Analytic gradient of ``h`` row-wise, shape ``(m, n)``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    u = _args(params, x)
    h = np.exp(np.sum(log_theta(u), axis=1)) if u.shape[1] else np.ones(x.shape[0])
    r = theta_derivative(u, 1) / theta(u) / params.delta  # d log theta(u) / d(x_i - x_j)
    g = np.zeros_like(x)
    I, J = params.spec.index_arrays
    for c, (i, j) in enumerate(zip(I, J)):
        g[:, i] += r[:, c]
        g[:, j] -= r[:, c]
    return g * h[:, None]

"""Gaussian comparison for smooth test functions of sums of independent vectors.

:func:`lindeberg_compare` estimates ``E h(sum_j X^(j))`` and ``E h(sum_j Z^(j))``
from common uniforms and checks the ratio against the relative window
``exp(+-12 m C3 eps^3)``; the absolute error budget of the replacement
argument is reported beside it.

:func:`ordering_probability_bounds` applies the smooth sandwich to a race:
``E h^-(Z) <~ P(X in R(S)) <~ E h^+(Z)`` with ``Z`` Gaussian of the race's
correlation matrix.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtri
from scipy.stats import binom

from .covariance import CovarianceModel, covariance_model_exact
from .errors import HypothesisWarning
from .model import (ExactSampler, GaussianSampler, MCEstimate, OrderingSpec)
from .residues import RaceTuple, c_shift, euler_phi
from .rng import SHARD_SIZE, shard_plan, stream
from .smooth import SmoothTestParams, derivative_ratio_constants, h_eval
from .zeros import ZeroRepository


# ---------------------------------------------------------------- summands

def _standardized(kind: str):
    """Map uniforms to a mean-zero, variance-one law; returns (ppf, bound)."""
    if kind == "uniform":
        return (lambda u: math.sqrt(3.0) * (2.0 * u - 1.0)), math.sqrt(3.0)
    if kind == "rademacher":
        return (lambda u: np.where(u < 0.5, -1.0, 1.0)), 1.0
    if kind.startswith("bernoulli:"):
        p = float(kind.split(":", 1)[1])
        if not 0 < p < 1:
            raise ValueError("bernoulli parameter must lie in (0, 1)")
        s = math.sqrt(p * (1 - p))
        return (lambda u: np.where(u < p, (1 - p) / s, -p / s)), max(1 - p, p) / s
    if kind == "gaussian":
        return ndtri, math.inf
    raise ValueError(f"unknown summand law {kind!r}")


@dataclass(frozen=True)
class SummandFamily:
    """``m`` iid summands with independent coordinates of the given laws, each scaled by ``1/sqrt(m)``."""

    m: int
    laws: tuple[str, ...]

    def __post_init__(self):
        if self.m < 1 or not self.laws:
            raise ValueError("need m >= 1 and at least one coordinate")
        for k in self.laws:
            _standardized(k)

    @property
    def n(self) -> int:
        return len(self.laws)

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.m)

    @property
    def cov(self) -> np.ndarray:
        """Per-summand covariance ``r(j)``."""
        return np.eye(self.n) / self.m

    @property
    def bound(self) -> float:
        return max(_standardized(k)[1] for k in self.laws) * self.scale

    def transform(self, u: np.ndarray) -> np.ndarray:
        """Summand values from uniforms of shape ``(..., n)``."""
        out = np.empty_like(u)
        for i, k in enumerate(self.laws):
            out[..., i] = _standardized(k)[0](u[..., i])
        return out * self.scale

    def gaussian(self, u: np.ndarray) -> np.ndarray:
        return ndtri(u) * self.scale

    @property
    def lattice(self) -> bool:
        """True when every coordinate sum is a rescaled binomial, so sums can be drawn directly."""
        return all(k == "rademacher" or k.startswith("bernoulli:") for k in self.laws)

    def _sum_tables(self):
        out = []
        for k in self.laws:
            p = 0.5 if k == "rademacher" else float(k.split(":", 1)[1])
            K = np.arange(self.m + 1)
            cdf = np.minimum(binom.cdf(K, self.m, p), 1.0)
            cdf[-1] = 1.0
            vals = (K - self.m * p) / math.sqrt(self.m * p * (1 - p))
            out.append((cdf, vals))
        return out

    def sum_quantiles(self, u: np.ndarray) -> np.ndarray:
        """``sum_j X^(j)`` as the quantile of ``u`` (shape ``(..., n)``), lattice laws only."""
        out = np.empty_like(u)
        for i, (cdf, vals) in enumerate(self._sum_tables()):
            # smallest K with cdf[K] >= u; the 1.0 end makes the index valid
            out[..., i] = vals[np.searchsorted(cdf, u[..., i], side="left")]
        return out

    @property
    def is_gaussian(self) -> bool:
        return all(k == "gaussian" for k in self.laws)

    def tail_moment(self, i: int, thresh: float, eps: float, n: int, grid: int = 200000) -> float:
        """``E 1{|X_i| > thresh} (eps^3 + n^2 |X_i|^3)`` for one summand, by midpoint rule in u."""
        kind = self.laws[i]
        if kind == "gaussian":
            s = self.scale
            return _gauss_tail(thresh, s, eps, n)
        u = (np.arange(grid) + 0.5) / grid
        x = np.abs(_standardized(kind)[0](u) * self.scale)
        return float(np.mean(np.where(x > thresh, eps**3 + n * n * x**3, 0.0)))


def _gauss_tail(thresh: float, s: float, eps: float, n: int) -> float:
    # E 1{|Z| > t}(eps^3 + n^2 |Z|^3) for Z ~ N(0, s^2), closed form
    from scipy.stats import norm
    a = thresh / s
    p = 2 * norm.sf(a)
    m3 = 2 * s**3 * (a * a + 2) * norm.pdf(a)
    return eps**3 * p + n * n * m3


def h_constants(params: SmoothTestParams) -> tuple[float, float]:
    """``(C1, C3)`` with ``|d h| <= C1 h`` and ``|d^3 h| <= C3 h`` coordinatewise.

    Product rule over the factors of ``h``: each factor's ``r``-th derivative is
    at most ``kappa_r / delta^r`` times the factor, and a coordinate touches at
    most ``D = max degree`` factors.
    """
    k1, k2, k3 = derivative_ratio_constants()
    D = max(int(params.spec.degrees().max()) if params.spec.pairs else 0, 1)
    d = params.delta
    C1 = D * k1 / d
    C3 = D**3 * max(k1**3, k1 * k2, k3) / d**3
    return max(C1, 1.0), max(C3, 1.0)


@dataclass
class LindebergReport:
    m: int
    n: int
    eps: float
    C1: float
    C3: float
    delta_bound: float
    eh_X: float
    eh_Z: float
    se_X: float
    se_Z: float
    ratio: float
    ratio_se: float
    budget_X: float
    budget_Z: float
    budget_constant: float
    within: bool
    hypothesis_ok: bool
    N: int
    seed: int
    warnings: list[str] = field(default_factory=list)

    @property
    def budget(self) -> float:
        return self.budget_constant * (self.budget_X + self.budget_Z)

    @property
    def window(self) -> tuple[float, float]:
        return (math.exp(-self.delta_bound) - 3 * self.ratio_se,
                math.exp(self.delta_bound) + 3 * self.ratio_se)

    @property
    def deviation(self) -> float:
        return abs(self.ratio - 1.0)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["budget"] = self.budget
        d["window"] = list(self.window)
        return d


def eps_cap(C1: float, C3: float, m: int) -> float:
    return min(1.0 / (2 * C1), 1.0 / (3 * C3 ** (1 / 3) * m ** (1 / 3)))


def lindeberg_compare(summands: SummandFamily, params: SmoothTestParams, eps: float | None,
                      N: int, seed: int, constants: tuple[float, float] | None = None,
                      budget_constant: float = 1.0, threads: int = 1,
                      rows: int = 2048, coupling: str = "quantile") -> LindebergReport:
    """Monte Carlo comparison of ``E h`` on the sum and on its Gaussian twin.

    ``eps=None`` takes the largest value the hypotheses allow.  Both sides are
    driven by the same uniforms: with ``coupling="quantile"`` and lattice laws
    each coordinate sum is the binomial quantile of one uniform and its Gaussian
    partner the normal quantile of the same uniform (cost independent of ``m``);
    otherwise every summand is coupled to its own Gaussian.  The ratio's
    standard error comes from the paired draws.  ``within`` tests the ratio
    against ``exp(+-delta_bound)`` widened by three standard errors; the
    absolute error budget is reported next to it.
    """
    m, n = summands.m, summands.n
    if params.spec.n != n:
        raise ValueError("test function dimension differs from the summands")
    C1, C3 = constants if constants is not None else h_constants(params)
    cap = eps_cap(C1, C3, m)
    eps = cap if eps is None else float(eps)
    msgs = []
    ok = 0 < eps <= cap
    if not ok:
        msgs.append(f"eps = {eps:.4g} outside (0, {cap:.4g}]")
        warnings.warn(msgs[-1], HypothesisWarning, stacklevel=2)
    delta_bound = 12 * m * C3 * eps**3

    gauss = summands.is_gaussian
    lattice = summands.lattice and coupling == "quantile"
    if coupling not in ("quantile", "summand"):
        raise ValueError("coupling must be 'quantile' or 'summand'")
    plan = shard_plan(N, rows if not lattice else SHARD_SIZE)

    def run(item):
        sid, cnt = item
        rng = stream(seed, sid)
        if lattice:
            # comonotone coupling of the two sums through one uniform per coordinate
            u = rng.random((cnt, n))
            sx = summands.sum_quantiles(u)
            sz = ndtri(u)
        else:
            u = rng.random((cnt, m, n))
            sx = summands.transform(u).sum(axis=1)
            sz = sx if gauss else summands.gaussian(u).sum(axis=1)
        hx = h_eval(params, sx)
        hz = h_eval(params, sz)
        return np.array([hx.sum(), hz.sum(), (hx * hx).sum(), (hz * hz).sum(), (hx * hz).sum()])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, plan))
    else:
        parts = [run(p) for p in plan]
    S = np.zeros(5)
    for p in parts:
        S += p
    ex_, ez = S[0] / N, S[1] / N
    vx = max(S[2] / N - ex_**2, 0.0)
    vz = max(S[3] / N - ez**2, 0.0)
    cxz = S[4] / N - ex_ * ez
    ratio = ex_ / ez if ez > 0 else math.nan
    # delta method on the paired means
    vr = (vx - 2 * ratio * cxz + ratio**2 * vz) / (ez**2) if ez > 0 else math.nan
    ratio_se = math.sqrt(max(vr, 0.0) / N)

    thresh = eps / n
    bX = C3 * m * sum(summands.tail_moment(i, thresh, eps, n) for i in range(n))
    r = np.diag(summands.cov)
    bZ = C3 * m * float(np.sum((eps**3 + n * n * r**1.5) * np.exp(-eps**2 / (2 * n * n * r))))
    rep = LindebergReport(m, n, eps, C1, C3, delta_bound, ex_, ez, math.sqrt(vx / N),
                          math.sqrt(vz / N), ratio, ratio_se, bX, bZ, budget_constant,
                          False, ok, int(N), int(seed), msgs)
    lo, hi = rep.window
    rep.within = bool(lo <= ratio <= hi)
    return rep


# ---------------------------------------------------------------- race sandwich

@dataclass
class SandwichDiagnostics:
    q: int
    n: int
    delta: float
    shifts: list[float]
    shift_limit: float
    shifts_ok: bool
    n_ok: bool
    delta_range: tuple[float, float]
    delta_ok: bool
    band_constant: float
    band: float
    error_exponent: float
    var: float
    violations: list[str]
    exact: MCEstimate | None = None
    centered: bool = True

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["exact"] = self.exact.to_dict() if self.exact is not None else None
        d["delta_range"] = list(self.delta_range)
        return d


def _mean_estimate(values_sum: float, sq_sum: float, N: int, seed: int, nstreams: int,
                   spec: OrderingSpec, q: int | None) -> MCEstimate:
    mu = values_sum / N
    sd = math.sqrt(max(sq_sum / N - mu * mu, 0.0))
    return MCEstimate(mu, int(N), 0, int(seed), (0, nstreams), spec.kind, spec.n, spec.k, q, sd)


def sandwich_bounds(model: CovarianceModel, spec: OrderingSpec, delta: float, N: int, seed: int,
                    threads: int = 1, shard_size: int = 1 << 15) -> tuple[MCEstimate, MCEstimate]:
    """``E h^-_{S,delta}(Z)`` and ``E h^+_{S,delta}(Z)`` from the same Gaussian draws."""
    lo_p = SmoothTestParams(delta, spec, -1)
    hi_p = SmoothTestParams(delta, spec, +1)
    g = GaussianSampler(model)
    plan = shard_plan(N, shard_size)

    def run(item):
        sid, cnt = item
        z = g.sample(stream(seed, sid), cnt)
        a = h_eval(lo_p, z)
        b = h_eval(hi_p, z)
        return np.array([a.sum(), (a * a).sum(), b.sum(), (b * b).sum()])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, plan))
    else:
        parts = [run(p) for p in plan]
    S = np.sum(parts, axis=0)
    return (_mean_estimate(S[0], S[1], N, seed, len(plan), spec, g.q),
            _mean_estimate(S[2], S[3], N, seed, len(plan), spec, g.q))


def ordering_probability_bounds(race: RaceTuple, repo: ZeroRepository, spec: OrderingSpec,
                                delta: float | None, N: int, seed: int, band_constant: float = 1.0,
                                with_exact: bool = False, exact_height: float | None = None,
                                centered: bool = True, threads: int = 1,
                                shard_size: int = 1 << 15):
    """``(E h^-_{S,delta}(Z), E h^+_{S,delta}(Z), diagnostics)`` on common Gaussian draws.

    ``delta=None`` uses ``1/(n log q)^5``.  With ``with_exact`` the exact-model
    probability ``P(X in R(S))`` is estimated as well (stream offset by the
    Gaussian shard count); ``centered`` drops the shifts as the reduction does.
    """
    q, n = race.q, race.n
    lq = math.log(q)
    if delta is None:
        delta = 1.0 / (n * lq) ** 5
    model = covariance_model_exact(race, repo)
    phi = euler_phi(q)
    sd = math.sqrt(model.var)
    shifts = [c_shift(q, a) / sd for a in race.contestants]
    limit = math.sqrt(delta) / 4
    d_lo = (n**5 * lq / math.sqrt(phi)) ** (1 / 3)
    d_hi = 1.0 / math.log(n) ** 2 if n > 1 else math.inf
    viol = []
    n_ok = 2 <= n <= phi ** (1 / 12)
    if not n_ok:
        viol.append(f"n = {n} outside [2, phi(q)^(1/12) = {phi ** (1 / 12):.4g}]")
    delta_ok = d_lo <= delta <= d_hi
    if not delta_ok:
        viol.append(f"delta = {delta:.4g} outside [{d_lo:.4g}, {d_hi:.4g}]")
    shifts_ok = all(abs(D) <= limit for D in shifts)
    if not shifts_ok:
        viol.append(f"max |D_i| = {max(abs(D) for D in shifts):.4g} exceeds sqrt(delta)/4 = {limit:.4g}")
    for v in viol:
        warnings.warn(v, HypothesisWarning, stacklevel=2)

    lower, upper = sandwich_bounds(model, spec, delta, N, seed, threads, shard_size)

    exact = None
    if with_exact:
        xs = ExactSampler(race, repo, exact_height=exact_height, center=centered)
        # offset streams so the exact draws are independent of the Gaussian ones
        eplan = shard_plan(N, shard_size)
        off = len(eplan)

        def run_x(item):
            sid, cnt = item
            return int(np.count_nonzero(spec.contains(xs.sample(stream(seed, off + sid), cnt))))

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                tot = sum(ex.map(run_x, eplan))
        else:
            tot = sum(run_x(p) for p in eplan)
        exact = MCEstimate(tot / N, int(N), tot, int(seed), (off, off + len(eplan)),
                           spec.kind, n, spec.k, q)

    expo = delta**2 * phi ** (1 / 3) / (n**4 * lq ** (2 / 3))
    diag = SandwichDiagnostics(q, n, delta, shifts, limit, shifts_ok, n_ok, (d_lo, d_hi), delta_ok,
                               band_constant, band_constant / lq, expo, model.var, viol, exact,
                               centered)
    return lower, upper, diag

"""Gaussian densities of the race vector, a small-n quadrature oracle, tail bounds
and the bias predictors.

The structured density drops the perturbation ``E`` and the ``1/(1 - xi^2)``
corrections of the block model ``A`` and carries them as an error band in the
exponent:

    log f(x) = -n/2 log(2 pi) + xi sum_j x_{2j-1} x_{2j} - |x_{2k}|^2/2 - |x^{n-2k}|^2/2 +- band
    band     = c_q (|x_{2k}|^2/2 + k) / log^2 q + c_e eps n (|x|^2/2 + 1)
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from graphlib import TopologicalSorter

import numpy as np
from scipy import integrate
from scipy.special import ndtr, ndtri

from .covariance import CovarianceModel, covariance_model_synthetic
from .errors import DimensionTooLarge, HypothesisWarning
from .model import GaussianSampler, MCEstimate, OrderingSpec, make_ordering
from .rng import SHARD_SIZE, shard_plan, stream
from .smooth import SmoothTestParams, h_eval

LOG2 = math.log(2.0)
QUAD_MAX_N = 4
TRUNC = 8.0
_PHI0 = 1.0 / math.sqrt(2 * math.pi)
_GL_ORDER = 20
_PANELS = 8


@dataclass(frozen=True)
class DensityModel:
    """Density view of a correlation model.

    ``log_q`` comes from the race when there is one; for synthetic models it is
    set so that ``xi = -log 2 / log q`` (infinite when ``xi = 0``, which turns the
    ``log q`` error terms off).
    """

    model: CovarianceModel
    log_q: float | None = None

    def __post_init__(self):
        if self.log_q is None:
            if self.model.race is not None:
                lq = math.log(self.model.race.q)
            elif self.model.xi != 0:
                lq = LOG2 / abs(self.model.xi)
            else:
                lq = math.inf
            object.__setattr__(self, "log_q", lq)

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def k(self) -> int:
        return self.model.k

    @property
    def xi(self) -> float:
        return self.model.xi

    @property
    def eps(self) -> float:
        return self.model.eps

    @cached_property
    def C_inv(self) -> np.ndarray:
        L = self.model.factor
        Li = np.linalg.solve(L, np.eye(self.n))
        return Li.T @ Li

    @cached_property
    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.model.factor))))

    @property
    def det(self) -> float:
        return math.exp(self.log_det)


def density_model(model: CovarianceModel, log_q: float | None = None) -> DensityModel:
    return DensityModel(model, log_q)


def _rows(dm: DensityModel, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    scalar = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != dm.n:
        raise ValueError(f"expected points of dimension {dm.n}")
    return x, scalar


def log_density_exact(dm: DensityModel, x):
    x, scalar = _rows(dm, x)
    qf = np.einsum("mi,ij,mj->m", x, dm.C_inv, x)
    v = -0.5 * dm.n * math.log(2 * math.pi) - 0.5 * dm.log_det - 0.5 * qf
    return float(v[0]) if scalar else v


def density_exact(dm: DensityModel, x):
    """Multivariate normal density with correlation ``C`` at ``x`` (one point or rows)."""
    v = np.exp(log_density_exact(dm, x))
    return float(v) if np.ndim(v) == 0 else v


@dataclass(frozen=True)
class StructuredDensity:
    value: float | np.ndarray
    lower: float | np.ndarray
    upper: float | np.ndarray
    log_band: float | np.ndarray


def density_structured(dm: DensityModel, x, c_q: float = 1.0, c_eps: float = 1.0) -> StructuredDensity:
    """Main-term density from the block structure with its multiplicative error band."""
    n, k, xi, eps = dm.n, dm.k, dm.xi, dm.eps
    if abs(xi) > 0.5:
        warnings.warn(f"|xi| = {abs(xi):.4g} > 1/2", HypothesisWarning, stacklevel=2)
    if eps > 1.0 / (4 * n):
        warnings.warn(f"eps = {eps:.4g} > 1/(4n) = {1 / (4 * n):.4g}", HypothesisWarning, stacklevel=2)
    x, scalar = _rows(dm, x)
    head, rest = x[:, :2 * k], x[:, 2 * k:]
    pair = np.sum(head[:, 0::2] * head[:, 1::2], axis=1) if k else np.zeros(x.shape[0])
    h2 = np.sum(head * head, axis=1)
    r2 = np.sum(rest * rest, axis=1)
    logv = -0.5 * n * math.log(2 * math.pi) + xi * pair - 0.5 * h2 - 0.5 * r2
    inv2 = 0.0 if math.isinf(dm.log_q) else 1.0 / dm.log_q**2
    band = c_q * (0.5 * h2 + k) * inv2 + c_eps * eps * n * (0.5 * (h2 + r2) + 1.0)
    val, lo, hi = np.exp(logv), np.exp(logv - band), np.exp(logv + band)
    if scalar:
        return StructuredDensity(float(val[0]), float(lo[0]), float(hi[0]), float(band[0]))
    return StructuredDensity(val, lo, hi, band)


def total_mass(dm: DensityModel, panels: int = 16, order: int = 8) -> float:
    """``int density_exact`` over the ``+-8`` box by tensor Gauss-Legendre (``n <= 3``)."""
    if dm.n > 3:
        raise DimensionTooLarge("total_mass supports n <= 3")
    g, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(-TRUNC, TRUNC, panels + 1)
    half = 0.5 * np.diff(edges)
    nodes = ((edges[:-1] + edges[1:])[:, None] * 0.5 + half[:, None] * g).ravel()
    wts = (half[:, None] * w).ravel()
    grids = np.meshgrid(*([nodes] * dm.n), indexing="ij")
    W = np.ones_like(grids[0])
    for G in np.meshgrid(*([wts] * dm.n), indexing="ij"):
        W = W * G
    pts = np.stack([G.ravel() for G in grids], axis=1)
    return float(np.dot(W.ravel(), density_exact(dm, pts)))


# ---------------------------------------------------------------- quadrature oracle

def _topo_order(spec: OrderingSpec) -> list[int]:
    ts = TopologicalSorter({v: set() for v in range(spec.n)})
    for i, j in spec.pairs:
        ts.add(j - 1, i - 1)
    return list(ts.static_order())


def ordering_quadrature(dm: DensityModel, spec: OrderingSpec,
                        bounds: dict[int, tuple[float, float]] | None = None,
                        epsabs: float = 1e-7) -> float:
    """``P(Z in R(S))`` (optionally intersected with coordinate bounds) by nested quadrature.

    Coordinates are visited in a topological order of the constraints and
    written as ``x = L w`` with ``L`` the Cholesky factor, ``w`` standard.  At
    each level the constraints reaching back to earlier coordinates give an
    interval for ``w_i`` (clipped to ``+-8``), integrated against the standard
    normal weight with adaptive Gauss-Kronrod.  The last coordinate is closed
    form, and the one before it uses panelled Gauss-Legendre split where the
    last coordinate's (affine) bounds cross.  ``bounds`` maps 1-based coordinates to ``(lo, hi)``.
    """
    n = dm.n
    if n > QUAD_MAX_N:
        raise DimensionTooLarge(f"quadrature oracle supports n <= {QUAD_MAX_N}, got {n}")
    if spec.n != n:
        raise ValueError("spec dimension differs from the model")
    order = _topo_order(spec)
    pos = {v: p for p, v in enumerate(order)}
    C = np.asarray(dm.model.C)[np.ix_(order, order)]
    L = np.linalg.cholesky(C)
    lowers: list[list[int]] = [[] for _ in range(n)]   # x_p > x_r for r earlier
    uppers: list[list[int]] = [[] for _ in range(n)]   # x_p < x_r
    for i, j in spec.pairs:
        a, b = pos[i - 1], pos[j - 1]
        if a > b:
            lowers[a].append(b)
        else:
            uppers[b].append(a)
    box = [(-math.inf, math.inf)] * n
    for c, (lo, hi) in (bounds or {}).items():
        box[pos[c - 1]] = (float(lo), float(hi))
    tol = epsabs / max(n - 1, 1)

    def interval(p, xs, s):
        d = L[p, p]
        lo = max([(xs[r] - s) / d for r in lowers[p]] + [(box[p][0] - s) / d, -TRUNC])
        hi = min([(xs[r] - s) / d for r in uppers[p]] + [(box[p][1] - s) / d, TRUNC])
        return lo, hi

    gl_x, gl_w = np.polynomial.legendre.leggauss(_GL_ORDER)
    last = n - 1

    def pair_level(p, ws, xs):
        # levels p = n-2 and n-1: bounds of the last coordinate are affine in w_p,
        # so the integrand is smooth between computable breakpoints
        s = float(np.dot(L[p, :p], ws)) if p else 0.0
        lo, hi = interval(p, xs, s)
        if hi <= lo:
            return 0.0
        d = L[last, last]
        c = float(np.dot(L[last, :p], ws)) if p else 0.0
        b = L[last, p]
        up = [(TRUNC, 0.0), ((box[last][1] - c) / d, -b / d)]
        dn = [(-TRUNC, 0.0), ((box[last][0] - c) / d, -b / d)]
        for lst, refs in ((up, uppers[last]), (dn, lowers[last])):
            for r in refs:
                if r == p:
                    lst.append(((s - c) / d, (L[p, p] - b) / d))
                else:
                    lst.append(((xs[r] - c) / d, -b / d))
        up = [t for t in up if math.isfinite(t[0])]
        dn = [t for t in dn if math.isfinite(t[0])]
        lines = up + dn
        cuts = {lo, hi}
        cuts.update(np.linspace(lo, hi, _PANELS + 1)[1:-1].tolist())
        for i in range(len(lines)):
            for j in range(i + 1, len(lines)):
                (a1, b1), (a2, b2) = lines[i], lines[j]
                if b1 != b2:
                    w = (a2 - a1) / (b1 - b2)
                    if lo < w < hi:
                        cuts.add(w)
        e = np.array(sorted(cuts))
        half = 0.5 * np.diff(e)
        w = ((e[:-1] + e[1:])[:, None] * 0.5 + half[:, None] * gl_x).ravel()
        wt = (half[:, None] * gl_w).ravel()
        A_up, B_up = np.array(up).T
        A_dn, B_dn = np.array(dn).T
        h_ = np.min(A_up[:, None] + B_up[:, None] * w, axis=0)
        l_ = np.max(A_dn[:, None] + B_dn[:, None] * w, axis=0)
        inner = np.where(h_ > l_, ndtr(h_) - ndtr(l_), 0.0)
        return float(np.dot(wt, _PHI0 * np.exp(-0.5 * w * w) * inner))

    def level(p, ws, xs):
        if p == n - 2:
            return pair_level(p, ws, xs)
        s = float(np.dot(L[p, :p], ws)) if p else 0.0
        lo, hi = interval(p, xs, s)
        if hi <= lo:
            return 0.0

        def f(w):
            return _PHI0 * math.exp(-0.5 * w * w) * level(p + 1, ws + [w], xs + [s + L[p, p] * w])

        val, _ = integrate.quad(f, lo, hi, epsabs=tol, epsrel=0.0, limit=200)
        return val

    if n == 1:
        lo, hi = interval(0, [], 0.0)
        return float(max(ndtr(hi) - ndtr(lo), 0.0)) if hi > lo else 0.0
    return max(level(0, [], []), 0.0)


# ---------------------------------------------------------------- bias predictors

def bias_factor(log_q: float, n: int, k: int, sign: int) -> float:
    """``exp(sign * k log(n/k) / (2 log q))``."""
    if not (1 <= k and 2 * k <= n) and k != n:
        raise ValueError("need 1 <= k <= n/2")
    if not log_q > 0:
        raise ValueError("log_q must be positive")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return math.exp(sign * k * math.log(n / k) / (2 * log_q))


def race_bias_factor(log_q: float, n: int, phi: int, sign: int, C: float = 1.0) -> float:
    """``exp(sign * min(n, phi^(1/50)) / (C log q))``, the full-race deviation factor."""
    if not log_q > 0 or not C > 0:
        raise ValueError("log_q and C must be positive")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return math.exp(sign * min(n, phi ** (1 / 50)) / (C * log_q))


# ---------------------------------------------------------------- tails

@dataclass
class TailEvent:
    threshold: float
    exceedances: int
    frequency: float
    log_bound: float
    bound: float
    ok: bool


@dataclass
class TailReport:
    n: int
    k: int
    log_q: float
    N: int
    seed: int
    c_n: float
    c_k: float
    rest: TailEvent
    head: TailEvent

    @property
    def ok(self) -> bool:
        return self.rest.ok and self.head.ok

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["rest"], d["head"] = self.rest.__dict__, self.head.__dict__
        d["ok"] = self.ok
        return d


def tail_log_bound(n: int, log_q: float, size: int, c: float = 1.0) -> float:
    """``-3 size log(n Q) + c size`` with ``Q = log q``."""
    return -3 * size * math.log(n * log_q) + c * size


def tail_check(dm: DensityModel, k: int | None = None, N: int = 10**6, seed: int = 0,
               log_q: float | None = None, c_n: float = 1.0, c_k: float = 1.0,
               threads: int = 1, shard_size: int = SHARD_SIZE) -> TailReport:
    """Monte Carlo frequencies of the two quadratic-form tail events and their bounds."""
    n = dm.n
    k = dm.k if k is None else int(k)
    Q = dm.log_q if log_q is None else float(log_q)
    if not math.isfinite(Q):
        raise ValueError("tail bounds need a finite log q; pass log_q")
    t_rest = 10 * n * math.log(n * Q)
    t_head = 10 * k * math.log(n * Q)
    g = GaussianSampler(dm.model)

    def run(item):
        sid, m = item
        z = g.sample(stream(seed, sid), m)
        r = np.sum(z[:, 2 * k:] ** 2, axis=1)
        h = np.sum(z[:, :2 * k] ** 2, axis=1)
        return int(np.count_nonzero(r > t_rest)), int(np.count_nonzero(h > t_head))

    plan = shard_plan(N, shard_size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, plan))
    else:
        parts = [run(p) for p in plan]
    er, eh = sum(p[0] for p in parts), sum(p[1] for p in parts)

    def event(t, e, size, c):
        lb = tail_log_bound(n, Q, size, c)
        b = math.exp(lb)
        return TailEvent(t, e, e / N, lb, b, e / N <= b)

    return TailReport(n, k, Q, int(N), int(seed), c_n, c_k,
                      event(t_rest, er, n, c_n), event(t_head, eh, k, c_k))


# ---------------------------------------------------------------- smoothing oracles

@dataclass
class SmoothingReport:
    n: int
    k: int
    delta: float
    baseline: float
    upper: MCEstimate          # E h^+_{S,delta}(W)
    lower: MCEstimate          # E h^-_{S#,delta}(W)
    upper_ratio: float
    lower_ratio: float
    upper_limit: float         # 1 + c1 sqrt(delta log(1/delta) k^4 log n)
    lower_limit: float         # 1 - c2 n^2 sqrt(delta)
    upper_ok: bool
    lower_ok: bool
    ordered: bool              # E h^-_S <= E h^+_S draw by draw
    hypothesis_ok: bool
    c1: float = 1.0
    c2: float = 1.0
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["upper"], d["lower"] = self.upper.to_dict(), self.lower.to_dict()
        return d


def smoothing_oracle_check(n: int, k: int, delta: float, N: int, seed: int,
                           c1: float = 1.0, c2: float = 1.0, threads: int = 1,
                           shard_size: int = SHARD_SIZE) -> SmoothingReport:
    """Smoothed ordering expectations under independent standard ``W`` against ``(n-2k)!/n!``.

    Both statistics are computed on the same draws (``W`` for shard ``s`` comes
    from stream ``s``).  The upper window is one-sided above, the lower one-sided
    below; each is also widened by three standard errors.
    """
    S = make_ordering("S_2k", n, k)
    Ssh = make_ordering("S_2k_sharp", n, k)
    msgs = []
    cap = 1.0 / (5 * k**5 * math.log(n) ** 2)
    ok = 0 < delta <= cap
    if not ok:
        msgs.append(f"delta = {delta:.4g} exceeds 1/(5 k^5 log^2 n) = {cap:.4g}")
        warnings.warn(msgs[-1], HypothesisWarning, stacklevel=2)
    hp = SmoothTestParams(delta, S, +1)
    hm = SmoothTestParams(delta, S, -1)
    hs = SmoothTestParams(delta, Ssh, -1)

    def run(item):
        sid, m = item
        w = stream(seed, sid).standard_normal((m, n))
        a, b, c = h_eval(hp, w), h_eval(hs, w), h_eval(hm, w)
        return np.array([a.sum(), (a * a).sum(), b.sum(), (b * b).sum(),
                         float(np.count_nonzero(c > a * (1 + 1e-12) + 1e-300))])

    plan = shard_plan(N, shard_size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, plan))
    else:
        parts = [run(p) for p in plan]
    T = np.sum(parts, axis=0)

    def est(s, s2, spec):
        mu = s / N
        sd = math.sqrt(max(s2 / N - mu * mu, 0.0))
        return MCEstimate(mu, int(N), 0, int(seed), (0, len(plan)), spec.kind, n, k, None, sd)

    up, lo = est(T[0], T[1], S), est(T[2], T[3], Ssh)
    base = math.factorial(n - 2 * k) / math.factorial(n)
    ul = 1 + c1 * math.sqrt(delta * math.log(1 / delta) * k**4 * math.log(n))
    ll = 1 - c2 * n * n * math.sqrt(delta)
    return SmoothingReport(n, k, delta, base, up, lo, up.estimate / base, lo.estimate / base,
                           ul, ll, up.estimate - 3 * up.stderr <= ul * base,
                           lo.estimate + 3 * lo.stderr >= ll * base, T[4] == 0, ok, c1, c2, msgs)


# ---------------------------------------------------------------- bias direction

@dataclass
class BiasComparison:
    kind: str
    estimate: MCEstimate
    baseline: MCEstimate
    exact_baseline: float
    ratio: float
    combined_sd: float
    z: float
    predicted_factor: float | None = None

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["estimate"], d["baseline"] = self.estimate.to_dict(), self.baseline.to_dict()
        return d


def bias_verify(n: int, k: int, xi: float, N: int, seed: int, threads: int = 1,
                shard_size: int = SHARD_SIZE) -> list[BiasComparison]:
    """``S_2k`` and ``S_2k_sharp`` frequencies under the block model versus ``xi = 0``.

    The two models are sampled from the same seed.  ``z`` is the difference over
    the combined standard error ``sqrt(s_1^2 + s_0^2)``; the predicted factor is
    ``exp(+-xi k log(n/k))`` (minus for ``S_2k``).
    """
    from .model import estimate_many
    specs = [make_ordering("S_2k", n, k), make_ordering("S_2k_sharp", n, k)]
    biased = GaussianSampler(covariance_model_synthetic(n, k, xi))
    flat = GaussianSampler(covariance_model_synthetic(n, k, 0.0))
    e1 = estimate_many(biased, specs, N, seed, threads, shard_size)
    e0 = estimate_many(flat, specs, N, seed, threads, shard_size)
    exact = math.factorial(n - 2 * k) / math.factorial(n)
    out = []
    for s, a, b, sign in zip(specs, e1, e0, (1, -1)):
        sd = math.hypot(a.stderr, b.stderr)
        pred = math.exp(sign * xi * k * math.log(n / k))
        out.append(BiasComparison(s.kind, a, b, exact, a.estimate / b.estimate if b.estimate else math.nan,
                                  sd, (a.estimate - b.estimate) / sd if sd > 0 else math.nan, pred))
    return out

"""Variance, pair correlations and the normalized covariance model of a race.

With ``w_chi = sum_{gamma > 0} 1/(1/4 + gamma^2)`` taken from the zero sets,

    Var(q)    = 2 sum_{chi != chi_0} w_chi
    B_q(a, b) = sum_{chi != chi_0} (chi(b/a) + chi(a/b)) w_chi

and the normalized matrix is ``C = B / Var`` with unit diagonal.  Sums use the
zeros up to the stored height; the analytic tail beyond it is reported next to
every quantity but never folded in, so that ``C`` matches what the truncated
sampler actually produces.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from .characters import character_group
from .errors import HypothesisWarning, MissingCharacter, NotPositiveDefinite
from .residues import Modulus, RaceTuple, ResidueClass, euler_phi
from .zeros import ZeroRepository, weighted_zero_sum


@dataclass(frozen=True)
class CharacterWeights:
    """Per-character weighted zero sums for one modulus (principal excluded)."""

    q: int
    exponents: np.ndarray   # (n_chars, q) exponent tables, -1 off units
    group_exponent: int
    head: np.ndarray        # w_chi from ordinates up to the height
    tail: np.ndarray        # analytic estimate beyond the height
    labels: tuple           # primitive inducer labels

    def values(self, a: int) -> np.ndarray:
        e = self.exponents[:, int(a) % self.q]
        return np.exp(2j * np.pi * e / self.group_exponent)


def character_weights(q: int, repo: ZeroRepository, density_scale: float = 1.0) -> CharacterWeights:
    q = int(q.q if isinstance(q, Modulus) else q)
    g = character_group(q)
    chars = [c for c in g if not c.is_principal]
    if not chars:
        raise MissingCharacter(f"no non-principal characters mod {q}")
    head, tail, labels = [], [], []
    for c in chars:
        zs = repo.get(c)
        h, t = weighted_zero_sum(zs, density_scale)
        head.append(h)
        tail.append(t)
        labels.append(zs.label)
    return CharacterWeights(q, np.stack([c.exponents for c in chars]), g.exponent,
                            np.array(head), np.array(tail), tuple(labels))


@dataclass(frozen=True)
class VarianceReport:
    q: int
    head: float
    tail: float

    @property
    def total(self) -> float:
        return self.head + self.tail


def variance_report(q, repo: ZeroRepository, density_scale: float = 1.0) -> VarianceReport:
    w = character_weights(q, repo, density_scale)
    return VarianceReport(w.q, 2.0 * float(w.head.sum()), 2.0 * float(w.tail.sum()))


def variance_q(q, repo: ZeroRepository) -> float:
    """``Var(q)`` from the stored ordinates; see :func:`variance_report` for the tail."""
    return variance_report(q, repo).head


def _units_inverse(a: int, q: int) -> int:
    return pow(int(a), -1, q)


def _b_from_weights(w: CharacterWeights, a: int, b: int, which: str = "head") -> float:
    q = w.q
    r = int(b) * _units_inverse(a, q) % q
    vals = w.values(r)
    weights = w.head if which == "head" else w.tail
    return float(np.sum(2.0 * vals.real * weights))


def b_correlation(a, b, repo: ZeroRepository, q: int | None = None) -> float:
    """``B_q(a, b)``; ``a`` and ``b`` are :class:`ResidueClass` or ints with ``q`` given."""
    if isinstance(a, ResidueClass):
        q = a.modulus.q
        a, b = a.a, (b.a if isinstance(b, ResidueClass) else int(b))
    if q is None:
        raise ValueError("modulus required for integer residues")
    if math.gcd(int(a), q) != 1 or math.gcd(int(b), q) != 1:
        raise ValueError("residues must be units")
    if (int(a) - int(b)) % q == 0:
        raise ValueError("b_correlation needs a != b")
    return _b_from_weights(character_weights(q, repo), a, b)


def block_matrix(n: int, k: int, xi: float) -> np.ndarray:
    """Identity with ``[[1, xi], [xi, 1]]`` blocks on the first ``2k`` coordinates."""
    A = np.eye(n)
    for j in range(k):
        A[2 * j, 2 * j + 1] = A[2 * j + 1, 2 * j] = xi
    return A


def structure_mask(n: int, k: int) -> np.ndarray:
    """True on the off-diagonal entries where ``A`` is zero."""
    m = ~np.eye(n, dtype=bool)
    for j in range(k):
        m[2 * j, 2 * j + 1] = m[2 * j + 1, 2 * j] = False
    return m


@dataclass(frozen=True)
class Factorization:
    lower: np.ndarray | None
    failed_order: int            # 0 on success, else order of the first non-positive leading minor
    leading_minor: float | None  # det of that leading block when failed


def factorize(C: np.ndarray) -> Factorization:
    c, info = lapack.dpotrf(np.array(C, dtype=np.float64, order="F"), lower=1, clean=1)
    if info == 0:
        return Factorization(np.tril(c), 0, None)
    if info < 0:
        raise ValueError("invalid matrix passed to the factorization")
    return Factorization(None, int(info), float(np.linalg.det(C[:info, :info])))


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    C: np.ndarray
    k: int
    xi: float
    eps: float
    provenance: str
    factor: np.ndarray = field(repr=False)
    var: float | None = None
    var_tail: float | None = None
    race: RaceTuple | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.C.shape[0]

    @property
    def A(self) -> np.ndarray:
        return block_matrix(self.n, self.k, self.xi)

    @property
    def E(self) -> np.ndarray:
        return self.C - self.A

    @property
    def det(self) -> float:
        return float(np.prod(np.diag(self.factor)) ** 2)

    def to_dict(self) -> dict:
        d = {"n": self.n, "k": self.k, "xi": self.xi, "eps": self.eps,
             "provenance": self.provenance, "matrix": self.C.tolist(), "det": self.det}
        if self.var is not None:
            d["var_q"] = self.var
            d["var_q_tail_estimate"] = self.var_tail
        if self.race is not None:
            d["race"] = self.race.to_dict()
        d.update(self.meta)
        return d


def _build(C: np.ndarray, k: int, xi: float, provenance: str, **kw) -> CovarianceModel:
    C = 0.5 * (C + C.T)
    np.fill_diagonal(C, 1.0)
    n = C.shape[0]
    fac = factorize(C)
    if fac.lower is None:
        raise NotPositiveDefinite(
            f"leading minor of order {fac.failed_order} is {fac.leading_minor:.6g}; "
            "matrix is not positive definite")
    eps = float(np.max(np.abs(C - block_matrix(n, k, xi)))) if n > 1 else 0.0
    C.setflags(write=False)
    return CovarianceModel(C, k, float(xi), eps, provenance, fac.lower, **kw)


def xi_value(q: int, var: float) -> float:
    """``xi = -phi(q) log 2 / Var(q)``."""
    return -euler_phi(q) * math.log(2) / var


def covariance_model_exact(race: RaceTuple, repo: ZeroRepository,
                           density_scale: float = 1.0) -> CovarianceModel:
    q = race.q
    w = character_weights(q, repo, density_scale)
    var = 2.0 * float(w.head.sum())
    var_tail = 2.0 * float(w.tail.sum())
    a = race.contestants
    n = len(a)
    C = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            C[i, j] = C[j, i] = _b_from_weights(w, a[i], a[j]) / var
    xi = xi_value(q, var)
    return _build(C, race.k, xi, "exact-from-zeros", var=var, var_tail=var_tail, race=race,
                  meta={"zero_height": min(repo.get(l).height for l in set(w.labels)),
                        "density_scale": density_scale})


def covariance_model_synthetic(n: int, k: int, xi: float, eps_noise: float = 0.0,
                               rng=None) -> CovarianceModel:
    """Block model ``A`` plus symmetric uniform noise on the off-structure entries."""
    if not abs(xi) < 1:
        raise ValueError("need |xi| < 1")
    if eps_noise < 0:
        raise ValueError("eps_noise must be non-negative")
    if not 0 <= 2 * k <= n:
        raise ValueError("need 0 <= 2k <= n")
    A = block_matrix(n, k, xi)
    if eps_noise > 0:
        rng = np.random.default_rng(rng)
        noise = rng.uniform(-eps_noise, eps_noise, size=(n, n))
        noise = np.triu(noise, 1)
        noise = noise + noise.T
        A = A + noise * structure_mask(n, k)
    return _build(A, k, xi, "synthetic", meta={"eps_noise": eps_noise})


def covariance_model_from_matrix(C, k: int = 0, xi: float = 0.0) -> CovarianceModel:
    """Wrap an arbitrary correlation matrix; ``eps`` is measured against the ``(k, xi)`` block model."""
    C = np.array(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError("need a square matrix")
    if not np.allclose(np.diag(C), 1.0):
        raise ValueError("diagonal must be 1")
    return _build(C, k, xi, "matrix")


@dataclass(frozen=True)
class PerturbationReport:
    n: int
    xi: float
    eps: float
    det_ratio_deviation: float  # det C / det A - 1
    max_F: float                # max |(C^{-1} - A^{-1})_ij|
    det_bound: float            # c1 * eps * n
    F_bound: float              # 8 eps
    det_ok: bool
    F_ok: bool
    c1: float
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return dict(self.__dict__, warnings=list(self.warnings))


def perturbation_check(model: CovarianceModel, c1: float = 1.0) -> PerturbationReport:
    """Compare ``det C`` and ``C^{-1}`` against the block model ``A``."""
    n, xi, eps = model.n, model.xi, model.eps
    msgs = []
    if abs(xi) > 0.5:
        msgs.append(f"|xi| = {abs(xi):.4g} exceeds 1/2")
    if eps > 1.0 / (4 * n):
        msgs.append(f"eps = {eps:.4g} exceeds 1/(4n) = {1 / (4 * n):.4g}")
    for m in msgs:
        warnings.warn(m, HypothesisWarning, stacklevel=2)
    A = model.A
    det_A = (1.0 - xi * xi) ** model.k
    dev = model.det / det_A - 1.0
    F = np.linalg.inv(model.C) - np.linalg.inv(A)
    maxF = float(np.max(np.abs(F)))
    db, fb = c1 * eps * n, 8.0 * eps
    return PerturbationReport(n, xi, eps, float(dev), maxF, db, fb,
                              bool(abs(dev) <= db + 1e-12), bool(maxF <= fb + 1e-12),
                              c1, tuple(msgs))

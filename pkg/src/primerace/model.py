"""Random-model samplers and Monte Carlo ordering probabilities.

Two samplers share the ``sample(rng, m) -> (m, n)`` interface:

* :class:`GaussianSampler` draws ``Z = L W`` from a :class:`CovarianceModel`.
* :class:`ExactSampler` draws the normalized race vector

      X_i = (-C_q(a_i) + sum_chi Re(2 chi(a_i) S_chi)) / sqrt(Var(q)),
      S_chi = sum_{gamma > 0} U_gamma / sqrt(1/4 + gamma^2),

  with one uniform phase per ordinate of each primitive inducer, shared by
  all contestants of the draw.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from typing import Mapping, Sequence

import numpy as np
from numba import njit

from .characters import character_group
from .covariance import CovarianceModel, character_weights
from .errors import Inadmissible
from .residues import RaceTuple, c_shift
from .rng import SHARD_SIZE, shard_plan, stream
from .zeros import ZeroRepository

KINDS = ("full_chain", "top_chain_k", "S_2k", "S_2k_sharp", "custom")


@dataclass(frozen=True)
class OrderingSpec:
    """Pairs ``(i, j)`` (1-based) meaning coordinate ``i`` exceeds coordinate ``j``."""

    n: int
    pairs: tuple[tuple[int, int], ...]
    kind: str = "custom"
    k: int | None = None

    def __post_init__(self):
        pairs = tuple(sorted({(int(i), int(j)) for i, j in self.pairs}))
        object.__setattr__(self, "pairs", pairs)
        if self.kind not in KINDS:
            raise ValueError(f"unknown ordering kind {self.kind!r}")
        ts = TopologicalSorter({v: set() for v in range(1, self.n + 1)})
        for i, j in pairs:
            if i == j:
                raise Inadmissible(f"diagonal pair {(i, j)}")
            if not (1 <= i <= self.n and 1 <= j <= self.n):
                raise Inadmissible(f"pair {(i, j)} outside 1..{self.n}")
            ts.add(j, i)
        try:
            ts.prepare()
        except CycleError as e:
            raise Inadmissible(f"constraint graph has a cycle: {e.args[1]}") from None

    @property
    def index_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.pairs:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        p = np.array(self.pairs, dtype=np.int64) - 1
        return p[:, 0], p[:, 1]

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=np.int64)
        for i, j in self.pairs:
            d[i - 1] += 1
            d[j - 1] += 1
        return d

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Row-wise membership of ``x`` (shape ``(m, n)``) in the region."""
        x = np.atleast_2d(x)
        I, J = self.index_arrays
        if I.size == 0:
            return np.ones(x.shape[0], dtype=bool)
        return np.all(x[:, I] > x[:, J], axis=1)

    def reversed(self) -> "OrderingSpec":
        return OrderingSpec(self.n, tuple((j, i) for i, j in self.pairs), "custom")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "k": self.k, "pairs": [list(p) for p in self.pairs]}


def make_ordering(kind: str, n: int, k: int | None = None, pairs=None) -> OrderingSpec:
    n = int(n)
    if kind == "full_chain":
        s = [(i, i + 1) for i in range(1, n)]
    elif kind == "top_chain_k":
        if k is None or not 1 <= k <= n:
            raise ValueError("top_chain_k needs 1 <= k <= n")
        s = [(i, i + 1) for i in range(1, k)] + [(k, j) for j in range(k + 1, n + 1)]
    elif kind == "S_2k":
        if k is None or not (1 <= k and 2 * k <= n):
            raise ValueError("S_2k needs 1 <= k <= n/2")
        s = [(i, i + 1) for i in range(1, 2 * k)] + [(2 * k, j) for j in range(2 * k + 1, n + 1)]
    elif kind == "S_2k_sharp":
        if k is None or not (1 <= k and 2 * k <= n):
            raise ValueError("S_2k_sharp needs 1 <= k <= n/2")
        s = ([(2 * i - 1, 2 * i + 1) for i in range(1, k)]
             + [(2 * i + 2, 2 * i) for i in range(1, k)]
             + [(2 * k - 1, j) for j in range(2 * k, n + 1)]
             + [(i, 2 * k) for i in range(2 * k + 1, n + 1)])
    elif kind == "custom":
        if pairs is None:
            raise ValueError("custom ordering needs explicit pairs")
        s = list(pairs)
    else:
        raise ValueError(f"unknown ordering kind {kind!r}")
    return OrderingSpec(n, tuple(s), kind, k)


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    samples: int
    hits: int
    seed: int
    streams: tuple[int, int]  # first and one-past-last stream index
    kind: str = "custom"
    n: int | None = None
    k: int | None = None
    q: int | None = None
    sample_sd: float | None = None  # set for means of non-indicator statistics

    @property
    def stderr(self) -> float:
        if self.sample_sd is not None:
            return self.sample_sd / math.sqrt(self.samples)
        p = self.estimate
        return math.sqrt(max(p * (1 - p), 0.0) / self.samples)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "k": self.k, "q": self.q, "N": self.samples,
                "seed": self.seed, "estimate": self.estimate, "stderr": self.stderr,
                "hits": self.hits, "streams": list(self.streams)}


# ---------------------------------------------------------------- samplers


class GaussianSampler:
    def __init__(self, model: CovarianceModel):
        self.model = model
        self.n = model.n
        self.q = model.race.q if model.race is not None else None

    def sample(self, rng: np.random.Generator, m: int) -> np.ndarray:
        W = rng.standard_normal((m, self.n))
        return W @ self.model.factor.T


def sample_Z(model: CovarianceModel, rng: np.random.Generator) -> np.ndarray:
    return GaussianSampler(model).sample(rng, 1)[0]


@dataclass(frozen=True, eq=False)
class PhaseAssignment:
    """Unit phases ``U(gamma)`` per primitive label, aligned with the stored ordinates."""

    phases: Mapping[tuple[int, int], np.ndarray]

    def __post_init__(self):
        for lab, u in self.phases.items():
            if not np.allclose(np.abs(u), 1.0, atol=1e-12):
                raise ValueError(f"phases for {lab} are not on the unit circle")

    @classmethod
    def draw(cls, repo: ZeroRepository, labels, rng: np.random.Generator) -> "PhaseAssignment":
        out = {}
        for lab in sorted(set(labels)):
            g = repo.get(lab).ordinates
            out[lab] = np.exp(2j * np.pi * rng.random(g.size))
        return cls(out)

    @classmethod
    def constant(cls, repo: ZeroRepository, labels, value: complex = 1.0) -> "PhaseAssignment":
        return cls({lab: np.full(repo.get(lab).count, complex(value)) for lab in sorted(set(labels))})


_TABLE_BITS = 10
_ANG = 2.0 * np.pi * np.arange(1 << _TABLE_BITS) / (1 << _TABLE_BITS)
_COS = np.cos(_ANG)
_SIN = np.sin(_ANG)


@njit(cache=True)
def _phase_sums(raw, r, offsets, ctab, stab, out_re, out_im):
    # Each 64-bit word gives two 32-bit phases 2 pi w / 2^32.  cos/sin come from a
    # table at the top bits and a Taylor correction (|d| < 2 pi / 1024) for the rest.
    m = raw.shape[0]
    nc = offsets.shape[0] - 1
    shift = 32 - 10
    mask = (1 << shift) - 1
    scale = 2.0 * math.pi / 4294967296.0
    for s in range(m):
        row = raw[s]
        for c in range(nc):
            a = 0.0
            b = 0.0
            for g in range(offsets[c], offsets[c + 1]):
                w = row[g >> 1]
                v = (w >> np.uint64(32)) if g & 1 else (w & np.uint64(0xFFFFFFFF))
                v = np.int64(v)
                i = v >> shift
                d = (v & mask) * scale
                d2 = d * d
                cd = 1.0 - d2 * (0.5 - d2 * (1.0 / 24.0 - d2 / 720.0))
                sd = d * (1.0 - d2 * (1.0 / 6.0 - d2 * (1.0 / 120.0 - d2 / 5040.0)))
                ci = ctab[i]
                si = stab[i]
                a += r[g] * (ci * cd - si * sd)
                b += r[g] * (si * cd + ci * sd)
            out_re[s, c] += a
            out_im[s, c] += b


class ExactSampler:
    """Draws of the normalized race vector from random phases on the zeros.

    Ordinates above ``exact_height`` (when given) are not phased one by one:
    their contribution to each ``S_chi`` is a circular complex Gaussian with the
    same variance ``sum 1/(1/4 + gamma^2)``, which keeps every second moment of
    the vector unchanged.  ``center=True`` drops the shifts ``-C_q(a)``.
    """

    def __init__(self, race: RaceTuple, repo: ZeroRepository, exact_height: float | None = None,
                 center: bool = False, chunk: int = 8192):
        self.race = race
        self.q = q = race.q
        self.n = race.n
        self.center = center
        self.exact_height = exact_height
        self.chunk = chunk
        w = character_weights(q, repo)
        self.var = 2.0 * float(w.head.sum())
        self.var_tail = 2.0 * float(w.tail.sum())
        chars = [c for c in character_group(q) if not c.is_principal]
        # the random series are keyed by primitive label; each label occurs once per modulus
        self.labels = list(w.labels)
        sd = math.sqrt(self.var)
        a = np.array(race.contestants)
        self.coef = np.stack([2.0 * c.table[a % q] for c in chars]) / sd   # (chars, n)
        self.shift = np.zeros(self.n) if center else \
            np.array([-c_shift(q, x) for x in race.contestants], dtype=np.float64) / sd
        r, offsets, tail_var = [], [0], []
        for lab in self.labels:
            g = repo.get(lab).ordinates
            k = g.size if exact_height is None else int(np.searchsorted(g, exact_height, side="right"))
            rr = 1.0 / np.sqrt(0.25 + g * g)
            r.append(rr[:k])
            offsets.append(offsets[-1] + k)
            tail_var.append(float(np.sum(rr[k:] ** 2)))
        self.r = np.concatenate(r) if r else np.zeros(0)
        self.offsets = np.array(offsets, dtype=np.int64)
        self.tail_sd = np.sqrt(np.array(tail_var) / 2.0)
        self.n_exact = int(self.r.size)
        self._gauss = bool(np.any(self.tail_sd > 0))

    def series(self, rng: np.random.Generator, m: int) -> np.ndarray:
        """``S_chi`` for ``m`` draws, shape ``(m, n_chars)``."""
        nc = len(self.labels)
        re = np.zeros((m, nc))
        im = np.zeros((m, nc))
        for s0 in range(0, m, self.chunk):
            s1 = min(m, s0 + self.chunk)
            if self.n_exact:
                raw = rng.bit_generator.random_raw((s1 - s0, (self.n_exact + 1) // 2))
                _phase_sums(raw, self.r, self.offsets, _COS, _SIN, re[s0:s1], im[s0:s1])
            if self._gauss:
                g = rng.standard_normal((s1 - s0, 2, nc))
                re[s0:s1] += g[:, 0] * self.tail_sd
                im[s0:s1] += g[:, 1] * self.tail_sd
        return re + 1j * im

    def from_series(self, S: np.ndarray) -> np.ndarray:
        return self.shift + (S.real @ self.coef.real - S.imag @ self.coef.imag)

    def sample(self, rng: np.random.Generator, m: int) -> np.ndarray:
        return self.from_series(self.series(rng, m))

    def with_phases(self, phases: PhaseAssignment, repo: ZeroRepository) -> np.ndarray:
        """Vector for an explicit phase assignment over all stored ordinates."""
        S = np.zeros(len(self.labels), dtype=np.complex128)
        for c, lab in enumerate(self.labels):
            g = repo.get(lab).ordinates
            S[c] = np.sum(phases.phases[lab] / np.sqrt(0.25 + g * g))
        return self.from_series(S[None, :])[0]


def sample_X(race: RaceTuple, repo: ZeroRepository, rng: np.random.Generator,
             phases: PhaseAssignment | None = None, center: bool = False) -> np.ndarray:
    """One normalized race vector; fresh phases unless ``phases`` pins them."""
    s = ExactSampler(race, repo, center=center)
    if phases is None:
        phases = PhaseAssignment.draw(repo, s.labels, rng)
    return s.with_phases(phases, repo)


# ---------------------------------------------------------------- estimation


def _as_sampler(sampler):
    if hasattr(sampler, "sample"):
        return sampler.sample
    if callable(sampler):
        return sampler
    raise TypeError("sampler must have .sample(rng, m) or be callable")


def count_hits(sampler, specs: Sequence[OrderingSpec], N: int, seed: int, threads: int = 1,
               shard_size: int = SHARD_SIZE) -> list[int]:
    """Hits per spec over ``N`` draws split into seeded shards.

    Each shard uses its own stream, so totals do not depend on ``threads``.
    """
    draw = _as_sampler(sampler)
    plan = shard_plan(N, shard_size)

    def run(item):
        sid, m = item
        x = draw(stream(seed, sid), m)
        return [int(np.count_nonzero(s.contains(x))) for s in specs]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, plan))
    else:
        parts = [run(p) for p in plan]
    return [sum(p[i] for p in parts) for i in range(len(specs))]


def estimate_many(sampler, specs: Sequence[OrderingSpec], N: int, seed: int, threads: int = 1,
                  shard_size: int = SHARD_SIZE) -> list[MCEstimate]:
    """Estimates for several regions from one common set of draws."""
    hits = count_hits(sampler, specs, N, seed, threads, shard_size)
    nstreams = len(shard_plan(N, shard_size))
    q = getattr(sampler, "q", None)
    return [MCEstimate(h / N, int(N), h, int(seed), (0, nstreams), s.kind, s.n, s.k, q)
            for h, s in zip(hits, specs)]


def estimate_ordering(sampler, spec: OrderingSpec, N: int, seed: int, threads: int = 1,
                      shard_size: int = SHARD_SIZE) -> MCEstimate:
    if N < 1:
        raise ValueError("N must be positive")
    return estimate_many(sampler, [spec], N, seed, threads, shard_size)[0]

"""Prime races from actual primes: segmented sieve counts, the normalized race
vector and finite-x logarithmic densities.

Everything here is empirical and non-asymptotic; the densities are integrals
over a finite window, not the x -> infinity limits of the random model.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import OrderingSpec
from .residues import primes_up_to, reduced_residues

LABEL = "empirical, non-asymptotic"
SEGMENT = 1 << 20


def _segment_primes(lo: int, hi: int, base: np.ndarray) -> np.ndarray:
    """Primes in ``[lo, hi)`` given all primes up to ``sqrt(hi)``."""
    seg = np.ones(hi - lo, dtype=bool)
    if lo < 2:
        seg[: 2 - lo] = False
    for p in base:
        p = int(p)
        if p * p >= hi:
            break
        start = max(p * p, ((lo + p - 1) // p) * p)
        seg[start - lo :: p] = False
    return np.flatnonzero(seg).astype(np.int64) + lo


@dataclass(frozen=True)
class SieveCounts:
    """``pi(x; q, a)`` for every reduced ``a`` and ``pi(x)`` at the checkpoints."""

    q: int
    residues: tuple[int, ...]
    x: np.ndarray          # checkpoints, non-decreasing
    counts: np.ndarray     # (M, phi(q)) int64
    pi: np.ndarray         # (M,) int64, all primes

    def column(self, a: int) -> np.ndarray:
        try:
            return self.counts[:, [r % self.q for r in self.residues].index(a % self.q)]
        except ValueError:
            raise ValueError(f"{a} is not a reduced residue mod {self.q}") from None

    def at(self, i: int = -1) -> dict[int, int]:
        return {a: int(c) for a, c in zip(self.residues, self.counts[i])}


def sieve_counts(x_max: float, q: int, checkpoints: Sequence[float] | None = None,
                 threads: int = 1, segment: int = SEGMENT) -> SieveCounts:
    """Exact prime counts by residue class at each checkpoint (default: just ``x_max``).

    Segments of ``[2, x_max]`` are sieved independently (in parallel with
    ``threads > 1``) and their per-class counts below each checkpoint are summed.
    """
    q = int(q)
    if q < 1:
        raise ValueError("q must be positive")
    cps = np.asarray([x_max] if checkpoints is None else checkpoints, dtype=np.float64)
    if cps.ndim != 1 or cps.size == 0 or np.any(np.diff(cps) < 0):
        raise ValueError("checkpoints must be a non-empty non-decreasing sequence")
    if cps[-1] > x_max:
        raise ValueError("checkpoints exceed x_max")
    top = int(math.floor(x_max))
    cut = np.floor(cps).astype(np.int64)
    res = tuple(int(a) for a in reduced_residues(q))
    slot = np.full(q, -1, dtype=np.int64)
    slot[[a % q for a in res]] = np.arange(len(res))
    base = primes_up_to(math.isqrt(top) + 1)
    bounds = [(lo, min(lo + segment, top + 1)) for lo in range(0, top + 1, segment)]

    def run(b):
        lo, hi = b
        p = _segment_primes(lo, hi, base)
        cls = slot[p % q]
        tot = np.searchsorted(p, cut, side="right")
        per = np.stack([np.searchsorted(p[cls == c], cut, side="right") for c in range(len(res))],
                       axis=1) if res else np.zeros((cut.size, 0), dtype=np.int64)
        return tot.astype(np.int64), per.astype(np.int64)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    pi = np.zeros(cut.size, dtype=np.int64)
    counts = np.zeros((cut.size, len(res)), dtype=np.int64)
    for t, c in parts:
        pi += t
        counts += c
    return SieveCounts(q, res, cps, counts, pi)


def e_vector(x, q: int, contestants: Sequence[int], counts: SieveCounts | None = None) -> np.ndarray:
    """``E(x; q, a) = (log x / sqrt x)(phi(q) pi(x; q, a) - pi(x))`` for each contestant.

    ``x`` may be a scalar or the checkpoint array of ``counts``.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if counts is None:
        counts = sieve_counts(float(xs.max()), q, np.sort(xs))
        order = np.argsort(np.argsort(xs))
    else:
        if counts.x.shape != xs.shape or np.any(counts.x != xs):
            raise ValueError("counts were taken at different checkpoints")
        order = np.arange(xs.size)
    phi = len(counts.residues)
    cols = np.stack([counts.column(a) for a in contestants], axis=1)[order]
    pi = counts.pi[order]
    E = (np.log(xs) / np.sqrt(xs))[:, None] * (phi * cols - pi[:, None]).astype(np.float64)
    return E[0] if np.ndim(x) == 0 else E


def log_checkpoints(x_min: float, x_max: float, M: int) -> np.ndarray:
    if not 2 <= x_min < x_max:
        raise ValueError("need 2 <= x_min < x_max")
    if M < 2:
        raise ValueError("need at least two checkpoints")
    x = np.exp(np.linspace(math.log(x_min), math.log(x_max), M))
    x[0], x[-1] = x_min, x_max
    return x


@dataclass
class RaceTrajectory:
    q: int
    contestants: tuple[int, ...]
    spec: OrderingSpec
    x: np.ndarray
    E: np.ndarray
    in_region: np.ndarray
    label: str = LABEL
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.x.size < 2 or np.any(np.diff(self.x) <= 0):
            raise ValueError("checkpoints must be strictly increasing and at least two")
        if not np.all(np.isfinite(self.E)):
            raise ValueError("non-finite race vector")

    @property
    def ties(self) -> np.ndarray:
        I, J = self.spec.index_arrays
        return np.any(self.E[:, I] == self.E[:, J], axis=1) if I.size else np.zeros(self.x.size, bool)

    def log_measure(self, indicator: np.ndarray) -> float:
        """Trapezoid rule for ``(1/log(x_M/x_1)) int 1 dt/t`` on the checkpoints."""
        u = np.log(self.x)
        v = indicator.astype(np.float64)
        return float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(u)) / (u[-1] - u[0]))

    @property
    def density(self) -> float:
        return self.log_measure(self.in_region)

    def to_csv(self, path) -> Path:
        path = Path(path)
        n = len(self.contestants)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x"] + [f"E_{i}" for i in range(1, n + 1)] + ["in_region"])
            for x, row, r in zip(self.x, self.E, self.in_region):
                w.writerow([format(x, ".12g")] + [format(v, ".12g") for v in row] + [int(r)])
        return path


def race_trajectory(q: int, contestants: Sequence[int], spec: OrderingSpec, x_min: float,
                    x_max: float, M: int = 10**4, threads: int = 1) -> RaceTrajectory:
    contestants = tuple(int(a) % q for a in contestants)
    if spec.n != len(contestants):
        raise ValueError("spec dimension differs from the tuple length")
    x = log_checkpoints(x_min, x_max, M)
    counts = sieve_counts(x_max, q, x, threads=threads)
    E = e_vector(x, q, contestants, counts)
    return RaceTrajectory(q, contestants, spec, x, E, spec.contains(E),
                          meta={"x_min": x_min, "x_max": x_max, "M": M})


def log_density_estimate(q: int, contestants: Sequence[int], spec: OrderingSpec, x_min: float,
                         x_max: float, M: int = 10**4, threads: int = 1) -> float:
    """Share of ``log x`` in ``[x_min, x_max]`` where the ordering holds (trapezoid on checkpoints)."""
    if M < 1000:
        raise ValueError("need M >= 1000 checkpoints")
    return race_trajectory(q, contestants, spec, x_min, x_max, M, threads).density

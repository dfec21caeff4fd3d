"""Reduced residues, square-root counts and the biased race-tuple construction."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InsufficientPrimes, PreconditionViolation, HypothesisWarning


def factorize(q: int) -> tuple[tuple[int, int], ...]:
    """Prime factorization of ``q`` by trial division, as ``((p, e), ...)``."""
    if q < 1:
        raise ValueError(f"cannot factor {q}")
    out = []
    n = q
    p = 2
    while p * p <= n:
        if n % p == 0:
            e = 0
            while n % p == 0:
                n //= p
                e += 1
            out.append((p, e))
        p += 1 if p == 2 else 2
    if n > 1:
        out.append((n, 1))
    return tuple(out)


@dataclass(frozen=True)
class Modulus:
    q: int

    def __post_init__(self):
        if not isinstance(self.q, (int, np.integer)) or self.q < 1:
            raise ValueError(f"modulus must be a positive integer, got {self.q!r}")
        object.__setattr__(self, "q", int(self.q))

    @cached_property
    def factors(self) -> tuple[tuple[int, int], ...]:
        return factorize(self.q)

    @cached_property
    def phi(self) -> int:
        return euler_phi(self.q)

    def __int__(self):
        return self.q


def _as_int(q) -> int:
    return q.q if isinstance(q, Modulus) else int(q)


def euler_phi(q) -> int:
    q = _as_int(q)
    if q < 1:
        raise ValueError("phi is defined for q >= 1")
    result = 1
    for p, e in factorize(q):
        result *= (p - 1) * p ** (e - 1)
    return result


def reduced_residues(q) -> np.ndarray:
    q = _as_int(q)
    a = np.arange(1, q + 1) if q == 1 else np.arange(1, q)
    return a[np.gcd(a, q) == 1]


def c_shift(q, a: int) -> int:
    """Return -1 plus the number of square roots of ``a`` modulo ``q``.

    Uses multiplicativity of the root count over the prime-power factors.
    """
    q = _as_int(q)
    a = int(a) % q
    if math.gcd(a, q) != 1:
        raise ValueError(f"{a} is not a unit mod {q}")
    roots = 1
    for p, e in factorize(q):
        pe = p**e
        r = a % pe
        if p == 2:
            if e == 1:
                n = 1
            elif e == 2:
                n = 2 if r % 4 == 1 else 0
            else:
                n = 4 if r % 8 == 1 else 0
        else:
            n = 2 if pow(r, (p - 1) // 2, p) == 1 else 0
        roots *= n
        if roots == 0:
            break
    return roots - 1


def primes_up_to(n: int) -> np.ndarray:
    """All primes ``<= n`` by a plain numpy sieve."""
    if n < 2:
        return np.zeros(0, dtype=np.int64)
    is_p = np.ones(n + 1, dtype=bool)
    is_p[:2] = False
    is_p[4::2] = False
    for p in range(3, math.isqrt(n) + 1, 2):
        if is_p[p]:
            is_p[p * p :: 2 * p] = False
    return np.flatnonzero(is_p).astype(np.int64)


def signed(a: int, q: int) -> int:
    """Representative of ``a`` mod ``q`` in the half-open window (-q/2, q/2]."""
    a %= q
    return a - q if 2 * a > q else a


@dataclass(frozen=True)
class ResidueClass:
    a: int
    modulus: Modulus

    def __post_init__(self):
        q = self.modulus.q
        if not 1 <= self.a <= q - 1 or math.gcd(self.a, q) != 1:
            raise ValueError(f"{self.a} is not a reduced residue mod {q}")

    @property
    def signed(self) -> int:
        return signed(self.a, self.modulus.q)


@dataclass(frozen=True)
class RaceTuple:
    """Contestants ``(b_1, -b_1, ..., b_k, -b_k, b_{k+1}, ..., b_{n-k})``.

    ``-b`` is stored as ``q - b``; :attr:`signed` gives the symmetric view.
    """

    modulus: Modulus
    contestants: tuple[int, ...]
    k: int
    interval: tuple[float, float] | None = None
    layout: str = "paired"
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "contestants", tuple(int(a) for a in self.contestants))
        q = self.modulus.q
        c = self.contestants
        if len(set(x % q for x in c)) != len(c):
            raise ValueError("contestants must be distinct")
        for a in c:
            ResidueClass(a, self.modulus)
        if self.layout == "paired":
            if not 0 <= self.k <= len(c) // 2:
                raise ValueError("need 0 <= k <= n/2")
            for j in range(self.k):
                if (c[2 * j] + c[2 * j + 1]) % q:
                    raise ValueError(f"positions {2*j+1},{2*j+2} are not a +-b pair")

    @property
    def q(self) -> int:
        return self.modulus.q

    @property
    def n(self) -> int:
        return len(self.contestants)

    @property
    def signed(self) -> tuple[int, ...]:
        return tuple(signed(a, self.q) for a in self.contestants)

    @classmethod
    def custom(cls, q, contestants) -> "RaceTuple":
        """An arbitrary race with no pairing structure (k = 0)."""
        m = q if isinstance(q, Modulus) else Modulus(int(q))
        return cls(m, tuple(a % m.q for a in contestants), 0, layout="custom")

    def to_dict(self) -> dict:
        return {"q": self.q, "contestants": list(self.contestants), "k": self.k,
                "signed": list(self.signed), "layout": self.layout,
                "interval": list(self.interval) if self.interval else None,
                "notes": list(self.notes)}


def race_tuple_bound(q: int) -> float:
    """Upper limit ``q / (20 log^2 q)`` on the number of contestants."""
    return q / (20.0 * math.log(q) ** 2)


def build_race_tuple(q, n: int, k: int, strict: bool = True) -> RaceTuple:
    """Build the paired race tuple from the smallest primes in ``(5n log^2 q, 10n log^2 q]``.

    With ``strict=False`` the size hypothesis ``n < q/(20 log^2 q)`` is only
    warned about; the interval is then shrunk to ``(L, 2L]`` with
    ``L = min(5n log^2 q, q/4)`` so every ``b_i`` stays below ``q/2``.
    """
    m = q if isinstance(q, Modulus) else Modulus(int(q))
    q = m.q
    if q < 3:
        raise PreconditionViolation("modulus must be at least 3")
    if not (1 <= k and 2 * k <= n):
        raise PreconditionViolation(f"need 1 <= k <= n/2, got n={n}, k={k}")
    lo = 5.0 * n * math.log(q) ** 2
    notes = []
    if not n < race_tuple_bound(q):
        msg = f"n={n} violates n < q/(20 log^2 q) = {race_tuple_bound(q):.3f} for q={q}"
        if strict:
            raise PreconditionViolation(msg)
        warnings.warn(msg, HypothesisWarning, stacklevel=2)
        notes.append(msg)
        if lo > q / 4:
            lo = q / 4
            notes.append(f"interval shrunk to ({lo:g}, {2 * lo:g}]")
    hi = 2.0 * lo
    cand = primes_up_to(int(math.floor(hi)))
    cand = cand[(cand > lo) & (q % cand != 0)]
    need = n - k
    if len(cand) < need:
        raise InsufficientPrimes(
            f"only {len(cand)} usable primes in ({lo:g}, {hi:g}], need {need}")
    b = [int(x) for x in cand[:need]]
    contestants = []
    for j in range(k):
        contestants += [b[j], q - b[j]]
    contestants += b[k:]
    return RaceTuple(m, tuple(contestants), k, interval=(lo, hi), notes=tuple(notes))

"""Dirichlet characters modulo q built from the CRT decomposition of the unit group.

Each character is labelled by its exponent vector relative to fixed generators:
the smallest primitive root for every odd prime power, ``-1`` for ``4 | q`` and
``(-1, 5)`` when ``8 | q``.  The integer :attr:`DirichletCharacter.index` is the
mixed-radix encoding of that vector, so the principal character has index 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .residues import Modulus, factorize


@dataclass(frozen=True)
class _Component:
    modulus: int      # the prime power p^e this generator lives in
    generator: int
    order: int
    dlog: np.ndarray  # dlog[r] for r in [0, modulus); -1 off the relevant subgroup


def _is_primitive_root(g: int, pe: int, order: int) -> bool:
    for r, _ in factorize(order):
        if pow(g, order // r, pe) == 1:
            return False
    return True


def _components(q: int) -> list[_Component]:
    comps = []
    for p, e in factorize(q):
        pe = p**e
        if p == 2:
            if e == 1:
                continue
            # -1 component: exponent 0 for r = 1 mod 4, else 1
            d = np.full(pe, -1, dtype=np.int64)
            r = np.arange(1, pe, 2)
            d[r] = np.where(r % 4 == 1, 0, 1)
            comps.append(_Component(pe, pe - 1, 2, d))
            if e >= 3:
                order = 2 ** (e - 2)
                d5 = np.full(pe, -1, dtype=np.int64)
                x = 1
                for j in range(order):
                    d5[x] = j
                    d5[pe - x] = j  # -x has the same 5-exponent
                    x = x * 5 % pe
                comps.append(_Component(pe, 5, order, d5))
        else:
            order = (p - 1) * p ** (e - 1)
            g = 2
            while not (math.gcd(g, p) == 1 and _is_primitive_root(g, pe, order)):
                g += 1
            d = np.full(pe, -1, dtype=np.int64)
            x = 1
            for j in range(order):
                d[x] = j
                x = x * g % pe
            comps.append(_Component(pe, g, order, d))
    return comps


@dataclass(frozen=True, eq=False)
class DirichletCharacter:
    """A character mod ``q`` with values ``exp(2 pi i * exponents[a] / group_exponent)``.

    ``exponents[a]`` is -1 where ``gcd(a, q) > 1``.
    """

    modulus: int
    index: int
    vector: tuple[int, ...]  # exponent per CRT generator
    group_exponent: int      # L = lcm of generator orders; values are L-th roots of unity
    exponents: np.ndarray
    conductor: int
    order: int

    @property
    def label(self) -> tuple[int, int]:
        return (self.modulus, self.index)

    @property
    def is_principal(self) -> bool:
        return self.index == 0

    @property
    def is_primitive(self) -> bool:
        return self.conductor == self.modulus

    @property
    def parity(self) -> int:
        """0 for even characters, 1 for odd ones."""
        e = self.exponents[self.modulus - 1]
        return 0 if e == 0 else 1

    @property
    def is_real(self) -> bool:
        return self.order <= 2

    @cached_property
    def table(self) -> np.ndarray:
        t = np.exp(2j * np.pi * self.exponents / self.group_exponent)
        t[self.exponents < 0] = 0.0
        if self.group_exponent % 2 == 0:
            t[self.exponents == self.group_exponent // 2] = -1.0
        t[self.exponents == 0] = 1.0
        return t

    def __call__(self, a: int) -> complex:
        return complex(self.table[int(a) % self.modulus])

    def conjugate(self) -> "DirichletCharacter":
        g = character_group(self.modulus)
        return g.by_vector(tuple((-v) % o for v, o in zip(self.vector, g.orders)))

    def __repr__(self):
        return (f"DirichletCharacter(q={self.modulus}, index={self.index}, "
                f"conductor={self.conductor}, order={self.order})")


class CharacterGroup:
    """All ``phi(q)`` characters mod ``q`` with dense exponent tables."""

    def __init__(self, q: int):
        q = int(q.q if isinstance(q, Modulus) else q)
        if q < 1:
            raise ValueError("modulus must be positive")
        self.q = q
        self.components = _components(q)
        self.orders = tuple(c.order for c in self.components)
        self.exponent = math.lcm(*self.orders) if self.orders else 1
        a = np.arange(q)
        units = np.gcd(a, q) == 1
        if q == 1:
            units[:] = True
        self.units = np.flatnonzero(units)
        # logs[i, a]: discrete log of a with respect to generator i
        logs = np.zeros((len(self.components), q), dtype=np.int64)
        for i, c in enumerate(self.components):
            logs[i] = c.dlog[a % c.modulus]
        logs[:, ~units] = 0
        self._logs = logs
        self._unit_mask = units
        chars = [self._make(v) for v in np.ndindex(*self.orders)] if self.orders \
            else [self._make(())]
        self.characters = sorted(chars, key=lambda c: c.index)

    def _index(self, vec) -> int:
        idx, radix = 0, 1
        for v, o in zip(vec, self.orders):
            idx += int(v) * radix
            radix *= o
        return idx

    def _exponent_table(self, vec) -> np.ndarray:
        L = self.exponent
        e = np.zeros(self.q, dtype=np.int64)
        for v, o, lg in zip(vec, self.orders, self._logs):
            e += int(v) * (L // o) * lg
        e %= L
        e[~self._unit_mask] = -1
        return e

    def _make(self, vec) -> DirichletCharacter:
        vec = tuple(int(v) for v in vec)
        e = self._exponent_table(vec)
        order = 1
        for v, o in zip(vec, self.orders):
            order = math.lcm(order, o // math.gcd(v, o))
        return DirichletCharacter(self.q, self._index(vec), vec, self.exponent, e,
                                  self._conductor(e), order)

    def _conductor(self, e: np.ndarray) -> int:
        q = self.q
        units = self.units
        for d in sorted(x for x in range(1, q + 1) if q % x == 0):
            sel = units[units % d == 1 % d]
            if np.all(e[sel] == 0):
                return d
        return q

    def __len__(self):
        return len(self.characters)

    def __iter__(self):
        return iter(self.characters)

    def __getitem__(self, i) -> DirichletCharacter:
        return self.characters[i]

    @property
    def principal(self) -> DirichletCharacter:
        return self.characters[0]

    def by_vector(self, vec) -> DirichletCharacter:
        return self.characters[self._index(vec)]

    def exponent_matrix(self) -> np.ndarray:
        """``(phi(q), phi(q))`` integer exponents, rows characters, columns units."""
        return np.stack([c.exponents[self.units] for c in self.characters])

    def value_matrix(self) -> np.ndarray:
        return np.stack([c.table[self.units] for c in self.characters])


@lru_cache(maxsize=256)
def character_group(q) -> CharacterGroup:
    return CharacterGroup(q)


def _lift(b: int, f: int, q: int) -> int:
    """An integer congruent to ``b`` mod ``f`` that is a unit mod ``q``."""
    x = b
    while math.gcd(x, q) != 1:
        x += f
    return x


def primitive_inducer(chi: DirichletCharacter) -> DirichletCharacter:
    """The primitive character mod the conductor agreeing with ``chi`` on units mod q."""
    f = chi.conductor
    if f == chi.modulus:
        return chi
    g = character_group(f)
    vec = []
    for comp in g.components:
        a = _lift(_crt_generator(comp, f), f, chi.modulus)
        e = int(chi.exponents[a % chi.modulus])
        # chi(a) = zeta_L^e = zeta_o^v  =>  v = e * o / L
        num = e * comp.order
        if num % chi.group_exponent:
            raise ArithmeticError("inducer exponent is not integral")
        vec.append((num // chi.group_exponent) % comp.order)
    return g.by_vector(tuple(vec))


def _crt_generator(comp: _Component, f: int) -> int:
    """The integer mod ``f`` equal to the generator at its prime power, 1 elsewhere."""
    pe = comp.modulus
    rest = f // pe
    if rest == 1:
        return comp.generator % f
    # solve x = g (mod pe), x = 1 (mod rest)
    t = ((comp.generator - 1) * pow(rest, -1, pe)) % pe
    return (1 + rest * t) % f


def gauss_sum(chi: DirichletCharacter) -> complex:
    q = chi.modulus
    a = np.arange(q)
    return complex(np.sum(chi.table * np.exp(2j * np.pi * a / q)))


def root_number(chi: DirichletCharacter) -> complex:
    """Root number of the functional equation for a primitive character."""
    if not chi.is_primitive:
        raise ValueError("root number requires a primitive character")
    return gauss_sum(chi) / (1j**chi.parity * math.sqrt(chi.modulus))

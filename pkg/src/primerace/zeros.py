"""Positive zero ordinates of primitive Dirichlet L-functions.

Zeros are keyed by the label ``(conductor, index)`` of a primitive character
and shared by every character it induces.  Sets are either read from a text
file (``<conductor> <index> <gamma>`` per line) or computed with the Hardy-type
Z function of :mod:`primerace._lfunc`.
"""
from __future__ import annotations

import gzip
import hashlib
import io
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import loggamma

from ._lfunc import ConductorBatch, find_roots, lagrange_weights
from .characters import DirichletCharacter, character_group, primitive_inducer
from .errors import MissingCharacter, OrderError, ParseError, ZeroCountMismatch
from .residues import factorize

Label = tuple[int, int]


def tail_estimate(conductor: int, T: float, density_scale: float = 1.0) -> float:
    """Estimate of ``sum_{gamma > T} 1/(1/4 + gamma^2)`` from the average zero density.

    Integrates ``density_scale * log(f t / 2 pi) / (2 pi)`` against ``1/t^2`` from
    ``max(T, 2 pi / f)`` to infinity, which is ``(log(f T / 2 pi) + 1) / (2 pi T)``.
    """
    T = max(float(T), 2 * math.pi / conductor)
    return density_scale * (math.log(conductor * T / (2 * math.pi)) + 1.0) / (2 * math.pi * T)


def expected_count(conductor: int, parity: int, T: float) -> float:
    """Main term of the zero-counting function for ``0 < gamma <= T``."""
    th = 0.5 * T * math.log(conductor / math.pi) + loggamma((0.5 + parity + 1j * T) / 2).imag
    return float(th / math.pi)


@dataclass(frozen=True, eq=False)
class ZeroSet:
    """Ascending ordinates ``0 < gamma <= height`` of one primitive L-function."""

    label: Label
    ordinates: np.ndarray
    height: float
    parity: int | None = None
    provenance: str = "computed"
    decimals: tuple[str, ...] | None = field(default=None, repr=False)
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.ordinates, dtype=np.float64)
        g.setflags(write=False)
        object.__setattr__(self, "ordinates", g)
        object.__setattr__(self, "label", (int(self.label[0]), int(self.label[1])))
        if g.size:
            if np.any(np.diff(g) <= 0):
                raise OrderError(f"ordinates for {self.label} are not strictly increasing")
            if g[0] <= 0 or g[-1] > self.height:
                raise ValueError(f"ordinates for {self.label} outside (0, {self.height}]")
        if self.decimals is not None and len(self.decimals) != g.size:
            raise ValueError("decimal strings do not match ordinates")

    @property
    def conductor(self) -> int:
        return self.label[0]

    @property
    def count(self) -> int:
        return int(self.ordinates.size)

    def __len__(self):
        return self.count

    def strings(self) -> tuple[str, ...]:
        if self.decimals is not None:
            return self.decimals
        return tuple(repr(float(x)) for x in self.ordinates)

    def truncated(self, T: float) -> "ZeroSet":
        k = int(np.searchsorted(self.ordinates, T, side="right"))
        dec = self.decimals[:k] if self.decimals is not None else None
        return ZeroSet(self.label, self.ordinates[:k], min(T, self.height), self.parity,
                       self.provenance, dec, dict(self.meta))


def weighted_zero_sum(zs: ZeroSet, density_scale: float = 1.0) -> tuple[float, float]:
    """``(sum_{gamma <= T} 1/(1/4 + gamma^2), tail estimate beyond T)``."""
    g = zs.ordinates
    head = float(np.sum(1.0 / (0.25 + g * g))) if g.size else 0.0
    return head, tail_estimate(zs.conductor, zs.height, density_scale)


class ZeroRepository:
    """Zero sets keyed by primitive character label."""

    def __init__(self, sets: Iterable[ZeroSet] = (), source: str | None = None):
        self._sets: dict[Label, ZeroSet] = {}
        self.source = source
        self.content_hash: str | None = None
        for s in sets:
            self.add(s)

    def add(self, zs: ZeroSet) -> None:
        self._sets[zs.label] = zs

    def __contains__(self, label) -> bool:
        return tuple(label) in self._sets

    def __len__(self):
        return len(self._sets)

    def __iter__(self):
        return iter(sorted(self._sets))

    def labels(self) -> list[Label]:
        return sorted(self._sets)

    def sets(self) -> list[ZeroSet]:
        return [self._sets[k] for k in self.labels()]

    def get(self, key) -> ZeroSet:
        """Zero set for a label or for any character (resolved through its inducer)."""
        if isinstance(key, DirichletCharacter):
            if key.is_principal:
                raise MissingCharacter("the principal character carries no zeros in the model")
            key = primitive_inducer(key).label
        key = (int(key[0]), int(key[1]))
        try:
            return self._sets[key]
        except KeyError:
            raise MissingCharacter(f"no zero data for primitive character {key}") from None

    __getitem__ = get

    def for_modulus(self, q: int) -> list[tuple[DirichletCharacter, ZeroSet]]:
        """Every non-principal character mod ``q`` with its zero set."""
        return [(c, self.get(c)) for c in character_group(q) if not c.is_principal]

    def height(self, q: int | None = None) -> float:
        sets = self.sets() if q is None else [z for _, z in self.for_modulus(q)]
        return min((z.height for z in sets), default=0.0)

    def truncated(self, T: float) -> "ZeroRepository":
        r = ZeroRepository((z.truncated(T) for z in self.sets()), self.source)
        r.content_hash = self.content_hash
        return r

    def merge(self, other: "ZeroRepository") -> "ZeroRepository":
        r = ZeroRepository(self.sets(), self.source)
        for z in other.sets():
            r.add(z)
        return r


def _open_text(path, mode: str):
    path = os.fspath(path)
    if path.endswith(".gz"):
        return io.TextIOWrapper(gzip.open(path, mode + "b"), encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def parse_zeros(lines: Iterable[str], source: str = "<text>") -> ZeroRepository:
    """Parse zero-data lines; ``#`` starts a comment line.

    A comment ``# height <conductor> <index> <T>`` records the truncation height
    of a block; otherwise the largest ordinate is used.  Exact duplicates are
    dropped, anything non-ascending raises :class:`OrderError`.
    """
    blocks: dict[Label, list[tuple[float, str]]] = {}
    heights: dict[Label, float] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 4 and parts[0] == "height":
                try:
                    heights[(int(parts[1]), int(parts[2]))] = float(parts[3])
                except ValueError:
                    raise ParseError(f"{source}:{lineno}: bad height comment {line!r}") from None
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"{source}:{lineno}: expected 3 fields, got {len(parts)}")
        try:
            f, idx = int(parts[0]), int(parts[1])
            g = float(parts[2])
        except ValueError:
            raise ParseError(f"{source}:{lineno}: malformed line {line!r}") from None
        if not math.isfinite(g) or g <= 0 or f < 1 or idx < 0:
            raise ParseError(f"{source}:{lineno}: invalid value in {line!r}")
        blk = blocks.setdefault((f, idx), [])
        if blk:
            prev = blk[-1][0]
            if g == prev:
                continue
            if g < prev:
                raise OrderError(f"{source}:{lineno}: ordinate {parts[2]} after {blk[-1][1]}")
        blk.append((g, parts[2]))
    sets = []
    for label, blk in blocks.items():
        g = np.array([x for x, _ in blk])
        T = heights.get(label, float(g[-1]))
        sets.append(ZeroSet(label, g, max(T, float(g[-1])), None, "file",
                            tuple(s for _, s in blk)))
    return ZeroRepository(sets, source)


def load_zeros(path) -> ZeroRepository:
    with _open_text(path, "r") as fh:
        repo = parse_zeros(fh, os.fspath(path))
    repo.content_hash = file_hash(path)
    return repo


def format_zeros(repo: ZeroRepository) -> str:
    """Canonical text form of ``repo`` (what :func:`write_zeros` stores)."""
    out = ["# conductor index gamma\n"]
    for z in repo.sets():
        f, idx = z.label
        out.append(f"# height {f} {idx} {z.height!r}\n")
        out.extend(f"{f} {idx} {s}\n" for s in z.strings())
    return "".join(out)


def data_hash(repo: ZeroRepository) -> str:
    """SHA-256 of the canonical text form; independent of how the data was stored."""
    return hashlib.sha256(format_zeros(repo).encode("utf-8")).hexdigest()


def write_zeros(repo: ZeroRepository, path) -> str:
    """Write ``repo`` in the text format (gzip for ``.gz``); returns the SHA-256 of the file."""
    data = format_zeros(repo).encode("utf-8")
    path = os.fspath(path)
    if path.endswith(".gz"):
        # fixed mtime so the same data gives the same bytes
        with open(path, "wb") as raw, gzip.GzipFile(filename="", fileobj=raw, mode="wb", mtime=0) as fh:
            fh.write(data)
    else:
        with open(path, "wb") as fh:
            fh.write(data)
    return file_hash(path)


# ---------------------------------------------------------------- computation

_STENCIL = 16


def _scan(batch: ConductorBatch, T: float, step: float, nsub: int, tol: float):
    pad = _STENCIL + 2
    t0 = -pad * step
    J = int(math.ceil(T / step)) + 2 * pad
    Z = batch.grid(t0, step, J)
    w = lagrange_weights(_STENCIL)
    roots, flags = [], []
    for c in range(Z.shape[1]):
        u, fl = find_roots(np.ascontiguousarray(Z[:, c]), w, nsub, tol)
        t = t0 + step * np.sort(u)
        t = t[(t > 0) & (t <= T)]
        roots.append(t)
        flags.append(int(fl))
    return roots, flags


def compute_batch(chars: Sequence[DirichletCharacter], T: float, step: float = 0.05,
                  slack: float = 2.0, max_halvings: int = 3, nsub: int = 16,
                  tol: float = 1e-11, em_ratio: float = 2.0) -> list[ZeroSet]:
    """Zeros up to ``T`` for primitive characters of a single conductor.

    The grid step halves (up to ``max_halvings`` times) while any located count
    differs from :func:`expected_count` by more than ``slack``.
    """
    chars = list(chars)
    if not chars:
        return []
    T = float(T)
    h = float(step)
    pad_T = T + (2 * _STENCIL + 8) * h
    batch = ConductorBatch(chars, pad_T, em_ratio=em_ratio)
    for attempt in range(max_halvings + 1):
        roots, flags = _scan(batch, T, h, nsub, tol / h)
        bad = []
        for c, r in zip(chars, roots):
            exp = expected_count(c.modulus, c.parity, T)
            if abs(len(r) - exp) > slack:
                bad.append((c.label, len(r), exp))
        if not bad:
            break
        if attempt == max_halvings:
            lab, got, exp = bad[0]
            raise ZeroCountMismatch(
                f"{len(bad)} character(s) off the zero-count main term, e.g. {lab}: "
                f"found {got}, expected {exp:.2f} (slack {slack}, final step {h})")
        h /= 2
    return [ZeroSet(c.label, r, T, c.parity, "computed",
                    meta={"step": h, "slack": slack, "expected": expected_count(c.modulus, c.parity, T),
                          "resampled": fl})
            for c, r, fl in zip(chars, roots, flags)]


def compute_zeros(chi: DirichletCharacter, T: float, **kw) -> ZeroSet:
    """Ordinates ``0 < gamma <= T`` for a primitive non-principal character."""
    if not chi.is_primitive or chi.is_principal:
        raise ValueError("compute_zeros needs a primitive non-principal character")
    return compute_batch([chi], T, **kw)[0]


def needed_inducers(q: int) -> dict[int, list[DirichletCharacter]]:
    """Primitive characters behind the non-principal characters mod ``q``, by conductor."""
    out: dict[int, list[DirichletCharacter]] = {}
    seen = set()
    for c in character_group(q):
        if c.is_principal:
            continue
        p = primitive_inducer(c)
        if p.label not in seen:
            seen.add(p.label)
            out.setdefault(p.modulus, []).append(p)
    return dict(sorted(out.items()))


def compute_repository(q: int | Sequence[int], T: float, **kw) -> ZeroRepository:
    """Compute zeros for every primitive inducer needed by the given moduli."""
    qs = [q] if isinstance(q, (int, np.integer)) else list(q)
    groups: dict[int, dict[Label, DirichletCharacter]] = {}
    for m in qs:
        for f, chars in needed_inducers(int(m)).items():
            groups.setdefault(f, {}).update({c.label: c for c in chars})
    repo = ZeroRepository(source="computed")
    for f in sorted(groups):
        for zs in compute_batch([groups[f][k] for k in sorted(groups[f])], T, **kw):
            repo.add(zs)
    return repo

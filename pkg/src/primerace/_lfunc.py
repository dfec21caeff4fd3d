"""Hardy-type Z functions of primitive Dirichlet L-functions on the critical line.

``L(s, chi) = f^{-s} sum_a chi(a) zeta(s, a/f)`` with each Hurwitz zeta value
expanded by Euler-Maclaurin at ``x = N + a/f``.  For a fixed conductor ``f``
everything except the final weighting by ``chi(a)`` is shared between the
characters, so the kernels produce per-residue vectors

    V_a(t) = sum_{j<N} (a + j f)^{-s} + boundary terms at m_a = N f + a

and ``L(1/2 + it, chi) = sum_a chi(a) V_a(t)``.  The rotated value
``Z(t) = Re(exp(i theta(t)) L(1/2 + it))`` is real for real ``t``.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from numba import njit
from scipy.special import bernoulli, factorial, loggamma

from .characters import DirichletCharacter, root_number

_K = 20
_BK = np.array([bernoulli(2 * k)[2 * k] / factorial(2 * k, exact=False)
                for k in range(1, _K + 1)], dtype=np.float64)


@njit(cache=True, fastmath=True)
def _grid_classes(logm, amp, N, t0, h, J, resync, out_re, out_im):
    # out[j, r] = sum_{i<N} amp[r, i] exp(-i (t0 + j h) logm[r, i]) by rotating each term
    R = logm.shape[0]
    wr = np.empty(N)
    wi = np.empty(N)
    zr = np.empty(N)
    zi = np.empty(N)
    for r in range(R):
        lg = logm[r]
        am = amp[r]
        for i in range(N):
            wr[i] = math.cos(h * lg[i])
            wi[i] = -math.sin(h * lg[i])
        j = 0
        while j < J:
            t = t0 + j * h
            for i in range(N):
                a = t * lg[i]
                zr[i] = am[i] * math.cos(a)
                zi[i] = -am[i] * math.sin(a)
            stop = min(J, j + resync)
            while j < stop:
                sr = 0.0
                si = 0.0
                for i in range(N):
                    x = zr[i]
                    y = zi[i]
                    sr += x
                    si += y
                    zr[i] = x * wr[i] - y * wi[i]
                    zi[i] = x * wi[i] + y * wr[i]
                out_re[j, r] = sr
                out_im[j, r] = si
                j += 1


@njit(cache=True, fastmath=True)
def _point_classes(logm, amp, N, t, out):
    R = logm.shape[0]
    for r in range(R):
        sr = 0.0
        si = 0.0
        lg = logm[r]
        am = amp[r]
        for i in range(N):
            a = t * lg[i]
            sr += am[i] * math.cos(a)
            si -= am[i] * math.sin(a)
        out[r] = complex(sr, si)


@njit(cache=True)
def _boundary(res, f, N, t, bk, out):
    # Euler-Maclaurin boundary terms of zeta(s, a/f) f^{-s} beyond m = N f, per residue
    s = complex(0.5, t)
    for r in range(res.shape[0]):
        a = res[r]
        m = N * f + a
        x = N + a / f
        lm = math.log(m)
        base = math.exp(-0.5 * lm) * complex(math.cos(t * lm), -math.sin(t * lm))
        br = x / (s - 1.0) + 0.5
        u = s / x
        br += bk[0] * u
        x2 = x * x
        for k in range(2, bk.shape[0] + 1):
            u = u * (s + (2 * k - 3)) * (s + (2 * k - 2)) / x2
            br += bk[k - 1] * u
        out[r] += base * br


@njit(cache=True)
def _boundary_many(res, f, N, ts, bk, out):
    for j in range(ts.shape[0]):
        _boundary(res, f, N, ts[j], bk, out[j])


@njit(cache=True)
def _points_many(logm, amp, res, f, ts, ns, bk, out):
    for j in range(ts.shape[0]):
        _point_classes(logm, amp, ns[j], ts[j], out[j])
        _boundary(res, f, ns[j], ts[j], bk, out[j])


class ConductorBatch:
    """Z functions of several primitive characters sharing one conductor ``f``.

    ``em_ratio`` sets the Euler-Maclaurin cut ``N ~ em_ratio |s| / (2 pi)``; with
    the default 2 every further boundary term shrinks by about a factor 4.
    """

    def __init__(self, chars: Sequence[DirichletCharacter], t_max: float,
                 em_ratio: float = 2.0, resync: int = 64):
        chars = list(chars)
        if not chars:
            raise ValueError("need at least one character")
        f = chars[0].modulus
        for c in chars:
            if c.modulus != f or not c.is_primitive or c.is_principal:
                raise ValueError("characters must be non-principal and primitive of one conductor")
        self.f = f
        self.chars = chars
        self.em_ratio = float(em_ratio)
        self.resync = int(resync)
        self.t_max = float(t_max)
        self.residues = np.array([a for a in range(1, f + 1) if math.gcd(a, f) == 1], dtype=np.int64)
        # values_matrix[r, c] = chi_c(residues[r])
        self.values_matrix = np.stack([c.table[self.residues % f] for c in chars], axis=1)
        self.kappa = np.array([c.parity for c in chars])
        eps = np.array([root_number(c) for c in chars])
        self.root_numbers = eps
        self._phase = -0.5 * np.angle(eps)
        self.n_max = self.cutoff(self.t_max)
        m = self.residues[:, None] + f * np.arange(self.n_max)[None, :]
        self.logm = np.ascontiguousarray(np.log(m.astype(np.float64)))
        self.amp = np.ascontiguousarray(np.exp(-0.5 * self.logm))

    def __len__(self):
        return len(self.chars)

    def cutoff(self, t) -> int:
        return int(self.em_ratio * math.hypot(0.5, float(t)) / (2 * math.pi)) + 8

    def theta_main(self, t):
        """Gamma-factor phase without the root number, ``(len(t), n_chars)``; zero at ``t = 0``."""
        t = np.asarray(t, dtype=np.float64)[..., None]
        return 0.5 * t * math.log(self.f / math.pi) + loggamma((0.5 + self.kappa + 1j * t) / 2).imag

    def theta(self, t):
        return self.theta_main(t) + self._phase

    def _check(self, tmax):
        if abs(tmax) > self.t_max + 1e-9:
            raise ValueError(f"|t| = {abs(tmax)} beyond precomputed height {self.t_max}")

    def class_vectors(self, ts) -> np.ndarray:
        """``V_a(t)`` at arbitrary points, shape ``(len(ts), n_residues)``."""
        ts = np.ascontiguousarray(ts, dtype=np.float64)
        out = np.zeros((ts.shape[0], len(self.residues)), dtype=np.complex128)
        if ts.size == 0:
            return out
        self._check(np.max(np.abs(ts)))
        ns = np.array([self.cutoff(t) for t in ts], dtype=np.int64)
        _points_many(self.logm, self.amp, self.residues, self.f, ts, ns, _BK, out)
        return out

    def lvalues(self, ts) -> np.ndarray:
        """``L(1/2 + it, chi)`` for every character, shape ``(len(ts), n_chars)``."""
        return self.class_vectors(ts) @ self.values_matrix

    def values(self, ts, return_imag: bool = False):
        w = np.exp(1j * self.theta(ts)) * self.lvalues(ts)
        return (w.real, w.imag) if return_imag else w.real

    def grid_vectors(self, t0: float, h: float, J: int, block: int = 1024) -> np.ndarray:
        t_end = t0 + (J - 1) * h
        self._check(max(abs(t0), abs(t_end)))
        R = len(self.residues)
        re = np.empty((J, R))
        im = np.empty((J, R))
        ts = t0 + h * np.arange(J)
        tail = np.zeros((J, R), dtype=np.complex128)
        for j0 in range(0, J, block):
            j1 = min(J, j0 + block)
            N = self.cutoff(max(abs(ts[j0]), abs(ts[j1 - 1])))
            _grid_classes(self.logm, self.amp, N, float(ts[j0]), float(h), j1 - j0,
                          self.resync, re[j0:j1], im[j0:j1])
            _boundary_many(self.residues, self.f, N, ts[j0:j1], _BK, tail[j0:j1])
        return re + 1j * im + tail

    def grid(self, t0: float, h: float, J: int, return_imag: bool = False, block: int = 1024):
        """``Z`` at ``t0 + j h`` for ``0 <= j < J``, shape ``(J, n_chars)``."""
        out_re = np.empty((J, len(self.chars)))
        out_im = np.empty((J, len(self.chars))) if return_imag else None
        step = 16 * block
        for j0 in range(0, J, step):
            j1 = min(J, j0 + step)
            t = t0 + h * np.arange(j0, j1)
            w = np.exp(1j * self.theta(t)) * (self.grid_vectors(t[0], h, j1 - j0, block)
                                               @ self.values_matrix)
            out_re[j0:j1] = w.real
            if return_imag:
                out_im[j0:j1] = w.imag
        return (out_re, out_im) if return_imag else out_re


class HardyZ:
    """Single-character view of :class:`ConductorBatch`."""

    def __init__(self, chi: DirichletCharacter, t_max: float, **kw):
        self.batch = ConductorBatch([chi], t_max, **kw)
        self.chi = chi
        self.f = chi.modulus
        self.kappa = chi.parity
        self.eps = self.batch.root_numbers[0]

    def theta(self, t):
        return self.batch.theta(t)[..., 0]

    def theta_main(self, t):
        return self.batch.theta_main(t)[..., 0]

    def lvalues(self, ts):
        return self.batch.lvalues(ts)[:, 0]

    def values(self, ts, return_imag: bool = False):
        r = self.batch.values(ts, return_imag)
        return (r[0][:, 0], r[1][:, 0]) if return_imag else r[:, 0]

    def grid(self, t0, h, J, return_imag: bool = False):
        r = self.batch.grid(t0, h, J, return_imag)
        return (r[0][:, 0], r[1][:, 0]) if return_imag else r[:, 0]


def lagrange_weights(p: int) -> np.ndarray:
    """Barycentric weights for ``p`` equispaced nodes."""
    w = np.empty(p)
    c = 1.0
    for i in range(p):
        w[i] = c if i % 2 == 0 else -c
        c = c * (p - 1 - i) / (i + 1)
    return w


@njit(cache=True)
def _interp(y, s, w, u):
    # barycentric interpolation through y[s:s+p] evaluated at grid coordinate u
    p = w.shape[0]
    num = 0.0
    den = 0.0
    for i in range(p):
        d = u - (s + i)
        if d == 0.0:
            return y[s + i]
        c = w[i] / d
        num += c * y[s + i]
        den += c
    return num / den


@njit(cache=True)
def _stencil(j, p, J):
    s = j - p // 2 + 1
    if s < 0:
        s = 0
    if s + p > J:
        s = J - p
    return s


@njit(cache=True)
def _illinois(y, s, w, a, b, fa, fb, tol):
    side = 0
    for _ in range(200):
        c = (a * fb - b * fa) / (fb - fa)
        fc = _interp(y, s, w, c)
        if fc == 0.0 or b - a < tol:
            return c
        if (fc > 0) == (fb > 0):
            b, fb = c, fc
            if side == -1:
                fa *= 0.5
            side = -1
        else:
            a, fa = c, fc
            if side == 1:
                fb *= 0.5
            side = 1
    return 0.5 * (a + b)


@njit(cache=True)
def find_roots(y, w, nsub, tol):
    """Roots in grid coordinates of the interpolant through ``y``.

    Every coarse sign change is refined; a local minimum of ``|y|`` between
    same-sign neighbours is resampled ``nsub`` times per adjacent interval so a
    close pair of roots hidden inside one step is still found.  Returns the
    roots and the number of intervals that were resampled.
    """
    J = y.shape[0]
    p = w.shape[0]
    out = np.empty(2 * J + 8)
    n = 0
    flagged = 0
    for j in range(J - 1):
        ya = y[j]
        yb = y[j + 1]
        if (ya > 0) != (yb > 0):
            s = _stencil(j, p, J)
            out[n] = _illinois(y, s, w, float(j), float(j + 1), ya, yb, tol)
            n += 1
        elif j >= 1 and (y[j - 1] > 0) == (ya > 0) and abs(ya) < abs(y[j - 1]) \
                and abs(ya) < abs(yb):
            flagged += 1
            s = _stencil(j, p, J)
            for side in range(2):
                lo = float(j - 1 + side)
                flo = y[j - 1 + side]
                for k in range(1, nsub + 1):
                    u = lo + k / nsub
                    fu = _interp(y, s, w, u) if k < nsub else y[j + side]
                    if (fu > 0) != (flo > 0):
                        out[n] = _illinois(y, s, w, u - 1.0 / nsub, u, flo, fu, tol)
                        n += 1
                    flo = fu
    return out[:n], flagged

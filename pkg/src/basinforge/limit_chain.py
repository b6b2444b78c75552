"""Stable evaluation of ``Phi_n = g_{n,0}^{-1} o h_n o f_{n,0}``.

Orbits of length several hundred leave the double range, so points are
stored as mantissa and binary exponent, ``x = x_hat * 2**e``.  The backward
pass never forms ``g^{-1}`` of a value and subtracts it from another: with
``B_m = h_m(x_m)`` and ``E_m = y_m - B_m`` where ``y_m`` is the backward image,

    E_m = [g_m^{-1}(B_{m+1} + E_{m+1}) - g_m^{-1}(B_{m+1})] + Def_m(x_m),
    Def_m = g_m^{-1} o h_{m+1} o f_m - h_m,

and ``Def_m`` is an exact polynomial whose low-degree part (the commutation
residual, checked separately) is dropped.  Successive differences
``Phi_{n+1} - Phi_n`` follow the same recursion started from ``Def_n(x_n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .jet_core import PolyMap2, compose


@dataclass
class Scaled:
    """Points ``(z, w) = (zh, wh) * 2**e`` with per-point integer exponents."""

    zh: np.ndarray
    wh: np.ndarray
    e: np.ndarray

    @classmethod
    def from_points(cls, z, w) -> "Scaled":
        s = cls(np.asarray(z, dtype=complex).copy(), np.asarray(w, dtype=complex).copy(), np.zeros(np.shape(z), dtype=np.int64))
        return s.normalized()

    def normalized(self) -> "Scaled":
        nrm = np.hypot(np.abs(self.zh), np.abs(self.wh))
        _, ex = np.frexp(nrm)
        ex = np.where(nrm > 0, ex, 0).astype(np.int64)
        return Scaled(np.ldexp(self.zh.real, -ex) + 1j * np.ldexp(self.zh.imag, -ex),
                      np.ldexp(self.wh.real, -ex) + 1j * np.ldexp(self.wh.imag, -ex),
                      self.e + ex)

    def log2_norm(self) -> np.ndarray:
        nrm = np.hypot(np.abs(self.zh), np.abs(self.wh))
        with np.errstate(divide="ignore"):
            return np.log2(nrm) + self.e

    def to_points(self) -> tuple[np.ndarray, np.ndarray]:
        return _ldexp_c(self.zh, self.e), _ldexp_c(self.wh, self.e)


def _ldexp_c(x, e):
    return np.ldexp(x.real, e) + 1j * np.ldexp(x.imag, e)


@dataclass
class LimitChain:
    """Everything needed to evaluate Phi_n for n <= N.

    ``f[m]`` are the germs actually iterated (after frames and directing),
    ``h[m]`` for m <= N (``h[N] = Id``), ``g[m]`` are TriangularMaps, and
    ``entry`` is the linear change of coordinates applied to input points, so
    that ``Phi(z) = entry^{-1} Phi_bar(entry z)``.
    """

    f: list = field(repr=False)
    h: list = field(repr=False)
    g: list = field(repr=False)
    entry: np.ndarray
    low_degree: int
    _defects: dict = field(default_factory=dict, repr=False)

    @property
    def N(self) -> int:
        return len(self.g)

    def defect(self, m: int) -> PolyMap2:
        """``g_m^{-1} o h_{m+1} o f_m - h_m`` with degrees <= low_degree removed."""
        d = self._defects.get(m)
        if d is None:
            gi = self.g[m].inverse_polymap()
            hf_deg = self.h[m + 1].max_degree() * self.f[m].max_degree()
            K = max(gi.max_degree() * hf_deg, self.h[m].K, 1)
            hf = compose(self.h[m + 1].with_cutoff(K), self.f[m].with_cutoff(K), K)
            full = compose(gi.with_cutoff(K), hf, K) - self.h[m].with_cutoff(K)
            d = full.drop_degrees(self.low_degree)
            self._defects[m] = d
        return d

    def commutation_residual(self, m: int) -> float:
        """Largest coefficient of the defect in degrees <= low_degree (should vanish)."""
        gi = self.g[m].inverse_polymap()
        K = max(self.low_degree, 1)
        hf = compose(self.h[m + 1].with_cutoff(K), self.f[m].with_cutoff(K), K)
        full = compose(gi.with_cutoff(K), hf, K) - self.h[m].with_cutoff(K)
        return float(np.max(np.abs(full.coeffs)))

    # orbits -------------------------------------------------------------------
    def enter(self, z, w, e=None) -> Scaled:
        """Entry coordinates of ``(z, w)``, or of ``2**e (z, w)`` when exponents are given."""
        E = self.entry
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        s = Scaled.from_points(E[0, 0] * z + E[0, 1] * w, E[1, 0] * z + E[1, 1] * w)
        if e is not None:
            s = Scaled(s.zh, s.wh, s.e + np.asarray(e, dtype=np.int64))
        return s

    def leave(self, zh, wh, e) -> tuple[np.ndarray, np.ndarray]:
        Ei = np.linalg.inv(self.entry)
        z, w = _ldexp_c(zh, e), _ldexp_c(wh, e)
        return Ei[0, 0] * z + Ei[0, 1] * w, Ei[1, 0] * z + Ei[1, 1] * w

    def forward_orbit(self, z, w, n: int, e=None) -> list[Scaled]:
        x = self.enter(z, w, e)
        out = [x]
        for m in range(n):
            fz, fw = self.f[m].evaluate_scaled(x.zh, x.wh, x.e)
            x = Scaled(fz, fw, x.e.copy()).normalized()
            out.append(x)
        return out


def _rescale(v, de):
    """Multiply mantissas by 2**de (de may be negative)."""
    return _ldexp_c(v, de)


class PhiEvaluator:
    """Evaluate Phi_n and its successive differences on a batch of points."""

    def __init__(self, chain: LimitChain, z, w, n_max: int, e=None):
        if n_max > chain.N:
            raise ValueError(f"chain covers {chain.N} steps, asked for {n_max}")
        self.chain = chain
        self.orbit = chain.forward_orbit(z, w, n_max, e)
        self.B = []
        for m, x in enumerate(self.orbit):
            bz, bw = chain.h[m].evaluate_scaled(x.zh, x.wh, x.e)
            self.B.append((bz, bw))
        self.n = None
        self.E = None

    def _def(self, m):
        x = self.orbit[m]
        return self.chain.defect(m).evaluate_scaled(x.zh, x.wh, x.e)

    def _step_back(self, m, y, d):
        """``g_m^{-1}(y + d) - g_m^{-1}(y)`` at scale e_{m+1}, returned at scale e_m."""
        e_next = self.orbit[m + 1].e
        d1, d2 = self.chain.g[m].inverse_difference(y[0], y[1], d[0], d[1], scale_e=e_next)
        de = e_next - self.orbit[m].e
        return _rescale(d1, de), _rescale(d2, de)

    def run(self, n: int):
        """Backward pass for Phi_n; stores E^{(n)}_m for m <= n."""
        z = np.zeros_like(self.B[0][0])
        E = [None] * (n + 1)
        E[n] = (z.copy(), z.copy())
        for m in range(n - 1, -1, -1):
            t1, t2 = self._step_back(m, self.B[m + 1], E[m + 1])
            d1, d2 = self._def(m)
            E[m] = (t1 + d1, t2 + d2)
        self.n, self.E = n, E
        return self.value()

    def value(self):
        b = self.B[0]
        e = self.E[0]
        return self.chain.leave(b[0] + e[0], b[1] + e[1], self.orbit[0].e)

    def log2_value_norm(self) -> np.ndarray:
        """``log2 |Phi_n|`` per point without leaving mantissa form (entry must be unitary)."""
        Ei = np.linalg.inv(self.chain.entry)
        vz = self.B[0][0] + self.E[0][0]
        vw = self.B[0][1] + self.E[0][1]
        return self.log2_norm(Ei[0, 0] * vz + Ei[0, 1] * vw, Ei[1, 0] * vz + Ei[1, 1] * vw, self.orbit[0].e)

    def advance(self):
        """Compute Phi_{n+1} - Phi_n (as mantissa, exponent at level 0) and move to n+1."""
        n = self.n
        D = [None] * (n + 2)
        D[n] = self._def(n)
        for m in range(n - 1, -1, -1):
            y = (self.B[m + 1][0] + self.E[m + 1][0], self.B[m + 1][1] + self.E[m + 1][1])
            D[m] = self._step_back(m, y, D[m + 1])
        zero = np.zeros_like(self.B[0][0])
        newE = [(self.E[m][0] + D[m][0], self.E[m][1] + D[m][1]) for m in range(n + 1)]
        newE.append((zero.copy(), zero.copy()))
        self.E, self.n = newE, n + 1
        Ei = np.linalg.inv(self.chain.entry)
        dz = Ei[0, 0] * D[0][0] + Ei[0, 1] * D[0][1]
        dw = Ei[1, 0] * D[0][0] + Ei[1, 1] * D[0][1]
        return dz, dw, self.orbit[0].e

    @staticmethod
    def log2_norm(dz, dw, e) -> np.ndarray:
        nrm = np.hypot(np.abs(dz), np.abs(dw))
        with np.errstate(divide="ignore"):
            return np.log2(nrm) + e


def dphi_at_zero(chain: LimitChain, n: int) -> np.ndarray:
    """``DPhi_n(0)`` composed inside out: ``A_m = Dg_m^{-1} A_{m+1} Df_m``."""
    A = np.eye(2, dtype=complex)
    for m in range(n - 1, -1, -1):
        G = chain.g[m].linear_array()
        F = chain.f[m].linear_array()
        A = np.linalg.solve(G, A @ F)
    E = chain.entry
    return np.linalg.solve(E, A @ E)


def linear_step_deviation(chain: LimitChain) -> float:
    """``max_m |Dg_m - Df_m| / |Df_m|`` together with ``max_m |Dh_m(0) - I|``.

    Both vanishing gives ``DPhi_n(0) = Id`` for every n by induction, without
    forming the long products, whose rounding is amplified by the ratio of
    the two multipliers along a train.
    """
    dev = 0.0
    for m in range(chain.N):
        F = chain.f[m].linear_array()
        G = chain.g[m].linear_array()
        dev = max(dev, float(np.max(np.abs(G - F))) / float(np.max(np.abs(F))))
    hdev = max(float(np.max(np.abs(h.linear_array() - np.eye(2)))) for h in chain.h)
    return max(dev, hdev)

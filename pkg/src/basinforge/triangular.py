"""Triangular polynomial maps with closed-form inverses.

A lower map is ``(z, w) -> (a z, c z + b w + P(z))``; an upper map is
``(z, w) -> (a z + c w + P(w), b w)``, where ``P`` is a one-variable polynomial
without constant or linear term.  An optional unitary ``pre`` is applied
first, so the map reads ``T o pre``.  Inverses and inverse differences are
computed in closed form, never by series inversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, SingularityError
from .jet_core import PolyMap2, compose


@dataclass(frozen=True)
class TriangularMap:
    a: complex
    b: complex
    c: complex = 0j
    poly: tuple = ()  # poly[i] is the coefficient of t**(i + 2)
    lower: bool = True
    pre: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if abs(self.a) < 1e-300 or abs(self.b) < 1e-300:
            raise SingularityError("triangular map with a vanishing diagonal entry")

    @property
    def degree(self) -> int:
        nz = [i for i, v in enumerate(self.poly) if v != 0]
        return nz[-1] + 2 if nz else 1

    def linear_array(self) -> np.ndarray:
        a, b, c = self.a, self.b, self.c
        T = np.array([[a, 0], [c, b]]) if self.lower else np.array([[a, c], [0, b]])
        return T @ self.pre if self.pre is not None else T

    def _P(self, t, scale_e=None):
        out = np.zeros(np.shape(t), dtype=complex)
        for i, p in enumerate(self.poly):
            if p == 0:
                continue
            m = i + 2
            term = p * t**m
            if scale_e is not None:
                term = term * np.ldexp(1.0, (m - 1) * scale_e)
            out = out + term
        return out

    def _dP(self, u, d, scale_e=None):
        """``P(u + d) - P(u)`` written as ``d * sum (u+d)^i u^(m-1-i)`` (no cancellation)."""
        out = np.zeros(np.shape(u), dtype=complex)
        s = u + d
        for i, p in enumerate(self.poly):
            if p == 0:
                continue
            m = i + 2
            acc = np.zeros_like(out)
            for r in range(m):
                acc = acc + s**r * u ** (m - 1 - r)
            term = p * d * acc
            if scale_e is not None:
                term = term * np.ldexp(1.0, (m - 1) * scale_e)
            out = out + term
        return out

    # forward --------------------------------------------------------------------
    def evaluate_arrays(self, z, w, scale_e=None):
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        if self.pre is not None:
            M = self.pre
            z, w = M[0, 0] * z + M[0, 1] * w, M[1, 0] * z + M[1, 1] * w
        if self.lower:
            return self.a * z, self.c * z + self.b * w + self._P(z, scale_e)
        return self.a * z + self.c * w + self._P(w, scale_e), self.b * w

    # inverse --------------------------------------------------------------------
    def _post_inverse(self, z, w):
        if self.pre is None:
            return z, w
        Mi = self.pre.conj().T
        return Mi[0, 0] * z + Mi[0, 1] * w, Mi[1, 0] * z + Mi[1, 1] * w

    def inverse_arrays(self, Z, W, scale_e=None):
        Z = np.asarray(Z, dtype=complex)
        W = np.asarray(W, dtype=complex)
        if self.lower:
            z = Z / self.a
            w = (W - self.c * z - self._P(z, scale_e)) / self.b
        else:
            w = W / self.b
            z = (Z - self.c * w - self._P(w, scale_e)) / self.a
        return self._post_inverse(z, w)

    def inverse_difference(self, y1, y2, d1, d2, scale_e=None):
        """``T^{-1}(y + d) - T^{-1}(y)`` without subtracting nearly equal numbers."""
        y1, y2, d1, d2 = (np.asarray(v, dtype=complex) for v in (y1, y2, d1, d2))
        if self.lower:
            u = y1 / self.a
            e1 = d1 / self.a
            e2 = (d2 - self.c * e1 - self._dP(u, e1, scale_e)) / self.b
        else:
            u = y2 / self.b
            e2 = d2 / self.b
            e1 = (d1 - self.c * e2 - self._dP(u, e2, scale_e)) / self.a
        return self._post_inverse(e1, e2)

    # polynomial forms -------------------------------------------------------------
    def to_polymap(self, K: int | None = None) -> PolyMap2:
        K = max(self.degree, 1) if K is None else K
        if K < self.degree:
            raise ContractError("cutoff below the degree of the triangular map")
        T = np.array([[self.a, 0], [self.c, self.b]]) if self.lower else np.array([[self.a, self.c], [0, self.b]])
        c = np.zeros((2, K + 1, K + 1), dtype=complex)
        c[:, 1, 0] = T[:, 0]
        c[:, 0, 1] = T[:, 1]
        for i, p in enumerate(self.poly):
            m = i + 2
            if p == 0:
                continue
            if self.lower:
                c[1, m, 0] += p
            else:
                c[0, 0, m] += p
        out = PolyMap2(K, c)
        if self.pre is not None:
            out = compose(out, PolyMap2.linear(self.pre, K), K)
        return out

    def inverse_polymap(self, K: int | None = None) -> PolyMap2:
        """Exact polynomial inverse (degree equals the degree of P)."""
        K = max(self.degree, 1) if K is None else K
        a, b, cc = self.a, self.b, self.c
        c = np.zeros((2, K + 1, K + 1), dtype=complex)
        if self.lower:
            # z = Z/a, w = (W - c Z/a - P(Z/a)) / b
            c[0, 1, 0] = 1 / a
            c[1, 1, 0] = -cc / (a * b)
            c[1, 0, 1] = 1 / b
            for i, p in enumerate(self.poly):
                m = i + 2
                if p != 0:
                    c[1, m, 0] += -p / (b * a**m)
        else:
            c[1, 0, 1] = 1 / b
            c[0, 0, 1] = -cc / (a * b)
            c[0, 1, 0] = 1 / a
            for i, p in enumerate(self.poly):
                m = i + 2
                if p != 0:
                    c[0, 0, m] += -p / (a * b**m)
        out = PolyMap2(K, c)
        if self.pre is not None:
            out = out.left_linear(self.pre.conj().T)
        return out

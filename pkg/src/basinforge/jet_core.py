"""Truncated jet algebra for holomorphic maps C^2 -> C^2.

A :class:`PolyMap2` stores the coefficients of both components in a dense
``(2, K+1, K+1)`` array indexed by ``[component, i, j]`` for the monomial
``z**i * w**j``.  Entries with ``i + j > K`` are always zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from .errors import ContractError, DomainError, SingularityError

UNITARY_TOL = 1e-12


@dataclass(frozen=True)
class Complex2Vector:
    z: complex
    w: complex

    def __post_init__(self):
        if not (np.isfinite(self.z) and np.isfinite(self.w)):
            raise DomainError(f"non-finite vector ({self.z}, {self.w})")

    def as_array(self) -> np.ndarray:
        return np.array([self.z, self.w], dtype=complex)

    @classmethod
    def from_array(cls, v) -> "Complex2Vector":
        v = np.asarray(v, dtype=complex)
        return cls(complex(v[0]), complex(v[1]))

    def norm(self) -> float:
        return float(np.hypot(abs(self.z), abs(self.w)))


@dataclass(frozen=True)
class ComplexMatrix2:
    a11: complex
    a12: complex
    a21: complex
    a22: complex
    unitary: bool = field(init=False)

    def __post_init__(self):
        m = self.as_array()
        if not np.all(np.isfinite(m)):
            raise DomainError("non-finite matrix entry")
        dev = np.max(np.abs(m.conj().T @ m - np.eye(2)))
        object.__setattr__(self, "unitary", bool(dev <= UNITARY_TOL))

    def as_array(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]], dtype=complex)

    @classmethod
    def from_array(cls, m) -> "ComplexMatrix2":
        m = np.asarray(m, dtype=complex)
        return cls(complex(m[0, 0]), complex(m[0, 1]), complex(m[1, 0]), complex(m[1, 1]))

    def det(self) -> complex:
        return self.a11 * self.a22 - self.a12 * self.a21

    def __matmul__(self, other: "ComplexMatrix2") -> "ComplexMatrix2":
        return ComplexMatrix2.from_array(self.as_array() @ other.as_array())

    def inverse(self) -> "ComplexMatrix2":
        d = self.det()
        if abs(d) <= 1e-14:
            raise SingularityError(f"|det| = {abs(d):.3e}")
        return ComplexMatrix2(self.a22 / d, -self.a12 / d, -self.a21 / d, self.a11 / d)


@lru_cache(maxsize=None)
def _grid(K: int):
    i, j = np.indices((K + 1, K + 1))
    deg = i + j
    mask = deg <= K
    mask.setflags(write=False)
    deg.setflags(write=False)
    return deg, mask


def degree_mask(K: int) -> np.ndarray:
    """Boolean (K+1, K+1) mask of bidegrees with i + j <= K."""
    return _grid(K)[1]


def _degree_grid(K: int) -> np.ndarray:
    return _grid(K)[0]


@lru_cache(maxsize=None)
def _flat_layout(K: int):
    """Flat indexing of the triangular bidegree set and the truncated product pairs."""
    deg, mask = _grid(K)
    ii, jj = np.nonzero(mask)
    n = len(ii)
    pos = np.full((K + 1, K + 1), -1)
    pos[ii, jj] = np.arange(n)
    dd = deg[ii, jj]
    sa, sb = np.nonzero((dd[:, None] + dd[None, :]) <= K)
    so = pos[ii[sa] + ii[sb], jj[sa] + jj[sb]]
    return ii, jj, n, sa, sb, so


def _flat_mul(a: np.ndarray, b: np.ndarray, K: int) -> np.ndarray:
    """Truncated product of flat polynomials; leading axes of a and b broadcast."""
    _, _, n, sa, sb, so = _flat_layout(K)
    prod = a[..., sa] * b[..., sb]
    lead = prod.shape[:-1]
    prod = prod.reshape(-1, prod.shape[-1])
    rows = prod.shape[0]
    idx = (so[None, :] + n * np.arange(rows)[:, None]).ravel()
    re = np.bincount(idx, prod.real.ravel(), minlength=rows * n)
    im = np.bincount(idx, prod.imag.ravel(), minlength=rows * n)
    return (re + 1j * im).reshape(lead + (n,))


class PolyMap2:
    """Truncated polynomial map (f1, f2) of two complex variables.

    The constant term slot ``[c, 0, 0]`` exists in storage so that inputs
    with a constant term can be detected; germs at the origin keep it zero.
    """

    __slots__ = ("K", "coeffs")

    def __init__(self, K: int, coeffs=None):
        if K < 1:
            raise ContractError("cutoff K must be >= 1")
        self.K = int(K)
        if coeffs is None:
            arr = np.zeros((2, K + 1, K + 1), dtype=complex)
        else:
            arr = np.array(coeffs, dtype=complex)
            if arr.shape != (2, K + 1, K + 1):
                raise ContractError(f"coefficient array shape {arr.shape} does not match cutoff {K}")
            if np.any(arr[:, ~degree_mask(K)] != 0):
                raise ContractError("coefficients stored above total degree K")
        if not np.all(np.isfinite(arr)):
            raise DomainError("non-finite coefficient")
        arr.setflags(write=False)
        self.coeffs = arr

    # construction -----------------------------------------------------------
    @classmethod
    def identity(cls, K: int) -> "PolyMap2":
        return cls.linear(np.eye(2), K)

    @classmethod
    def linear(cls, m, K: int) -> "PolyMap2":
        m = m.as_array() if isinstance(m, ComplexMatrix2) else np.asarray(m, dtype=complex)
        c = np.zeros((2, K + 1, K + 1), dtype=complex)
        c[:, 1, 0] = m[:, 0]
        c[:, 0, 1] = m[:, 1]
        return cls(K, c)

    @classmethod
    def from_terms(cls, K: int, terms: dict) -> "PolyMap2":
        """Build from ``{(comp, i, j): coef}`` with comp in {1, 2}."""
        c = np.zeros((2, K + 1, K + 1), dtype=complex)
        for (comp, i, j), v in terms.items():
            if comp not in (1, 2):
                raise ContractError(f"component {comp} not in {{1, 2}}")
            if i + j > K:
                if v != 0:
                    raise ContractError(f"term z^{i} w^{j} above cutoff {K}")
                continue
            c[comp - 1, i, j] += v
        return cls(K, c)

    # inspection ---------------------------------------------------------------
    def coef(self, comp: int, i: int, j: int) -> complex:
        if i + j > self.K:
            return 0j
        return complex(self.coeffs[comp - 1, i, j])

    @property
    def has_constant(self) -> bool:
        return bool(np.any(self.coeffs[:, 0, 0] != 0))

    def linear_part(self) -> ComplexMatrix2:
        c = self.coeffs
        return ComplexMatrix2(c[0, 1, 0], c[0, 0, 1], c[1, 1, 0], c[1, 0, 1])

    def linear_array(self) -> np.ndarray:
        c = self.coeffs
        return np.array([[c[0, 1, 0], c[0, 0, 1]], [c[1, 1, 0], c[1, 0, 1]]])

    def homogeneous(self, m: int) -> "PolyMap2":
        c = np.where(_degree_grid(self.K) == m, self.coeffs, 0)
        return PolyMap2(self.K, c)

    def drop_degrees(self, upto: int) -> "PolyMap2":
        """Zero every coefficient of total degree <= upto."""
        c = np.where(_degree_grid(self.K) <= upto, 0, self.coeffs)
        return PolyMap2(self.K, c)

    def block_max(self, m: int) -> float:
        if m > self.K:
            return 0.0
        sel = _degree_grid(self.K) == m
        return float(np.max(np.abs(self.coeffs[:, sel]), initial=0.0))

    def block_abs_sum(self, m: int) -> np.ndarray:
        """Per-component sum of |coef| over degree m (bounds the homogeneous part on the polydisc)."""
        if m > self.K:
            return np.zeros(2)
        sel = _degree_grid(self.K) == m
        return np.abs(self.coeffs[:, sel]).sum(axis=1)

    def max_degree(self) -> int:
        deg = _degree_grid(self.K)
        nz = np.any(self.coeffs != 0, axis=0)
        return int(deg[nz].max()) if nz.any() else 0

    def with_cutoff(self, K: int) -> "PolyMap2":
        """Pad (K larger) or truncate (K smaller) to a new cutoff."""
        c = np.zeros((2, K + 1, K + 1), dtype=complex)
        m = min(K, self.K)
        c[:, : m + 1, : m + 1] = self.coeffs[:, : m + 1, : m + 1]
        c[:, ~degree_mask(K)] = 0
        return PolyMap2(K, c)

    # arithmetic ---------------------------------------------------------------
    def _check_same(self, other: "PolyMap2"):
        if other.K != self.K:
            raise ContractError(f"cutoff mismatch {self.K} vs {other.K}")

    def __add__(self, other: "PolyMap2") -> "PolyMap2":
        self._check_same(other)
        return PolyMap2(self.K, self.coeffs + other.coeffs)

    def __sub__(self, other: "PolyMap2") -> "PolyMap2":
        self._check_same(other)
        return PolyMap2(self.K, self.coeffs - other.coeffs)

    def scaled(self, s: complex) -> "PolyMap2":
        return PolyMap2(self.K, self.coeffs * s)

    def left_linear(self, m) -> "PolyMap2":
        """The map A∘p for a 2x2 matrix A."""
        m = m.as_array() if isinstance(m, ComplexMatrix2) else np.asarray(m, dtype=complex)
        return PolyMap2(self.K, np.tensordot(m, self.coeffs, axes=(1, 0)))

    def max_abs_diff(self, other: "PolyMap2") -> float:
        self._check_same(other)
        return float(np.max(np.abs(self.coeffs - other.coeffs)))

    def __repr__(self) -> str:
        terms = []
        for comp in (0, 1):
            for i, j in zip(*np.nonzero(self.coeffs[comp])):
                terms.append(f"{comp + 1}:z^{i}w^{j}={self.coeffs[comp, i, j]:.6g}")
        return f"PolyMap2(K={self.K}, " + ", ".join(terms) + ")"

    # evaluation -------------------------------------------------------------
    def evaluate_arrays(self, z, w) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized evaluation on arrays of points."""
        z = np.asarray(z, dtype=complex)
        w = np.asarray(w, dtype=complex)
        shape = np.broadcast(z, w).shape
        zf = np.broadcast_to(z, shape).ravel()
        wf = np.broadcast_to(w, shape).ravel()
        K = self.K
        zp = zf[:, None] ** np.arange(K + 1)
        wp = wf[:, None] ** np.arange(K + 1)
        out = np.einsum("ni,cij,nj->cn", zp, self.coeffs, wp)
        return out[0].reshape(shape), out[1].reshape(shape)

    def evaluate_scaled(self, zh, wh, e):
        """Evaluate at points ``2**e * (zh, wh)``, returning ``(value / 2**e)``.

        Each homogeneous block of degree m is weighted by ``2**((m-1) e)`` so the
        mantissas never underflow even when the true point does.
        """
        zh = np.asarray(zh, dtype=complex)
        wh = np.asarray(wh, dtype=complex)
        e = np.asarray(e)
        K = self.K
        zp = zh[:, None] ** np.arange(K + 1)
        wp = wh[:, None] ** np.arange(K + 1)
        deg = _degree_grid(K)
        out1 = np.zeros(zh.shape, dtype=complex)
        out2 = np.zeros(zh.shape, dtype=complex)
        for m in range(0, self.max_degree() + 1):
            blk = np.where(deg == m, self.coeffs, 0)
            if not np.any(blk):
                continue
            v = np.einsum("ni,cij,nj->cn", zp, blk, wp)
            scale = np.ldexp(1.0, (m - 1) * e)
            out1 = out1 + v[0] * scale
            out2 = out2 + v[1] * scale
        return out1, out2

    def jacobian_arrays(self, z, w) -> np.ndarray:
        """Jacobian matrices at arrays of points, shape (N, 2, 2)."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        K = self.K
        ks = np.arange(K + 1)
        zp = z[:, None] ** ks
        wp = w[:, None] ** ks
        dzp = np.zeros_like(zp)
        dwp = np.zeros_like(wp)
        dzp[:, 1:] = ks[1:] * zp[:, :-1]
        dwp[:, 1:] = ks[1:] * wp[:, :-1]
        jz = np.einsum("ni,cij,nj->nc", dzp, self.coeffs, wp)
        jw = np.einsum("ni,cij,nj->nc", zp, self.coeffs, dwp)
        return np.stack([jz, jw], axis=2)

    # serialization ------------------------------------------------------------
    def to_json_obj(self) -> dict:
        rows = []
        for comp in (0, 1):
            for i, j in zip(*np.nonzero(self.coeffs[comp])):
                v = self.coeffs[comp, i, j]
                rows.append([comp + 1, int(i), int(j), float(v.real), float(v.imag)])
        return {"K": self.K, "coeffs": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json_obj(cls, obj: dict) -> "PolyMap2":
        K = int(obj["K"])
        terms = {}
        for comp, i, j, re, im in obj["coeffs"]:
            key = (int(comp), int(i), int(j))
            terms[key] = terms.get(key, 0) + complex(re, im)
        return cls.from_terms(K, terms)

    @classmethod
    def from_json(cls, text: str) -> "PolyMap2":
        return cls.from_json_obj(json.loads(text))


def evaluate(p: PolyMap2, v: Complex2Vector) -> Complex2Vector:
    """Evaluate p at a single point."""
    a, b = p.evaluate_arrays(np.array([v.z]), np.array([v.w]))
    return Complex2Vector(complex(a[0]), complex(b[0]))


def compose(p: PolyMap2, q: PolyMap2, K: int | None = None) -> PolyMap2:
    """Truncation to degree K of p∘q."""
    if K is None:
        K = min(p.K, q.K)
    if p.K < K or q.K < K:
        raise ContractError(f"compose needs cutoffs >= {K}, got {p.K} and {q.K}")
    if q.has_constant:
        raise DomainError("inner map has a constant term")
    ii, jj, n, _, _, _ = _flat_layout(K)
    pk = p.with_cutoff(K)
    dmax = pk.max_degree()
    qf = q.with_cutoff(K).coeffs[:, ii, jj]
    pows = np.zeros((2, dmax + 1, n), dtype=complex)
    pows[:, 0, 0] = 1.0
    for d in range(1, dmax + 1):
        pows[:, d] = _flat_mul(pows[:, d - 1], qf, K)
    # inner[c, i] = sum_j p_c[i, j] q2^j, then sum_i q1^i * inner[c, i]
    pc = pk.coeffs[:, : dmax + 1, : dmax + 1]
    inner = np.einsum("cij,jn->cin", pc, pows[1])
    terms = _flat_mul(pows[0][None, :, :], inner, K)
    flat = terms.sum(axis=1)
    out = np.zeros((2, K + 1, K + 1), dtype=complex)
    out[:, ii, jj] = flat
    return PolyMap2(K, out)


def invert_formal(p: PolyMap2, K: int | None = None) -> PolyMap2:
    """Formal inverse up to degree K by fixed-point iteration on the nonlinear part."""
    if K is None:
        K = p.K
    if p.K < K:
        raise ContractError(f"invert_formal needs cutoff >= {K}, got {p.K}")
    if p.has_constant:
        raise DomainError("map has a constant term")
    L = p.linear_array()
    det = L[0, 0] * L[1, 1] - L[0, 1] * L[1, 0]
    if abs(det) <= 1e-14:
        raise SingularityError(f"linear part singular, |det| = {abs(det):.3e}")
    Linv = np.array([[L[1, 1], -L[0, 1]], [-L[1, 0], L[0, 0]]]) / det
    pk = p.with_cutoff(K)
    ident = PolyMap2.identity(K)
    q = PolyMap2.linear(Linv, K)
    # each pass fixes one more degree of q
    for _ in range(K - 1):
        resid = compose(pk, q, K) - ident
        q = q - resid.left_linear(Linv)
    return q


@dataclass
class CauchyReport:
    passed: bool
    D: float
    violations: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "D": self.D, "violations": self.violations}


def cauchy_certify(p: PolyMap2, D: float) -> CauchyReport:
    """Check |degree-m coefficients| <= D * sqrt(2)**m for every degree block."""
    if not 0 < D < 1:
        raise ContractError("D must lie in (0, 1)")
    viol = []
    for m in range(1, p.K + 1):
        mag = p.block_max(m)
        bound = D * math.sqrt(2) ** m
        if mag > bound * (1 + 1e-12):
            viol.append({"degree": m, "magnitude": mag, "bound": bound})
    return CauchyReport(passed=not viol, D=D, violations=viol)

"""Seeded sequences of automorphism germs with certified sphere bounds.

Every attracting family is built as ``f_n = L_n + N_n`` where the singular
values of ``L_n`` lie in ``[C + mu, D - mu]`` and the nonlinear part satisfies
``sup_{|z| <= 1} |N_n(z)| / |z| <= mu``.  Then ``C|z| <= |f_n(z)| <= D|z|`` on
the unit ball by the triangle inequality, so the bounds hold by construction
and the sampler in :func:`verify_uniform_attraction` only confirms them.

The distributions used for the random families are this library's choice.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.stats import norm, qmc

from .errors import ConfigError, ContractError
from .jet_core import PolyMap2, degree_mask, _degree_grid

FAMILIES = (
    "diagonal-random",
    "triangular-random",
    "full-random",
    "constant",
    "fornaess-short",
    "user-file",
)
ATTRACTING = ("diagonal-random", "triangular-random", "full-random", "constant", "user-file")
RATIO_TOL = 1e-9


@dataclass(frozen=True)
class AttractionBounds:
    C: float
    D: float

    def __post_init__(self):
        if not (0 < self.C <= self.D < 1):
            raise ConfigError(f"bounds need 0 < C <= D < 1, got C={self.C}, D={self.D}")


@dataclass(frozen=True)
class SequenceSpec:
    """Recipe for a :class:`MapSequence`.

    ``pattern='alternating'`` builds blocks in which one coordinate dominates,
    alternating from block to block.  ``train_law`` sizes the blocks so that
    each one comfortably hosts the engine of one train: ``'diagonal'`` for the
    ``|a/b|`` criterion with growth ``k``, ``'general'`` for the
    ``|a|^x/|b|`` criterion with growth 2.
    """

    family: str
    seed: int = 0
    bounds: AttractionBounds | None = None
    contact_order: int = 2
    cutoff: int = 3
    pattern: str = "iid"
    lead: str = "a"
    train_law: str = "diagonal"
    x: float = 1.5
    margin: float = 0.005
    nonlinear: float = 1.0
    band: float | None = None
    drift: float = 0.002
    block_jitter: int = 2
    prefix: int | None = None
    linear: tuple | None = None
    terms: tuple = ()
    path: str | None = None
    a0: float = 0.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "fornaess-short":
            if self.bounds is not None:
                raise ConfigError("fornaess-short is not uniformly attracting; omit bounds")
        elif self.bounds is None:
            if self.family != "constant":
                raise ConfigError(f"family {self.family} needs attraction bounds")
        if self.contact_order < 2:
            raise ConfigError("contact order must be >= 2")
        if self.cutoff < max(self.contact_order, 2):
            raise ConfigError("cutoff must be at least the contact order")
        if self.pattern not in ("iid", "alternating"):
            raise ConfigError(f"unknown pattern {self.pattern!r}")
        if self.lead not in ("a", "b"):
            raise ConfigError("lead must be 'a' or 'b'")
        if self.train_law not in ("diagonal", "general"):
            raise ConfigError("train_law must be 'diagonal' or 'general'")
        if self.family == "user-file" and not self.path:
            raise ConfigError("user-file family needs a path")
        if not 0 <= self.nonlinear <= 1:
            raise ConfigError("nonlinear fraction must lie in [0, 1]")
        b = self.bounds
        if b is not None and self.family not in ("constant", "user-file"):
            if b.C + self.margin >= b.D - self.margin:
                raise ConfigError("margin leaves no room between C and D")

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceSpec":
        d = dict(d)
        if "C" in d or "D" in d:
            d["bounds"] = AttractionBounds(float(d.pop("C")), float(d.pop("D")))
        elif isinstance(d.get("bounds"), dict):
            d["bounds"] = AttractionBounds(**d["bounds"])
        if d.get("linear") is not None:
            d["linear"] = tuple(tuple(_as_complex(v) for v in row) for row in d["linear"])
        if d.get("terms"):
            d["terms"] = tuple((int(c), int(i), int(j), _as_complex(v)) for c, i, j, v in d["terms"])
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown sequence keys: {sorted(extra)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.linear is not None:
            d["linear"] = [[[v.real, v.imag] for v in row] for row in self.linear]
        d["terms"] = [[c, i, j, [v.real, v.imag]] for c, i, j, v in self.terms]
        return d


def _as_complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([seed & (2**64 - 1), *stream])


def nonlinear_size(p: PolyMap2) -> float:
    """Upper bound for ``sup_{|z| <= 1} |N(z)| / |z|`` of the nonlinear part."""
    deg = _degree_grid(p.K)
    total = 0.0
    for m in range(2, p.K + 1):
        sums = np.abs(np.where(deg == m, p.coeffs, 0)).sum(axis=(1, 2))
        total += float(np.hypot(sums[0], sums[1]))
    return total


def certified_ratio_bounds(p: PolyMap2) -> tuple[float, float]:
    """Closed-form lower and upper bounds for ``|f(z)|/|z|`` on the unit ball."""
    s = np.linalg.svd(p.linear_array(), compute_uv=False)
    nu = nonlinear_size(p)
    return float(s[-1] - nu), float(s[0] + nu)


class MapSequence:
    """Lazily generated sequence n -> germ of f_n, bit-identical per (spec, n)."""

    def __init__(self, spec: SequenceSpec):
        self.spec = spec
        self._user = None
        if spec.family == "user-file":
            self._user = _load_user_germs(spec.path, spec.cutoff)
        self._blocks: list[int] = []
        self._block_rng = _rng(spec.seed, 2)
        self.germ = lru_cache(maxsize=None)(self._germ)

    @property
    def bounds(self) -> AttractionBounds | None:
        return self.spec.bounds

    @property
    def K(self) -> int:
        return self.spec.cutoff

    def __getitem__(self, n: int) -> PolyMap2:
        return self.germ(n)

    def germs(self, n_max: int) -> list[PolyMap2]:
        return [self.germ(n) for n in range(n_max)]

    def linear_arrays(self, n_max: int) -> np.ndarray:
        """Stack of linear parts, shape (n_max, 2, 2)."""
        return np.array([self.germ(n).linear_array() for n in range(n_max)])

    # blocks -------------------------------------------------------------------
    def _ranges(self):
        s = self.spec
        b = s.bounds
        lo_c, hi_d = b.C + s.margin, b.D - s.margin
        band = s.band if s.band is not None else (0.1 if s.train_law == "diagonal" else 0.02)
        w = band * (hi_d - lo_c)
        return (lo_c, lo_c + w), (hi_d - w, hi_d)

    def _block_base(self) -> tuple[float, float]:
        s = self.spec
        (lo0, lo1), (hi0, hi1) = self._ranges()
        lnD = math.log(1 / s.bounds.D)
        if s.train_law == "diagonal":
            rate = math.log(hi0 / lo1)
            growth = float(s.contact_order)
        else:
            rate = s.x * math.log(hi0) - math.log(lo1)
            growth = 2.0
        if rate <= 0:
            raise ConfigError(
                "alternating blocks cannot satisfy the train criterion with these bounds "
                f"(per-step log gain {rate:.4f} <= 0)"
            )
        return 1.25 * growth * lnD / rate, growth

    @property
    def prefix_length(self) -> int:
        """Opening steps dominated opposite to ``lead`` (they form train 0)."""
        s = self.spec
        if s.prefix is not None:
            return s.prefix
        return 2 if s.train_law == "diagonal" else 0

    def block_index(self, n: int) -> int:
        """Index of the dominance block containing step n (-1 for the prefix)."""
        n -= self.prefix_length
        if n < 0:
            return -1
        base, growth = self._block_base()
        while not self._blocks or self._blocks[-1] <= n:
            j = len(self._blocks)
            jit = int(self._block_rng.integers(0, self.spec.block_jitter + 1))
            length = math.ceil(base * growth**j) + jit
            start = self._blocks[-1] if self._blocks else 0
            self._blocks.append(start + length)
        return next(j for j, end in enumerate(self._blocks) if n < end)

    def block_ends(self, n_max: int) -> list[int]:
        self.block_index(n_max)
        off = self.prefix_length
        return [e + off for e in self._blocks if e + off <= n_max]

    def _dominant_first(self, n: int) -> bool:
        """True when the first diagonal entry dominates at step n."""
        j = self.block_index(n)
        lead_a = self.spec.lead == "a"
        return lead_a if j % 2 == 0 else not lead_a

    # generation -----------------------------------------------------------------
    def _moduli(self, rng, n):
        s = self.spec
        (lo0, lo1), (hi0, hi1) = self._ranges()
        if s.pattern == "alternating":
            big = math.exp(rng.uniform(math.log(hi0), math.log(hi1)))
            small = math.exp(rng.uniform(math.log(lo0), math.log(lo1)))
            return (big, small) if self._dominant_first(n) else (small, big)
        lo, hi = lo0, hi1
        return tuple(math.exp(v) for v in rng.uniform(math.log(lo), math.log(hi), size=2))

    def _nonlinear(self, rng, budget: float) -> np.ndarray:
        s = self.spec
        K = s.cutoff
        deg = _degree_grid(K)
        mask = (deg >= s.contact_order) & degree_mask(K)
        c = np.zeros((2, K + 1, K + 1), dtype=complex)
        cnt = int(mask.sum())
        vals = rng.standard_normal((2, cnt)) + 1j * rng.standard_normal((2, cnt))
        c[:, mask] = vals
        tmp = PolyMap2(K, c)
        size = nonlinear_size(tmp)
        if size == 0 or budget <= 0:
            return np.zeros_like(c)
        return c * (budget / size)

    def _germ(self, n: int) -> PolyMap2:
        if n < 0:
            raise ContractError("germ index must be >= 0")
        s = self.spec
        K = s.cutoff
        if s.family == "fornaess-short":
            a = s.a0 ** (2**n) if n < 64 else 0.0
            return PolyMap2.from_terms(max(K, 2), {(1, 2, 0): 1.0, (1, 0, 1): a, (2, 1, 0): a})
        if s.family == "constant":
            lin = np.array(s.linear if s.linear is not None else ((0.5, 0), (0, 0.3)), dtype=complex)
            p = PolyMap2.linear(lin, K)
            if s.terms:
                p = p + PolyMap2.from_terms(K, {(c, i, j): v for c, i, j, v in s.terms})
            return p
        if s.family == "user-file":
            return self._user[n % len(self._user)]
        rng = _rng(s.seed, 1, n)
        m1, m2 = self._moduli(rng, n)
        ph = np.exp(2j * np.pi * rng.uniform(size=2))
        T = np.diag([m1 * ph[0], m2 * ph[1]])
        if s.family == "diagonal-random":
            L = T
        elif s.family == "triangular-random":
            L = T.astype(complex)
            c = (rng.standard_normal() + 1j * rng.standard_normal()) * 0.5 * s.margin
            L[1, 0] = c
            L = self._fit_singular_values(L)
        else:
            L = self._rotation(n) @ T @ self._rotation(n).conj().T
        c = self._nonlinear(rng, s.nonlinear * s.margin)
        c[:, 1, 0] = L[:, 0]
        c[:, 0, 1] = L[:, 1]
        return PolyMap2(K, c)

    def _fit_singular_values(self, L: np.ndarray) -> np.ndarray:
        """Shrink the off-diagonal entry until the singular values respect the margins."""
        b = self.spec.bounds
        lo, hi = b.C + self.spec.margin, b.D - self.spec.margin
        for _ in range(60):
            sv = np.linalg.svd(L, compute_uv=False)
            if sv[-1] >= lo and sv[0] <= hi:
                return L
            L = L.copy()
            L[1, 0] *= 0.5
        L = L.copy()
        L[1, 0] = 0
        return L

    def _rotation(self, n: int) -> np.ndarray:
        """Slowly drifting unitary; angle and phase follow a seeded walk."""
        s = self.spec
        steps = _drift_walk(s.seed, s.drift, n + 1)
        t, phi = steps[n]
        c, sn = math.cos(t), math.sin(t)
        e = complex(math.cos(phi), math.sin(phi))
        return np.array([[c, -sn * e.conjugate()], [sn * e, c]], dtype=complex)


@lru_cache(maxsize=64)
def _drift_walk_block(seed: int, drift: float, block: int) -> np.ndarray:
    rng = _rng(seed, 3, block)
    return rng.uniform(-drift, drift, size=(1024, 2))


def _drift_walk(seed: int, drift: float, count: int) -> np.ndarray:
    nb = (count + 1023) // 1024
    inc = np.concatenate([_drift_walk_block(seed, drift, b) for b in range(nb)])[:count]
    return np.cumsum(inc, axis=0)


def _load_user_germs(path: str, K: int) -> list[PolyMap2]:
    obj = json.loads(Path(path).read_text())
    germs = obj["germs"] if isinstance(obj, dict) else obj
    if not germs:
        raise ConfigError(f"no germs in {path}")
    out = []
    for g in germs:
        p = PolyMap2.from_json_obj(g)
        out.append(p.with_cutoff(K) if p.K != K else p)
    return out


def generate(spec: SequenceSpec, n: int) -> PolyMap2:
    """Germ of f_n for the given spec (pure function of spec and n)."""
    return _sequence_for(spec).germ(n)


@lru_cache(maxsize=32)
def _sequence_for(spec: SequenceSpec) -> MapSequence:
    return MapSequence(spec)


# verification -----------------------------------------------------------------

def ball_samples(samples: int, seed: int = 20240611) -> np.ndarray:
    """Low-discrepancy points in the closed unit ball of C^2, shape (samples, 2).

    A scrambled Sobol sequence in five dimensions feeds a Gaussian direction
    (four coordinates) and a radius ``u**(1/4)`` (uniform in volume).
    """
    if samples < 1:
        raise ContractError("samples must be >= 1")
    sob = qmc.Sobol(d=5, scramble=True, seed=seed)
    u = sob.random_base2(max(0, math.ceil(math.log2(samples))))[:samples]
    u = np.clip(u, 1e-12, 1 - 1e-12)
    g = norm.ppf(u[:, :4])
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = u[:, 4] ** 0.25
    pts = (g[:, 0] + 1j * g[:, 1]) * r, (g[:, 2] + 1j * g[:, 3]) * r
    return np.stack(pts, axis=1)


@dataclass
class AttractionReport:
    passed: bool
    C: float | None
    D: float | None
    ratio_min: list = field(default_factory=list)
    ratio_max: list = field(default_factory=list)
    failing_steps: list = field(default_factory=list)
    family: str = ""

    def lower_ratio_trend(self) -> list:
        return self.ratio_min

    def to_dict(self) -> dict:
        return asdict(self)


def verify_uniform_attraction(seq: MapSequence, n_max: int, samples: int) -> AttractionReport:
    """Sample ``|f_n(z)|/|z|`` on the unit ball for n <= n_max and compare with (C, D)."""
    # the coordinate axes are added because extremal ratios of maps with
    # (anti-)diagonal linear part sit there
    axes = np.array([[r, 0] for r in (1.0, 0.5, 0.1)] + [[0, r] for r in (1.0, 0.5, 0.1)], dtype=complex)
    pts = np.concatenate([ball_samples(samples), axes])
    z, w = pts[:, 0], pts[:, 1]
    nz = np.hypot(np.abs(z), np.abs(w))
    keep = nz > 1e-300
    z, w, nz = z[keep], w[keep], nz[keep]
    b = seq.bounds
    rmin, rmax, bad = [], [], []
    for n in range(n_max + 1):
        fz, fw = seq.germ(n).evaluate_arrays(z, w)
        ratio = np.hypot(np.abs(fz), np.abs(fw)) / nz
        lo, hi = float(ratio.min()), float(ratio.max())
        rmin.append(lo)
        rmax.append(hi)
        if b is None or lo < b.C - RATIO_TOL or hi > b.D + RATIO_TOL:
            bad.append(n)
    return AttractionReport(
        passed=not bad,
        C=None if b is None else b.C,
        D=None if b is None else b.D,
        ratio_min=rmin,
        ratio_max=rmax,
        failing_steps=bad,
        family=seq.spec.family,
    )


def order_of_contact(seq: MapSequence, n_max: int) -> int:
    """Largest k with degrees 2..k-1 absent from every germ up to n_max.

    A purely linear sequence returns the cutoff K (the answer is "at least K").
    """
    K = seq.K
    if K < 2:
        raise ContractError("cutoff must be >= 2")
    first = K
    for n in range(n_max + 1):
        p = seq.germ(n)
        for m in range(2, first):
            if p.block_max(m) != 0:
                first = m
                break
        if first == 2:
            return 2
    return first

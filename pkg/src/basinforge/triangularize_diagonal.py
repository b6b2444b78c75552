"""Order-k conjugation of a directed diagonal sequence to triangular maps.

For every step we look for ``h_n = Id + P_n`` (P_n homogeneous of degree k)
and a triangular ``g_n`` with ``g_n o h_n = h_{n+1} o f_n`` up to degree k.
Each degree-k monomial of ``P_n`` obeys an affine backward recursion
``eta_n = (e_n + mu_n eta_{n+1}) / lambda_n`` with ``mu_n = a_n^i b_n^j``.
The one monomial that would not contract (``w^k`` in the first component on
even trains, ``z^k`` in the second on odd trains) is moved into ``g_n``.
What remains besides the normal-form monomial (``alpha_n w^k`` on odd trains,
``beta_n z^k`` on even trains) is the preliminary reduction of ``f_n`` to two
terms; both parts satisfy the same recursion and are solved together.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .direct_diagonal import DirectingWeights
from .errors import DegeneracyError, DomainError
from .jet_core import PolyMap2, compose
from .triangular import TriangularMap
from .train_diagonal import InequalityReport, TrainPartition

MIN_DIVISOR = 1e-8


def solve_bounded_orbit(mult, drive, terminal: complex = 0j, span: tuple | None = None) -> np.ndarray:
    """Backward iteration of ``x_n = mult_n x_{n+1} + drive_n``.

    Returns ``x_s, ..., x_e`` for ``span = (s, e)`` where ``x_e = terminal`` and
    ``mult``/``drive`` are indexed by n in ``[s, e)``.  The contraction
    ``max |mult_n| < 1`` is required and the geometric-series bound
    ``sup|x| <= |terminal| + sup|drive| / (1 - max|mult|)`` is checked.
    """
    mult = np.asarray(mult, dtype=complex)
    drive = np.asarray(drive, dtype=complex)
    if span is None:
        span = (0, len(mult))
    s, e = span
    if len(mult) != e - s or len(drive) != e - s:
        raise DomainError("mult and drive must cover the span")
    mmax = float(np.max(np.abs(mult))) if mult.size else 0.0
    if mmax >= 1:
        raise DomainError(f"backward recursion is not contracting (max |mult| = {mmax:.4f})")
    x = np.empty(e - s + 1, dtype=complex)
    x[-1] = terminal
    for i in range(e - s - 1, -1, -1):
        x[i] = mult[i] * x[i + 1] + drive[i]
    bound = abs(terminal) + (float(np.max(np.abs(drive))) if drive.size else 0.0) / (1 - mmax)
    if float(np.max(np.abs(x))) > bound * (1 + 1e-12) + 1e-300:
        raise DomainError("bounded orbit exceeds its geometric-series bound")
    return x


@dataclass
class ConjugationChain:
    """Per-step ``h_n`` (n <= N, ``h_N = Id``) and triangular ``g_n`` (n < N)."""

    k: int
    h: list = field(repr=False)
    g: list = field(repr=False)
    parity: np.ndarray = field(repr=False)
    normal: np.ndarray = field(repr=False)  # alpha_n (odd) or beta_n (even)
    corner: np.ndarray = field(repr=False)  # gamma_n (odd) or delta_n (even)
    min_divisor: float = 1.0
    sup_normal: float = 0.0
    sup_reduction: float = 0.0

    @property
    def N(self) -> int:
        return len(self.g)

    def to_json_obj(self) -> dict:
        rows = []
        for n in range(self.N):
            odd = bool(self.parity[n])
            rows.append(
                {
                    "n": n,
                    "parity": "odd" if odd else "even",
                    ("alpha" if odd else "beta"): [self.normal[n].real, self.normal[n].imag],
                    ("gamma" if odd else "delta"): [self.corner[n].real, self.corner[n].imag],
                    "h": self.h[n].to_json_obj(),
                }
            )
        return {"k": self.k, "steps": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())


def _monomials(k: int):
    return [(c, i, k - i) for c in (0, 1) for i in range(k + 1)]


def build_conjugation_diagonal(directed: DirectingWeights, partition: TrainPartition, k: int | None = None) -> ConjugationChain:
    """Solve the degree-k recursions on the directed germs, terminal value 0."""
    k = int(partition.k if k is None else k)
    germs = directed.germs
    N = len(germs)
    a = np.array([g.coeffs[0, 1, 0] for g in germs])
    b = np.array([g.coeffs[1, 0, 1] for g in germs])
    la, lb = np.log(np.abs(a)), np.log(np.abs(b))
    parity = np.asarray(directed.parity)
    sgn = np.where(parity == 1, 1.0, -1.0)
    if np.any(sgn * (la - lb) < -1e-9):
        raise DomainError("directed sequence lacks parity domination")
    P = np.zeros((N + 1, 2, k + 1), dtype=complex)  # P[n, comp, i] coefficient of z^i w^(k-i)
    corner = np.zeros(N, dtype=complex)
    min_div = math.inf
    for n in range(N - 1, -1, -1):
        F = germs[n].coeffs
        lam = (a[n], b[n])
        odd = parity[n] == 1
        for c, i, j in _monomials(k):
            e = F[c, i, j]
            mu = a[n] ** i * b[n] ** j
            is_corner = (odd and c == 1 and i == k) or ((not odd) and c == 0 and j == k)
            if is_corner:
                corner[n] = e + mu * P[n + 1, c, i]
                P[n, c, i] = 0
                continue
            ratio = abs(mu / lam[c])
            min_div = min(min_div, 1 - ratio)
            P[n, c, i] = (e + mu * P[n + 1, c, i]) / lam[c]
    if min_div < MIN_DIVISOR:
        raise DegeneracyError(f"reduction divisor {min_div:.3e} below {MIN_DIVISOR}")
    h = []
    for n in range(N + 1):
        terms = {(1, 1, 0): 1.0, (2, 0, 1): 1.0}
        for c, i, j in _monomials(k):
            if P[n, c, i] != 0:
                terms[(c + 1, i, j)] = terms.get((c + 1, i, j), 0) + P[n, c, i]
        h.append(PolyMap2.from_terms(k, terms))
    g = []
    normal = np.zeros(N, dtype=complex)
    for n in range(N):
        odd = parity[n] == 1
        poly = tuple([0j] * (k - 2) + [corner[n]])
        g.append(TriangularMap(a[n], b[n], 0j, poly, lower=bool(odd)))
        normal[n] = P[n, 0, 0] if odd else P[n, 1, k]
    red = P.copy()
    red[:N][parity == 1, 0, 0] = 0
    red[:N][parity == 0, 1, k] = 0
    return ConjugationChain(
        k=k,
        h=h,
        g=g,
        parity=parity,
        normal=normal,
        corner=corner,
        min_divisor=float(min_div if np.isfinite(min_div) else 1.0),
        sup_normal=float(np.max(np.abs(normal))) if N else 0.0,
        sup_reduction=float(np.max(np.abs(red))) if N else 0.0,
    )


def commutation_residuals(chain: ConjugationChain, germs, k: int | None = None) -> np.ndarray:
    """Relative max-coefficient residual of ``g_n o h_n - h_{n+1} o f_n`` through degree k."""
    k = chain.k if k is None else k
    out = np.empty(chain.N)
    for n in range(chain.N):
        gp = chain.g[n].to_polymap(k)
        lhs = compose(gp, chain.h[n].with_cutoff(k), k)
        rhs = compose(chain.h[n + 1].with_cutoff(k), germs[n].with_cutoff(k), k)
        scale = max(1.0, float(np.max(np.abs(lhs.coeffs))), float(np.max(np.abs(rhs.coeffs))))
        out[n] = float(np.max(np.abs(lhs.coeffs - rhs.coeffs))) / scale
    return out


def verify_commutation(chain: ConjugationChain, germs, k: int | None = None, threshold: float = 1e-9) -> InequalityReport:
    """Degree-k commuting check at every step, plus the triangular and identity-jet forms."""
    germs = germs.germs if hasattr(germs, "germs") and not callable(germs.germs) else germs
    res = commutation_residuals(chain, germs, k)
    rep = InequalityReport()
    rep.add("commuting_residual", threshold - res, f"max residual {float(res.max()) if res.size else 0.0:.3e}")
    lin = [float(np.max(np.abs(h.linear_array() - np.eye(2)))) for h in chain.h]
    rep.add("h_linear_part_identity", -np.asarray(lin))
    return rep


def orbit_bound_slack(chain: ConjugationChain, directed: DirectingWeights) -> float:
    """``sup|normal coefficient|`` against the geometric-series bound (drive/(1 - D))."""
    germs = directed.germs
    drives, mults = [], []
    k = chain.k
    for n, g in enumerate(germs):
        a, b = g.coeffs[0, 1, 0], g.coeffs[1, 0, 1]
        if chain.parity[n] == 1:
            drives.append(abs(g.coeffs[0, 0, k] / a))
            mults.append(abs(b**k / a))
        else:
            drives.append(abs(g.coeffs[1, k, 0] / b))
            mults.append(abs(a**k / b))
    if not drives:
        return math.inf
    # the normal coefficient also picks up reduction terms only through its own monomial
    bound = max(drives) / (1 - max(mults))
    return bound - chain.sup_normal

"""Quadratic conjugation of a triangularized general sequence.

On train j we look for ``h_n = Id + Q_n`` (Q_n homogeneous quadratic) and
``g_n(z, w) = (a_n z, c_n z + b_n w + d_n z^2)`` with

    h_n = g_n^{-1} o h_{n+1} o f_n   up to degree 2.

The six coefficients of ``Q_n`` depend affinely on those of ``Q_{n+1}``;
``d_n`` is chosen so that the ``z^2`` coefficient of the second component
vanishes.  Coefficients are stored as a (2, 3) array, component by row and
monomials ``w^2, z w, z^2`` by column.  At the start of train j the next
train's ``h`` is conjugated by the unitary ``M_j``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, ContractError, SingularityError
from .jet_core import PolyMap2
from .train_diagonal import InequalityReport
from .train_general import GeneralTrainPartition, K1_of, K2_of, TriangularizedSequence
from .triangular import TriangularMap

MONOMIALS = ((0, 2), (1, 1), (2, 0))  # (power of z, power of w)
NAMES = ("alpha02", "alpha11", "alpha20", "beta02", "beta11", "beta20")


@dataclass(frozen=True)
class QuadCoeffs:
    """Quadratic part of ``h - Id``; ``c[comp, m]`` with m indexing w^2, zw, z^2."""

    c: np.ndarray

    @classmethod
    def zero(cls) -> "QuadCoeffs":
        return cls(np.zeros((2, 3), dtype=complex))

    @classmethod
    def from_named(cls, **kw) -> "QuadCoeffs":
        arr = np.zeros(6, dtype=complex)
        for i, n in enumerate(NAMES):
            arr[i] = kw.get(n, 0)
        return cls(arr.reshape(2, 3))

    @classmethod
    def from_polymap(cls, p: PolyMap2) -> "QuadCoeffs":
        c = np.array([[p.coef(comp, i, j) for i, j in MONOMIALS] for comp in (1, 2)], dtype=complex)
        return cls(c)

    def named(self) -> dict:
        return dict(zip(NAMES, self.c.ravel()))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.c)))

    def to_polymap(self, K: int = 2) -> PolyMap2:
        terms = {(1, 1, 0): 1.0, (2, 0, 1): 1.0}
        for comp in range(2):
            for m, (i, j) in enumerate(MONOMIALS):
                if self.c[comp, m] != 0:
                    terms[(comp + 1, i, j)] = terms.get((comp + 1, i, j), 0) + self.c[comp, m]
        return PolyMap2.from_terms(K, terms)


def quad_after_linear(Q: np.ndarray, L: np.ndarray) -> np.ndarray:
    """Coefficients of ``u -> Q(L u)`` for a (2, 3) quadratic ``Q``."""
    (l11, l12), (l21, l22) = L
    # z' = l11 z + l12 w, w' = l21 z + l22 w; columns w^2, zw, z^2
    zz = np.array([l12 * l12, 2 * l11 * l12, l11 * l11])
    zw = np.array([l12 * l22, l11 * l22 + l12 * l21, l11 * l21])
    ww = np.array([l22 * l22, 2 * l21 * l22, l21 * l21])
    return Q[:, 0:1] * ww + Q[:, 1:2] * zw + Q[:, 2:3] * zz


def conjugate_by_unitary(Q: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Quadratic part of ``M^{-1} o (Id + Q) o M``."""
    return M.conj().T @ quad_after_linear(Q, M)


@dataclass
class CoeffRecursion:
    """Affine map ``Q_{n+1} -> Q_n`` (with d_n = 0) as a 6x6 matrix and constant."""

    matrix: np.ndarray
    constant: np.ndarray
    a: complex
    b: complex
    c: complex

    def multipliers(self) -> np.ndarray:
        return np.diag(self.matrix).copy()

    def cross_terms(self) -> np.ndarray:
        m = self.matrix.copy()
        np.fill_diagonal(m, 0)
        return m


def _quad_part(f: PolyMap2) -> np.ndarray:
    return np.array([[f.coef(comp, i, j) for i, j in MONOMIALS] for comp in (1, 2)], dtype=complex)


def quad_step(f2: np.ndarray, L: np.ndarray, Q_next: np.ndarray) -> tuple[np.ndarray, complex]:
    """One backward step; returns (Q_n with beta20 removed, d_n).

    ``L`` is the linear part of f_n; g_n shares its lower-triangular part.
    """
    a, b, c = L[0, 0], L[1, 1], L[1, 0]
    if abs(a) < 1e-14 or abs(b) < 1e-14:
        raise SingularityError("vanishing diagonal multiplier")
    P = f2 + quad_after_linear(Q_next, L)
    Linv = np.array([[1 / a, 0], [-c / (a * b), 1 / b]])
    Q = Linv @ P
    # g^{-1} adds -(d / (a^2 b)) * (first component of L u)^2 to the second component
    sq = np.array([L[0, 1] ** 2, 2 * L[0, 0] * L[0, 1], L[0, 0] ** 2]) / (a * a * b)
    d = Q[1, 2] / sq[2]
    Q = Q.copy()
    Q[1] = Q[1] - d * sq
    return Q, complex(d)


def derive_quad_recursions(f: PolyMap2, L: np.ndarray | None = None) -> CoeffRecursion:
    """Affine dependence of the six ``h_n`` coefficients on those of ``h_{n+1}`` (d_n = 0)."""
    L = f.linear_array() if L is None else np.asarray(L)
    a, b, c = L[0, 0], L[1, 1], L[1, 0]
    if abs(a) < 1e-14 or abs(b) < 1e-14:
        raise SingularityError("vanishing diagonal multiplier")
    f2 = _quad_part(f)
    Linv = np.array([[1 / a, 0], [-c / (a * b), 1 / b]])
    base = (Linv @ f2).ravel()
    mat = np.zeros((6, 6), dtype=complex)
    for col in range(6):
        e = np.zeros(6, dtype=complex)
        e[col] = 1
        mat[:, col] = (Linv @ quad_after_linear(e.reshape(2, 3), L)).ravel()
    return CoeffRecursion(matrix=mat, constant=base, a=a, b=b, c=c)


def choose_d_n(rec: CoeffRecursion, nxt: QuadCoeffs) -> complex:
    """``d_n`` that makes the beta20 relation vanish: ``b_n`` times its undamped value."""
    beta20 = (rec.matrix @ nxt.c.ravel() + rec.constant)[5]
    return complex(rec.b * beta20)


# constants ------------------------------------------------------------------------


def eps_ceiling(k: float) -> float:
    return min((11 - 5 * k) / 4, (5 - 2 * k) / 3, (3 - k) / 2)


@dataclass
class ConstantsLedger:
    """All proof constants for one run, computed from (C, D, k, x, eps, delta, lambda)."""

    C: float
    D: float
    k: float
    x: float
    eps: float
    delta: float
    lam: float
    K1: float
    K2: float
    K3: float
    X: float
    Y1: float
    Y2: float
    Z: float
    M: float
    j0: int | None = None
    j1: int | None = None
    Z_prefix: float = 0.0

    @property
    def Y(self) -> float:
        return self.Y2

    @property
    def kappa(self) -> float:
        return self.k - 2 + self.eps

    @property
    def rho(self) -> float:
        return self.D**self.k / (self.lam * self.C)

    @classmethod
    def build(cls, C: float, D: float, k: float = 2.1, x: float = 1.5, eps: float | None = None,
              delta: float = 0.05, lam: float | None = None) -> "ConstantsLedger":
        if not 1 < x < k:
            raise ConfigError(f"need 1 < x < k (x={x}, k={k})")
        if not k < 11 / 5:
            raise ConfigError(f"k < 11/5 required, got k={k}")
        if not D**k < C:
            raise ConfigError(f"D^k < C fails ({D**k:.4g} >= {C})")
        ceil = eps_ceiling(k)
        eps = ceil / 2 if eps is None else eps
        if not 0 < eps < ceil:
            raise ConfigError(f"eps must lie in (0, {ceil:.4g}), got {eps}")
        if delta <= 0:
            raise ConfigError("delta must be positive")
        lam = (1 + D**k / C) / 2 if lam is None else lam
        if not (lam < 1 and D**k < lam * C):
            raise ConfigError(f"lambda must satisfy D^k < lambda C < C (lambda={lam})")
        K1 = K1_of(C, D, x)
        K2 = K2_of(C, D, k, x)
        K3 = K2 ** (1 / x)
        r = 4 * D * D / (C * C)
        den = C ** (1 - eps) * D ** (eps / 2) * (1 - D ** (eps / 2))
        Y1 = r / den + 1
        Y2 = Y1 * (2 * r / den + 1)
        X = r / (delta * (1 - D ** (eps / 2)))
        Z = r * K3 * (6 * Y2 * X + 1)
        led = cls(C=C, D=D, k=k, x=x, eps=eps, delta=delta, lam=lam, K1=K1, K2=K2, K3=K3, X=X, Y1=Y1, Y2=Y2, Z=Z, M=0.0)
        led.M = defect_constant(led)
        led.j1 = j1_of(led)
        return led

    def with_Z(self, Z: float) -> "ConstantsLedger":
        d = asdict(self)
        d["Z"] = Z
        out = ConstantsLedger(**d)
        out.M = defect_constant(out)
        out.j1 = j1_of(out)
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rho"] = self.rho
        return d


def defect_constant(led: ConstantsLedger) -> float:
    """M with ``|h_n - g_n^{-1} h_{n+1} f_n| <= M |z|^k`` on ``B(0, r_n)``.

    Uses the degree-3 and degree-l envelopes and ``r_n`` to absorb the
    n-dependence: ``r^(3-k) <= 2^(k-3) D^(4 n kappa)`` and, for l >= 4,
    ``r^(l-3) <= (48 Z)^(3-l) D^(2 n kappa)``.
    """
    C, D, Z, k = led.C, led.D, led.Z, led.k
    pre = 2.0 ** (k - 3)
    t3 = 19 * D * D * Z * Z / C**3 * 81 * 2**1.5 * pre
    tail = 0.0
    q = 1 / (48 * Z)
    for ell in range(4, 200):
        term = ell**5 * 2 ** (ell / 2) * q ** (ell - 3)
        tail += term
        if term < 1e-300 or term < tail * 1e-17:
            break
    t4 = 28 * D * D * Z**3 / C**3 * pre * tail
    return t3 + t4


def j1_of(led: ConstantsLedger) -> int:
    """Smallest j with ``(1 + Z/(C(1-D))) D^(2^(j-1)/(k-x)) < 1/2``."""
    lhs0 = math.log1p(led.Z / (led.C * (1 - led.D)))
    for j in range(1, 64):
        if lhs0 + (2 ** (j - 1)) / (led.k - led.x) * math.log(led.D) < -math.log(2):
            return j
    raise ConfigError("j1 does not exist below 64")


# chain ------------------------------------------------------------------------------


@dataclass
class QuadChain:
    """Backward-propagated quadratic conjugation over the covered trains.

    ``Q[n]`` is the quadratic part of the h used at time n: ``h^j_n`` inside
    train j and ``M_j^{-1} h^j_{p_j} M_j`` at ``n = p_j``; ``Q_in[j]`` keeps
    ``h^j_{p_j}`` before that transfer.  ``Q[N] = 0``.
    """

    ps: list
    Q: np.ndarray = field(repr=False)  # (N + 1, 2, 3)
    Q_in: list = field(repr=False)
    d: np.ndarray = field(repr=False)
    beta20_residual: np.ndarray = field(repr=False)
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    c: np.ndarray = field(repr=False)
    M: list = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.d)

    def h_maps(self) -> list:
        return [QuadCoeffs(self.Q[n]).to_polymap(2) for n in range(self.N + 1)]

    def g_maps(self) -> list:
        starts = {p: j for j, p in enumerate(self.ps[:-1])}
        out = []
        for n in range(self.N):
            j = starts.get(n)
            pre = self.M[j] if j is not None and j >= 1 else None
            out.append(TriangularMap(self.a[n], self.b[n], self.c[n], (self.d[n],), lower=True, pre=pre))
        return out

    def boundary_norms(self) -> list:
        """``(j, max|coef h^{j-1}_{p_j}|, max|coef h^j_{p_j}|)`` for each train start."""
        return [(j, float(np.max(np.abs(self.Q[p]))), float(np.max(np.abs(self.Q_in[j])))) for j, p in enumerate(self.ps[:-1])]

    def to_csv(self, led: ConstantsLedger | None = None) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf)
        head = ["n", "max_abs_h_coef", "abs_d"]
        if led is not None:
            head.append("log_envelope")
        wr.writerow(head)
        for n in range(self.N):
            row = [n, repr(float(np.max(np.abs(self.Q[n])))), repr(abs(self.d[n]))]
            if led is not None:
                row.append(repr(math.log(led.Z) - 2 * n * led.kappa * math.log(led.D)))
            wr.writerow(row)
        return buf.getvalue()

    def to_json_obj(self) -> dict:
        cx = lambda v: [float(np.real(v)), float(np.imag(v))]
        return {
            "ps": list(self.ps),
            "d": [cx(v) for v in self.d],
            "h": [[cx(v) for v in self.Q[n].ravel()] for n in range(self.N + 1)],
        }


def propagate_train(germs: list, lin: np.ndarray, span: tuple, terminal: np.ndarray):
    """Backward steps over ``[p, r)``; returns (Q for p..r, d for p..r-1, beta20 residuals)."""
    p, r = span
    Q = np.zeros((r - p + 1, 2, 3), dtype=complex)
    d = np.zeros(r - p, dtype=complex)
    res = np.zeros(r - p)
    Q[-1] = terminal
    for n in range(r - 1, p - 1, -1):
        Qn, dn = quad_step(_quad_part(germs[n]), lin[n], Q[n + 1 - p])
        # substitution check on the undamped relation
        rec_beta = Qn[1, 2]
        Q[n - p] = Qn
        Q[n - p][1, 2] = 0
        d[n - p] = dn
        res[n - p] = abs(rec_beta) / max(1.0, abs(dn / lin[n][1, 1]))
    return Q, d, res


def select_global_chain(tri: TriangularizedSequence, partition: GeneralTrainPartition, trains_to_cover: int | None = None,
                        terminal: np.ndarray | None = None) -> QuadChain:
    """Terminal ``h = Id`` (or ``terminal``) at the last covered boundary, then backward through every train."""
    J = partition.complete if trains_to_cover is None else trains_to_cover
    if J < 1 or J > partition.complete:
        raise ContractError(f"cannot cover {J} trains with {partition.complete} complete")
    ps = list(partition.ps[: J + 1])
    N = ps[-1]
    Q = np.zeros((N + 1, 2, 3), dtype=complex)
    d = np.zeros(N, dtype=complex)
    res = np.zeros(N)
    Q[N] = np.zeros((2, 3)) if terminal is None else terminal
    Q_in = [None] * J
    for j in range(J - 1, -1, -1):
        p, r = ps[j], ps[j + 1]
        Qt, dt, rt = propagate_train(tri.germs, tri.lin, (p, r), Q[r])
        Q[p:r] = Qt[:-1]
        d[p:r] = dt
        res[p:r] = rt
        Q_in[j] = Qt[0].copy()
        if j >= 1:
            Q[p] = conjugate_by_unitary(Qt[0], tri.M[j])
    return QuadChain(ps=ps, Q=Q, Q_in=Q_in, d=d, beta20_residual=res, a=tri.a[:N].copy(), b=tri.b[:N].copy(),
                     c=tri.c[:N].copy(), M=list(tri.M[: J + 1]))


# max expressions ------------------------------------------------------------------------


def _suffix_max(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Suffix maxima of v and the index attaining each (first occurrence from the right end)."""
    out = np.empty_like(v)
    arg = np.empty(len(v), dtype=int)
    best, bi = -math.inf, -1
    for i in range(len(v) - 1, -1, -1):
        if v[i] >= best:
            best, bi = v[i], i
        out[i], arg[i] = best, bi
    return out, arg


@dataclass
class TrainLogs:
    """Log prefix products ``PA[i] = log|a_{p+i,p}|``, ``PB`` likewise, on one train."""

    p: int
    q: int
    r: int
    PA: np.ndarray
    PB: np.ndarray


def train_logs(chain_or_tri, j: int, ps: list, qs: list) -> TrainLogs:
    p, r = ps[j], ps[j + 1]
    la = np.log(np.abs(chain_or_tri.a[p:r]))
    lb = np.log(np.abs(chain_or_tri.b[p:r]))
    z = np.zeros(1)
    return TrainLogs(p, qs[j], r, np.concatenate([z, np.cumsum(la)]), np.concatenate([z, np.cumsum(lb)]))


def max_expressions(tl: TrainLogs, eps: float) -> dict:
    """Log of the max-expressions used in the coefficient bounds, for every n in [p, r].

    ``single[n] = max_{n<=t} log|b_{t,n}^(2-e)/a_{t,n}|``
    ``double_b[n] = max_{n<=s<=t} log(|b_{t,s}^(2-e)/a_{t,s}| |b_{s,n}|^(1-e))``
    ``double_a[n]`` the same with ``|a_{s,n}|``
    ``triple[n] = max_{n<=r<=s<=t} log(|b_{t,s}^(2-e)/a_{t,s}| |b_{s,r}|^(1-e) |a_{r,n}|^(1-e))``
    plus the maximizing (s, t) of ``double_a`` as offsets from p.
    """
    PA, PB = tl.PA, tl.PB
    e = eps
    F = (2 - e) * PB - PA
    SF, argt = _suffix_max(F)
    single = SF - F
    Kb = SF - F + (1 - e) * PB
    SKb, _ = _suffix_max(Kb)
    double_b = SKb - (1 - e) * PB
    Ka = SF - F + (1 - e) * PA
    SKa, args = _suffix_max(Ka)
    double_a = SKa - (1 - e) * PA
    H = (1 - e) * (PA - PB)
    T = H + SKb
    ST, _ = _suffix_max(T)
    triple = ST - (1 - e) * PA
    s_idx = args
    t_idx = argt[s_idx]
    return {"single": single, "double_b": double_b, "double_a": double_a, "triple": triple, "s": s_idx, "t": t_idx}


def _brute_double_a(tl: TrainLogs, eps: float, n: int) -> float:
    """Quadratic reference for ``double_a`` at offset n (test oracle)."""
    best = -math.inf
    L = len(tl.PA)
    for s in range(n, L):
        for t in range(s, L):
            v = (2 - eps) * (tl.PB[t] - tl.PB[s]) - (tl.PA[t] - tl.PA[s]) + (1 - eps) * (tl.PA[s] - tl.PA[n])
            best = max(best, v)
    return best


def classify_case(s: int, t: int, q_off: int, first: bool) -> str:
    """Case label of a maximizer (offsets from p_j)."""
    if first:
        return "I" if t >= q_off else "II"
    if s >= q_off:
        return "I"
    if t >= q_off:
        return "II"
    return "III"


def verify_wagon_max_bounds(partition: GeneralTrainPartition, tri, led: ConstantsLedger, trains: int | None = None) -> InequalityReport:
    """Both max-expression bounds, with maximizers classified by case."""
    rep = InequalityReport()
    lK3 = math.log(led.K3)
    lD = math.log(led.D)
    first, later, cases = [], [], {"I": 0, "II": 0, "III": 0}
    J = partition.complete if trains is None else trains
    attained = []
    for j in range(J):
        tl = train_logs(tri, j, partition.ps, partition.qs)
        mx = max_expressions(tl, led.eps)
        qo = tl.q - tl.p
        first.append([lK3 - mx["double_a"][0]])
        cases_first = classify_case(int(mx["s"][0]), int(mx["t"][0]), qo, True)
        attained.append({"j": j, "log_max_at_p": float(mx["double_a"][0]), "case": cases_first})
        n = np.arange(tl.p, tl.r)
        later.append(lK3 - 2 * n * led.kappa * lD - mx["double_a"][:-1])
        for i in range(len(n)):
            cases[classify_case(int(mx["s"][i]), int(mx["t"][i]), qo, False)] += 1
    cat = lambda xs: np.concatenate([np.ravel(np.asarray(v, dtype=float)) for v in xs]) if xs else np.array([])
    rep.add("max_at_train_start_le_K3", cat(first), json.dumps(attained))
    rep.add("max_inside_train_le_K3_envelope", cat(later), json.dumps(cases))
    return rep


# checks -------------------------------------------------------------------------------------


@dataclass
class QuadReport:
    """Checks on a QuadChain plus the derived j0 and the prefix Z."""

    report: InequalityReport
    j0: int | None
    Z_needed: float
    boundary: list
    applicable: list

    def to_dict(self) -> dict:
        return {"j0": self.j0, "Z_needed": self.Z_needed, "boundary": self.boundary, "applicable": self.applicable,
                **self.report.to_dict()}


def verify_quad_chain(chain: QuadChain, partition: GeneralTrainPartition, led: ConstantsLedger, germs=None) -> QuadReport:
    """Coefficient bounds (with refinements), the d_n bound, unitary transfer, boundary implication, Z envelope."""
    rep = InequalityReport()
    e, X, lD = led.eps, led.X, math.log(led.D)
    lX = math.log(X)
    J = len(chain.ps) - 1
    s = {k: [] for k in ("coef_bound_displayed", "coef_bound_alpha02", "coef_bound_alpha11_beta02",
                         "coef_bound_alpha20_beta11", "d_bound", "transfer_le_6R")}
    applicable = []
    for j in range(J):
        p, r = chain.ps[j], chain.ps[j + 1]
        tl = train_logs(chain, j, chain.ps, partition.qs)
        mx = max_expressions(tl, e)
        term = chain.Q[r]
        hyp = float(np.max(np.abs(term))) <= X
        applicable.append({"j": j, "terminal_max": float(np.max(np.abs(term))), "hypothesis_holds": hyp})
        if not hyp:
            continue
        n = np.arange(p, r + 1)
        damp = np.maximum(math.log(led.delta), e * (r - n) / 2 * lD)
        Qs = np.concatenate([chain.Q_in[j][None], chain.Q[p + 1 : r + 1]])
        with np.errstate(divide="ignore"):
            lq = np.log(np.abs(Qs))  # (L+1, 2, 3)
        lall = np.max(lq.reshape(len(n), 6)[:, :5], axis=1)
        s["coef_bound_displayed"].append(math.log(led.Y) + lX + mx["double_a"] + damp - lall)
        s["coef_bound_alpha02"].append(lX + mx["single"] + damp - lq[:, 0, 0])
        s["coef_bound_alpha11_beta02"].append(math.log(led.Y1) + lX + mx["double_b"] + damp - np.maximum(lq[:, 0, 1], lq[:, 1, 0]))
        s["coef_bound_alpha20_beta11"].append(math.log(led.Y2) + lX + mx["triple"] + damp - np.maximum(lq[:, 0, 2], lq[:, 1, 1]))
        r4 = 4 * led.D**2 / led.C**2
        with np.errstate(divide="ignore"):
            ld = np.log(np.abs(chain.d[p:r]))
        bound = math.log(r4 * (6 * led.Y * X + 1)) + mx["double_a"][1:]
        s["d_bound"].append(bound - ld)
        if j >= 1:
            R = float(np.max(np.abs(chain.Q_in[j])))
            s["transfer_le_6R"].append([6 * R - float(np.max(np.abs(chain.Q[p])))])
    for name, vals in s.items():
        rep.add(name, np.concatenate([np.ravel(np.asarray(v, dtype=float)) for v in vals]) if vals else np.array([]))
    interior = chain.beta20_residual
    rep.add("beta20_interior_zero", 1e-12 - interior, f"max residual {float(interior.max()) if interior.size else 0.0:.2e}")
    # boundary implication: terminal of train j bounded by X => start-of-train transfer bounded by X
    impl = []
    for j in range(1, J):
        ok = (float(np.max(np.abs(chain.Q[chain.ps[j + 1]]))) > X) or (float(np.max(np.abs(chain.Q[chain.ps[j]]))) <= X)
        impl.append((j, ok))
    j0 = next((j for j, ok in impl if ok), None)
    rep.add("boundary_implication_from_j0", [0.0 if ok else -1.0 for j, ok in impl if j0 is not None and j >= j0],
            f"j0 = {j0}")
    # Z envelope
    n = np.arange(chain.N + 1)
    with np.errstate(divide="ignore"):
        lc = np.log(np.maximum(np.max(np.abs(chain.Q.reshape(chain.N + 1, 6)), axis=1), 0))
        ldd = np.concatenate([np.log(np.abs(chain.d)), [-np.inf]])
    worst = np.maximum(lc, ldd) + 2 * n * led.kappa * lD
    Z_needed = float(np.exp(np.max(worst))) if np.isfinite(np.max(worst)) else 0.0
    rep.add("z_envelope", math.log(led.Z) - worst[np.isfinite(worst)])
    if germs is not None:
        res = commutation_residuals_quad(chain, germs)
        rep.add("commuting_degree2", 1e-9 - res, f"max residual {float(res.max()):.2e}")
    return QuadReport(report=rep, j0=j0, Z_needed=Z_needed, boundary=chain.boundary_norms(), applicable=applicable)


def commutation_residuals_quad(chain: QuadChain, germs: list) -> np.ndarray:
    """Max coefficient of ``g_n o h_n - h_{n+1} o f_n`` in degrees 1 and 2 (bar maps)."""
    from .jet_core import compose

    hs = chain.h_maps()
    gs = chain.g_maps()
    out = np.empty(chain.N)
    for n in range(chain.N):
        lhs = compose(gs[n].to_polymap(2), hs[n], 2)
        rhs = compose(hs[n + 1], germs[n].with_cutoff(2), 2)
        scale = max(1.0, float(np.max(np.abs(lhs.coeffs))))
        out[n] = float(np.max(np.abs(lhs.coeffs - rhs.coeffs))) / scale
    return out


def terminal_sensitivity(tri, partition, trains: int, terminal: np.ndarray) -> list:
    """Boundary coefficient differences between terminal Id and ``terminal``; should shrink backward."""
    c0 = select_global_chain(tri, partition, trains)
    c1 = select_global_chain(tri, partition, trains, terminal=terminal)
    return [float(np.max(np.abs(c0.Q[p] - c1.Q[p]))) for p in c0.ps]

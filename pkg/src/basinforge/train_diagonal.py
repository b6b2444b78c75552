"""Train partitions for sequences with diagonal linear parts.

A train ``I_j = [p_j, p_{j+1})`` has an engine ``[p_j, q_j]`` on which one
coordinate is contracted much harder than the other.  The dominant coordinate
alternates with the parity of j.  All comparisons are done on sums of log
moduli, so thresholds like ``D**(-k**j)`` never need to be formed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ContractError, DomainError
from .logmag import logabs, prefix_logs

SLACK = -1e-9
OFFDIAG_TOL = 1e-14


@dataclass(frozen=True)
class TrainRecord:
    j: int
    p: int
    q: int
    p_next: int


@dataclass
class TrainPartition:
    """Indices p_j, q_j plus the per-step log ratios they were built from.

    ``ps`` and ``qs`` hold every index found; train j is complete when
    ``p_{j+1}`` exists, i.e. for ``j < len(ps) - 1``.
    """

    k: float
    horizon: int
    ps: list
    qs: list
    truncated: bool
    D: float
    log_ratio: np.ndarray = field(repr=False)

    @property
    def trains(self) -> list[TrainRecord]:
        return [TrainRecord(j, self.ps[j], self.qs[j], self.ps[j + 1]) for j in range(len(self.ps) - 1)]

    @property
    def complete(self) -> int:
        return len(self.ps) - 1

    @property
    def covered(self) -> int:
        """End of the last complete train (the chain covers ``[0, covered)``)."""
        return self.ps[-1] if len(self.ps) > 1 else 0

    def train_of(self, n: int) -> int:
        """Index j of the train containing step n."""
        return int(np.searchsorted(np.asarray(self.ps), n, side="right") - 1)

    def to_json_obj(self) -> dict:
        return {
            "k": self.k,
            "trains": [asdict(t) for t in self.trains],
            "truncated": self.truncated,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())


def diagonal_log_ratios(seq, horizon: int, multipliers: str = "diagonal") -> np.ndarray:
    """``log|a_n| - log|b_n|`` for n < horizon.

    ``multipliers='column'`` uses the column norms ``|L e_1|, |L e_2|`` instead of
    the diagonal entries; this is how anti-diagonal linear parts are handled.
    """
    L = seq.linear_arrays(horizon)
    if multipliers == "diagonal":
        off = np.maximum(np.abs(L[:, 0, 1]), np.abs(L[:, 1, 0]))
        scale = np.maximum(np.abs(L[:, 0, 0]), np.abs(L[:, 1, 1]))
        bad = np.nonzero(off > OFFDIAG_TOL * np.maximum(scale, 1.0))[0]
        if bad.size:
            raise DomainError(f"linear part of f_{int(bad[0])} is not diagonal")
        a, b = L[:, 0, 0], L[:, 1, 1]
    elif multipliers == "column":
        a = np.hypot(np.abs(L[:, 0, 0]), np.abs(L[:, 1, 0]))
        b = np.hypot(np.abs(L[:, 0, 1]), np.abs(L[:, 1, 1]))
    else:
        raise ContractError(f"unknown multipliers mode {multipliers!r}")
    la, lb = logabs(a), logabs(b)
    with np.errstate(invalid="ignore"):
        out = la - lb
    # a vanishing multiplier makes the ratio undefined; treat it as neutral
    out[~np.isfinite(out)] = 0.0
    return out


def _threshold(k: float, j: int, D: float) -> float:
    """log of D**(-k**j)."""
    return (k**j) * math.log(1.0 / D)


def find_next_pair(S: np.ndarray, lo: int, sign: float, thr: float) -> tuple[int, int] | None:
    """Minimal q, then ratio-maximizing p in [lo, q), with sign*(S_q - S_p) >= thr.

    ``S`` are prefix sums of the per-step log ratios.  A running minimum of
    ``sign * S_p`` makes the scan linear; ties keep the smallest p.
    """
    N = len(S) - 1
    best_val, best_p = math.inf, -1
    for q in range(lo + 1, N + 1):
        v = sign * S[q - 1]
        if v < best_val:
            best_val, best_p = v, q - 1
        if sign * S[q] - best_val >= thr:
            return best_p, q
    return None


def build_trains_diagonal(seq, k: float, horizon: int, multipliers: str = "diagonal") -> TrainPartition:
    """Greedy train search within ``horizon`` steps."""
    if k < 2:
        raise ContractError("k must be >= 2")
    if horizon < 3:
        raise ContractError("horizon must be >= 3")
    D = seq.bounds.D if seq.bounds is not None else 0.5
    lr = diagonal_log_ratios(seq, horizon, multipliers)
    S = prefix_logs(lr)
    ps, qs = [0], [2]
    truncated = False
    j = 0
    while True:
        sign = 1.0 if j % 2 == 0 else -1.0
        found = find_next_pair(S, qs[-1], sign, _threshold(k, j + 1, D))
        if found is None:
            truncated = True
            break
        p, q = found
        ps.append(p)
        qs.append(q)
        j += 1
    return TrainPartition(k=k, horizon=horizon, ps=ps, qs=qs, truncated=truncated, D=D, log_ratio=lr)


def brute_force_pair(lr: np.ndarray, lo: int, sign: float, thr: float) -> tuple[int, int] | None:
    """Quadratic reference scan used as an oracle for :func:`find_next_pair`."""
    S = prefix_logs(lr)
    for q in range(lo + 1, len(lr) + 1):
        vals = [(sign * (S[q] - S[p]), p) for p in range(lo, q)]
        ok = [(v, p) for v, p in vals if v >= thr]
        if ok:
            vmax = max(v for v, _ in ok)
            return min(p for v, p in ok if v == vmax), q
    return None


@dataclass
class CheckResult:
    name: str
    passed: bool
    min_slack: float
    count: int = 0
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class InequalityReport:
    checks: list = field(default_factory=list)
    partial_sums: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, slacks, detail: str = "") -> CheckResult:
        slacks = np.asarray(list(slacks) if not isinstance(slacks, np.ndarray) else slacks, dtype=float)
        ms = float(slacks.min()) if slacks.size else math.inf
        c = CheckResult(name, bool(ms >= SLACK), ms, int(slacks.size), detail)
        self.checks.append(c)
        return c

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "partial_sums": self.partial_sums,
        }


def verify_diagonal_train_inequalities(partition: TrainPartition, seq=None) -> InequalityReport:
    """Check the engine and wagon inequalities on every complete train.

    Slacks are log-domain margins; a check passes when all are >= -1e-9.
    ``seq`` is accepted for interface symmetry; the partition carries the
    log ratios it was built from.
    """
    S = prefix_logs(partition.log_ratio)
    k, D = partition.k, partition.D
    lnD = math.log(1.0 / D)
    C = seq.bounds.C if seq is not None and seq.bounds is not None else None
    rep = InequalityReport()
    e1a, e1b, e2lo, e2hi, e3a, e3b, blen, bnd = [], [], [], [], [], [], [], []
    total = 0.0
    for t in partition.trains:
        j, p, q, r = t.j, t.p, t.q, t.p_next
        s = -1.0 if j % 2 == 0 else 1.0  # (-1)**(j+1)
        if j >= 1:
            n = np.arange(p, q + 1)
            e1a.append(s * (S[n] - S[p]))
            e1b.append(s * (S[q] - S[n]))
            val = s * (S[q] - S[p])
            e2lo.append([val - (k**j) * lnD])
            if C is not None:
                e2hi.append([(k**j) * lnD + math.log(1.0 / C) - val])
        # wagons: q_j <= m <= n <= p_{j+1}
        seg = s * S[q : r + 1]
        if seg.size:
            # min over m <= n of seg[n] - seg[m] via running maximum of seg[m]
            runmax = np.maximum.accumulate(seg)
            e3a.append(seg - runmax + (k ** (j + 1)) * lnD)
            e3b.append([seg[-1] - seg[0]])
        # next train's defining bound
        sn = 1.0 if j % 2 == 0 else -1.0
        bnd.append([sn * (S[partition.qs[j + 1]] - S[partition.ps[j + 1]]) - (k ** (j + 1)) * lnD])
        if C is not None and D > C:
            length = r - p
            need = (k ** (j + 1)) * lnD / math.log(D / C)
            # the bound concerns the engine found inside I_{j+1}; test it on that engine
            qn, pn = partition.qs[j + 1], partition.ps[j + 1]
            blen.append([(qn - pn) - need])
            total += length / k**j
            rep.partial_sums.append(total)
    cat = lambda xs: np.concatenate(xs) if xs else np.array([])
    rep.add("engine_monotone_from_start", cat(e1a))
    rep.add("engine_monotone_to_end", cat(e1b))
    rep.add("engine_sandwich_lower", cat(e2lo))
    if C is not None:
        rep.add("engine_sandwich_upper", cat(e2hi))
    rep.add("wagon_ratio_floor", cat(e3a), "strict in exact arithmetic")
    rep.add("wagon_endpoint", cat(e3b))
    rep.add("train_bound", cat(bnd))
    if C is not None:
        rep.add("train_length", cat(blen), "engine of I_{j+1} (hence I_{j+1}) vs k^{j+1} ln(1/D)/ln(D/C)")
        ps = np.asarray(rep.partial_sums)
        rep.add("partial_sums_nondecreasing", np.diff(ps) if ps.size > 1 else np.array([]))
    return rep

"""Rescaling ``l_n(z, w) = (theta_n z, tau_n w)`` that directs each diagonal train.

After directing, the first coordinate dominates on odd trains and the second
on even trains: ``(-1)**(j+1) * log(|a~_n| / |b~_n|) >= 0`` for n in I_j.
Weights are kept as natural logs.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import InvariantError
from .jet_core import PolyMap2, _degree_grid
from .logmag import logabs
from .train_diagonal import InequalityReport, TrainPartition

SLACK = -1e-9


@dataclass
class DirectingWeights:
    """Log weights ``log theta_n, log tau_n`` for 0 <= n <= N and the directed germs."""

    k: float
    log_theta: np.ndarray
    log_tau: np.ndarray
    parity: np.ndarray
    germs: list = field(repr=False)
    original: list = field(repr=False)
    distortion_budget: float = 1.0

    @property
    def N(self) -> int:
        return len(self.germs)

    def log_multipliers(self) -> tuple[np.ndarray, np.ndarray]:
        a = np.array([g.coeffs[0, 1, 0] for g in self.germs])
        b = np.array([g.coeffs[1, 0, 1] for g in self.germs])
        return logabs(a), logabs(b)

    def to_csv(self) -> str:
        la, lb = self.log_multipliers()
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["n", "log_theta", "log_tau", "log_abs_a_directed", "log_abs_b_directed"])
        for n in range(self.N):
            w.writerow([n, repr(self.log_theta[n]), repr(self.log_tau[n]), repr(la[n]), repr(lb[n])])
        return buf.getvalue()


def initial_log_weights(k: float, D: float) -> tuple[float, float]:
    """Smallest admissible weights at the start of train 0 (an even train)."""
    lD = math.log(1.0 / D)
    return lD / (k * k - 1), k * lD / (k * k - 1)


def _step(lt: float, lu: float, la: float, lb: float, odd: bool, k: float) -> tuple[float, float]:
    """One step of the weight recursion; odd trains favour the first coordinate."""
    if odd:
        lt2 = lt if la >= lb else lt + (lb - la)
        lu2 = lu if lb >= la else min(lu + (la - lb), k * lt2)
    else:
        lu2 = lu if lb >= la else lu + (la - lb)
        lt2 = lt if la >= lb else min(lt + (lb - la), k * lu2)
    return lt2, lu2


def direct_germ(p: PolyMap2, lt0: float, lu0: float, lt1: float, lu1: float) -> PolyMap2:
    """``l_{n+1} o f o l_n^{-1}`` with ``l = diag(e^lt, e^lu)``."""
    K = p.K
    i = np.arange(K + 1)[:, None]
    j = np.arange(K + 1)[None, :]
    inner = -(i * lt0 + j * lu0)
    scale = np.stack([np.exp(lt1 + inner), np.exp(lu1 + inner)])
    mask = _degree_grid(K) <= K
    c = np.where(mask, p.coeffs * scale, 0)
    return PolyMap2(K, c)


def direct_trains(seq, partition: TrainPartition, k: float | None = None) -> DirectingWeights:
    """Run the weight recursion over the complete trains and direct the germs."""
    k = partition.k if k is None else k
    N = partition.covered
    D = seq.bounds.D
    L = seq.linear_arrays(N)
    la, lb = logabs(L[:, 0, 0]), logabs(L[:, 1, 1])
    lt = np.empty(N + 1)
    lu = np.empty(N + 1)
    lt[0], lu[0] = initial_log_weights(k, D)
    parity = np.empty(N, dtype=int)
    for n in range(N):
        j = partition.train_of(n)
        parity[n] = j % 2
        lt[n + 1], lu[n + 1] = _step(lt[n], lu[n], la[n], lb[n], j % 2 == 1, k)
    orig = [seq.germ(n) for n in range(N)]
    germs = [direct_germ(orig[n], lt[n], lu[n], lt[n + 1], lu[n + 1]) for n in range(N)]
    C = seq.bounds.C
    out = DirectingWeights(
        k=k, log_theta=lt, log_tau=lu, parity=parity, germs=germs, original=orig, distortion_budget=D / C
    )
    # the recursion keeps both distortion inequalities; a failure here is a bug
    slack = _distortion_slacks(out)
    if slack.size and slack.min() < SLACK:
        raise InvariantError(f"bounded distortion violated (slack {slack.min():.3e})")
    return out


def _distortion_slacks(d: DirectingWeights) -> np.ndarray:
    k = d.k
    return np.concatenate([k * d.log_theta - d.log_tau, k * d.log_tau - d.log_theta])


def verify_directing(d: DirectingWeights) -> InequalityReport:
    """Distortion, parity domination, weight monotonicity and coefficient inflation."""
    rep = InequalityReport()
    k = d.k
    rep.add("bounded_distortion_theta", k * d.log_theta - d.log_tau)
    rep.add("bounded_distortion_tau", k * d.log_tau - d.log_theta)
    la, lb = d.log_multipliers()
    sgn = np.where(d.parity == 1, 1.0, -1.0)
    rep.add("parity_domination", sgn * (la - lb))
    rep.add("weights_at_least_one", np.concatenate([d.log_theta, d.log_tau]))
    rep.add("theta_nondecreasing", np.diff(d.log_theta))
    infl = []
    for g, f in zip(d.germs, d.original):
        a = np.abs(f.drop_degrees(1).coeffs)
        b = np.abs(g.drop_degrees(1).coeffs)
        nz = a > 0
        if np.any(nz):
            infl.append(math.log(d.distortion_budget) - float(np.max(np.log(b[nz] / a[nz]))))
    rep.add("coefficient_inflation", infl, "log(D/C) minus worst log inflation")
    return rep


def directed_orbit_norms(seq, d: DirectingWeights, z0, w0) -> np.ndarray:
    """Norms of ``l_{n}(f_{n,0}(z))`` along an orbit (surrogate for basin equivalence)."""
    z, w = complex(z0), complex(w0)
    out = []
    for n in range(d.N):
        out.append(math.hypot(abs(z) * math.exp(d.log_theta[n]), abs(w) * math.exp(d.log_tau[n])))
        a, b = seq.germ(n).evaluate_arrays(np.array([z]), np.array([w]))
        z, w = complex(a[0]), complex(b[0])
    return np.array(out)

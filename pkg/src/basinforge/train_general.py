"""Trains for sequences with arbitrary linear parts.

Each train carries a unit vector ``v_j``; in the frames built here every
linear part on train j is lower triangular with ``[0, 1]`` as the image of
``v_j``.  The search criterion compares ``|det Df_{q,p}|`` with the growth of
``df_{., p_j} v_j``::

    log Q(p, q) = (Lambda_q - Lambda_p) - (x + 1) (l_q - l_p) <= 2^(j+1) log D

where ``Lambda`` are prefix sums of ``log|det Df_n(0)|`` and ``l_n`` is
``log|df_{n, p_j}(v_j)|``.  Everything is kept as log moduli; vectors are
renormalized at each step.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DegeneracyError, FrameError
from .jet_core import PolyMap2, compose
from .train_diagonal import InequalityReport, find_next_pair

EIG_GAP_TOL = 1e-12
UNITARY_TOL = 1e-10
UPPER_TOL = 1e-10


def frame_to_e2(y) -> np.ndarray:
    """Unitary ``R`` with ``R y = |y| (0, 1)``: rows ``(y2, -y1)`` and ``(conj y1, conj y2)``."""
    y = np.asarray(y, dtype=complex)
    y = y / np.linalg.norm(y)
    return np.array([[y[1], -y[0]], [np.conj(y[0]), np.conj(y[1])]])


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return v / np.linalg.norm(v)


def _phase_normalize(v) -> np.ndarray:
    """Unit vector whose first nonzero component is real and nonnegative."""
    v = _unit(v)
    for c in v:
        if abs(c) > 1e-300:
            return v * (abs(c) / c)
    return v


def _drop_upper(g: PolyMap2) -> PolyMap2:
    e = abs(g.coeffs[0, 0, 1])
    if e > UPPER_TOL:
        raise FrameError(f"upper linear entry {e:.3e} is not rounding noise")
    c = g.coeffs.copy()
    c[0, 0, 1] = 0
    return PolyMap2(g.K, c)


def push_logs(L: np.ndarray, v, start: int, stop: int) -> tuple[np.ndarray, list]:
    """``log|L_{n-1} ... L_start v|`` for start <= n <= stop, and the unit directions."""
    v = _unit(v)
    logs = np.zeros(stop - start + 1)
    dirs = [v]
    acc = 0.0
    for i, n in enumerate(range(start, stop)):
        y = L[n] @ v
        r = float(np.linalg.norm(y))
        if r == 0:
            raise DegeneracyError(f"tracked vector annihilated at step {n}")
        acc += math.log(r)
        v = y / r
        logs[i + 1] = acc
        dirs.append(v)
    return logs, dirs


def normalized_product(L: np.ndarray, start: int, stop: int) -> tuple[np.ndarray, float]:
    """``Df_{stop,start}(0)`` as (unit-norm matrix, log of the dropped scale)."""
    A = np.eye(2, dtype=complex)
    lg = 0.0
    for n in range(start, stop):
        A = L[n] @ A
        s = float(np.max(np.abs(A)))
        A = A / s
        lg += math.log(s)
    return A, lg


@dataclass
class GeneralTrainPartition:
    """Indices ``p_j, q_j`` with tracked vectors ``v_j`` and unitaries ``U_j``."""

    k: float
    x: float
    horizon: int
    ps: list
    qs: list
    vs: list = field(repr=False)
    Us: list = field(repr=False)
    truncated: bool
    D: float
    C: float | None = None
    log_det: np.ndarray = field(default=None, repr=False)

    @property
    def complete(self) -> int:
        return len(self.ps) - 1

    @property
    def covered(self) -> int:
        return self.ps[-1] if len(self.ps) > 1 else 0

    @property
    def trains(self):
        from .train_diagonal import TrainRecord

        return [TrainRecord(j, self.ps[j], self.qs[j], self.ps[j + 1]) for j in range(len(self.ps) - 1)]

    def train_of(self, n: int) -> int:
        return int(np.searchsorted(np.asarray(self.ps), n, side="right") - 1)

    def to_json_obj(self) -> dict:
        cx = lambda a: [[float(np.real(c)), float(np.imag(c))] for c in np.ravel(a)]
        return {
            "k": self.k,
            "x": self.x,
            "truncated": self.truncated,
            "trains": [
                {"j": j, "p": self.ps[j], "q": self.qs[j], "v": cx(self.vs[j]), "U": cx(self.Us[j])}
                for j in range(len(self.ps))
            ],
        }


def q0_for(k: float, x: float) -> int:
    return math.ceil(2.0 / (k - x))


def build_trains_general(seq, k: float, x: float = 1.5, horizon: int = 2000, max_trains: int | None = None) -> GeneralTrainPartition:
    """Greedy search: q minimal, then p minimizing the acceptance quantity.

    Stops at the horizon (truncated) or after ``max_trains`` complete trains.
    """
    if not 1 < x < k:
        raise ContractError(f"need 1 < x < k, got x={x}, k={k}")
    b = seq.bounds
    if b is not None and not b.D**k < b.C:
        raise ContractError(f"D^k < C fails: {b.D**k:.4g} >= {b.C:.4g}")
    D = b.D if b is not None else 0.5
    L = seq.linear_arrays(horizon)
    dets = np.abs(L[:, 0, 0] * L[:, 1, 1] - L[:, 0, 1] * L[:, 1, 0])
    if np.any(dets == 0):
        raise DegeneracyError("singular linear part")
    log_det = np.log(dets)
    Lam = np.concatenate([[0.0], np.cumsum(log_det)])
    q0 = q0_for(k, x)
    if q0 >= horizon:
        raise ContractError("horizon shorter than the first engine")
    ps, qs = [0], [q0]
    vs, Us = [np.array([1, 0], dtype=complex)], [np.eye(2, dtype=complex)]
    truncated = False
    j = 0
    while max_trains is None or j < max_trains:
        q_j = qs[-1]
        # the image of v_j at q_j is exactly U_j^H v_j; pushing v_j itself across
        # the engine would amplify rounding by the eigenvalue ratio
        start = _image_at_q(L, vs[-1], Us[-1], ps[-1], q_j, j)
        ell, dirs = push_logs(L, start, q_j, horizon)
        S = Lam[q_j:] - (x + 1) * ell  # S[n - q_j]
        thr = (2 ** (j + 1)) * math.log(1 / D)
        found = find_next_pair(S, 0, -1.0, thr)
        if found is None:
            truncated = True
            break
        p, q = found[0] + q_j, found[1] + q_j
        u = dirs[p - q_j]
        A, _ = normalized_product(L, p, q)
        U, v_next = _eigen_frame(A, u, p, q)
        ps.append(p)
        qs.append(q)
        vs.append(v_next)
        Us.append(U)
        j += 1
    return GeneralTrainPartition(
        k=k, x=x, horizon=horizon, ps=ps, qs=qs, vs=vs, Us=Us, truncated=truncated, D=D,
        C=b.C if b is not None else None, log_det=log_det,
    )


def _image_at_q(L, v, U, p: int, q: int, j: int) -> np.ndarray:
    """Direction of ``df_{q_j,p_j}(v_j)``."""
    if j == 0:
        _, dirs = push_logs(L, v, p, q)
        return dirs[-1]
    return _unit(U.conj().T @ v)


def incoming_direction(L, partition, j: int) -> np.ndarray:
    """Direction of ``df_{p_j, p_{j-1}}(v_{j-1})`` (j >= 1), pushed forward from q_{j-1}."""
    pj, qj = partition.ps[j - 1], partition.qs[j - 1]
    start = _image_at_q(L, partition.vs[j - 1], partition.Us[j - 1], pj, qj, j - 1)
    _, dirs = push_logs(L, start, qj, partition.ps[j])
    return dirs[-1]


def covector_frames(L, row_q: np.ndarray, p: int, q: int) -> list:
    """Frames on ``[p, q]`` from the invariant covector propagated backward.

    ``row_q`` is the first row of the frame at q; ``omega_i ~ omega_{i+1} L_i``
    keeps ``[0, 1]`` invariant and is the numerically stable direction when the
    tracked line is the strongly contracted one.
    """
    rows = [None] * (q - p + 1)
    r = _unit(row_q)
    rows[-1] = r
    for i in range(q - 1, p - 1, -1):
        r = _unit(r @ L[i])
        rows[i - p] = r
    return [np.array([r, [-np.conj(r[1]), np.conj(r[0])]]) for r in rows]


def _eigen_frame(A: np.ndarray, u: np.ndarray, p: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Unitary ``U`` with ``u`` an eigenvector of ``U A``, and the other unit eigenvector."""
    w = _unit(A @ u)
    U = frame_to_e2(u).conj().T @ frame_to_e2(w)
    B = U @ A
    lam_u = complex(np.vdot(u, B @ u))
    lam_o = complex(np.linalg.det(B)) / lam_u if lam_u != 0 else 0j
    scale = max(abs(lam_u), abs(lam_o))
    if scale == 0 or abs(lam_u - lam_o) / scale < EIG_GAP_TOL:
        raise DegeneracyError(
            f"eigenvalues of U Df_{{{q},{p}}} not separated: |lam_u|={abs(lam_u):.3e}, |lam_o|={abs(lam_o):.3e}"
        )
    perp = np.array([-np.conj(u[1]), np.conj(u[0])])
    v = (B - lam_u * np.eye(2)) @ perp
    return U, _phase_normalize(v)


def eigen_residuals(partition: GeneralTrainPartition, seq) -> np.ndarray:
    """Relative eigen-equation residuals for both eigenpairs of each ``U_j Df_{q_j,p_j}``."""
    L = seq.linear_arrays(partition.covered or partition.qs[-1])
    out = []
    for j in range(1, len(partition.ps)):
        p, q = partition.ps[j], partition.qs[j]
        if q > len(L):
            break
        A, _ = normalized_product(L, p, q)
        B = partition.Us[j] @ A
        scale = np.linalg.norm(B, 2)
        for y in (incoming_direction(L, partition, j), partition.vs[j]):
            By = B @ y
            lam = complex(np.vdot(y, By))
            out.append(float(np.linalg.norm(By - lam * y)) / scale)
    return np.asarray(out)


# frames -----------------------------------------------------------------------


@dataclass
class EngineFrame:
    """Engine-local lower-triangular data in the frames ``S_j, T_i`` (j >= 1)."""

    j: int
    p: int
    q: int
    S: np.ndarray
    T: list = field(repr=False)  # T[i - p] for p <= i <= q, T[0] = S
    alpha: np.ndarray = field(repr=False)
    beta: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)

    def log_prefix(self) -> tuple[np.ndarray, np.ndarray]:
        """``log|alpha_{n,p}|, log|beta_{n,p}|`` for p <= n <= q."""
        z = np.zeros(1)
        return (np.concatenate([z, np.cumsum(np.log(np.abs(self.alpha)))]),
                np.concatenate([z, np.cumsum(np.log(np.abs(self.beta)))]))


@dataclass
class TriangularizedSequence:
    """Frames ``W_i, V_j`` and the lower-triangular data of ``f~_i = W_{i+1} f_i W_i^{-1}``.

    ``W_start[j] = V_j`` and ``W_end[j] = W_{p_{j+1}}`` (the frame train j hands
    over); ``M[j] = V_j W_end[j-1]^{-1}`` for j >= 1.  ``germs[i]`` is ``f~_i``.
    """

    ps: list
    W: list = field(repr=False)  # W[i] for steps strictly inside trains, W[p_j] = V_j
    W_end: list = field(repr=False)
    M: list = field(repr=False)
    lin: np.ndarray = field(repr=False)
    germs: list = field(repr=False)
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    c: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.a)

    def train_of(self, n: int) -> int:
        return int(np.searchsorted(np.asarray(self.ps), n, side="right") - 1)

    def entry(self) -> np.ndarray:
        return self.W[0]

    def bar_germs(self) -> list:
        """``f~`` with the boundary unitaries ``M_j`` folded into the first step of each train.

        The upper linear entry of ``f~`` is rounding noise (checked below
        UPPER_TOL); it is set to zero so that linear parts are exactly lower
        triangular and ``DPhi_n(0) = Id`` holds over long chains.
        """
        out = [_drop_upper(g) for g in self.germs]
        for j in range(1, len(self.ps) - 1):
            p = self.ps[j]
            g = out[p]
            out[p] = compose(g, PolyMap2.linear(self.M[j], g.K), g.K)
        return out

    def log_prefix(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """``log|a_{n,p_j}|, log|b_{n,p_j}|`` for p_j <= n <= p_{j+1}."""
        s, e = self.ps[j], self.ps[j + 1]
        z = np.zeros(1)
        return (np.concatenate([z, np.cumsum(np.log(np.abs(self.a[s:e])))]),
                np.concatenate([z, np.cumsum(np.log(np.abs(self.b[s:e])))]))

    def c_product(self, n: int, m: int) -> complex:
        """``c_{n,m}`` by the convolution sum (n, m inside one train)."""
        tot = 0j
        for i in range(m, n):
            tot += np.prod(self.b[i + 1 : n]) * self.c[i] * np.prod(self.a[m:i])
        return complex(tot)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf)
        wr.writerow(["n", "train", "log_abs_a", "log_abs_b", "abs_c"])
        for n in range(self.N):
            wr.writerow([n, self.train_of(n), repr(math.log(abs(self.a[n]))), repr(math.log(abs(self.b[n]))), repr(abs(self.c[n]))])
        return buf.getvalue()

    def to_json_obj(self) -> dict:
        cx = lambda a: [[float(np.real(c)), float(np.imag(c))] for c in np.ravel(a)]
        return {"V": [cx(w) for w in (self.W[p] for p in self.ps[:-1])], "M": [cx(m) if m is not None else None for m in self.M]}


def _check_unitary(U: np.ndarray, what: str):
    err = float(np.max(np.abs(U @ U.conj().T - np.eye(2))))
    if err > UNITARY_TOL:
        raise FrameError(f"{what} lost unitarity ({err:.2e})")


def _lower_data(M: np.ndarray):
    return M[0, 0], M[1, 1], M[1, 0], M[0, 1]


def triangularize_frames(seq, partition: GeneralTrainPartition) -> tuple[TriangularizedSequence, list]:
    """Frames for every complete train plus engine frames for j >= 1."""
    J = partition.complete
    if J < 1:
        raise ContractError("no complete train to triangularize")
    N = partition.covered
    L = seq.linear_arrays(N)
    W = [None] * (N + 1)
    W_end, M = [], [None]
    lin = np.zeros((N, 2, 2), dtype=complex)
    for j in range(J):
        p, q, r = partition.ps[j], partition.qs[j], partition.ps[j + 1]
        V = frame_to_e2(partition.vs[j])
        if j == 0:
            _, dirs = push_logs(L, partition.vs[0], p, r)
            frames = [V] + [frame_to_e2(d) for d in dirs[1:]]
        else:
            Wq = V @ partition.Us[j]
            eng = covector_frames(L, Wq[0], p, q)
            _, dirs = push_logs(L, _image_at_q(L, partition.vs[j], partition.Us[j], p, q, j), q, r)
            frames = [V] + eng[1:-1] + [Wq] + [frame_to_e2(d) for d in dirs[1:]]
        for F in frames:
            _check_unitary(F, f"frame on train {j}")
        for i in range(p, r):
            W[i] = frames[i - p]
            lin[i] = frames[i - p + 1] @ L[i] @ frames[i - p].conj().T
        W_end.append(frames[-1])
        if j >= 1:
            M.append(V @ W_end[j - 1].conj().T)
    W[N] = W_end[-1]
    germs = []
    for i in range(N):
        j = partition.train_of(i)
        nxt = W_end[j] if i + 1 == partition.ps[j + 1] else W[i + 1]
        f = seq.germ(i)
        g = compose(f, PolyMap2.linear(W[i].conj().T, f.K), f.K).left_linear(nxt)
        germs.append(g)
    a, b, c, up = (np.array(v) for v in zip(*(_lower_data(m) for m in lin)))
    tri = TriangularizedSequence(ps=list(partition.ps), W=W, W_end=W_end, M=M, lin=lin, germs=germs, a=a, b=b, c=c, upper=np.abs(up))
    engines = [_engine_frame(L, partition, j) for j in range(1, J + 1) if partition.qs[j] <= N or j < J]
    return tri, [e for e in engines if e is not None]


def _engine_frame(L, partition: GeneralTrainPartition, j: int) -> EngineFrame | None:
    p, q = partition.ps[j], partition.qs[j]
    if q > len(L):
        return None
    # image of v_{j-1} at p_j
    u = incoming_direction(L, partition, j)
    S = frame_to_e2(u)
    _, dirs = push_logs(L, u, p, q)
    T = [S] + [frame_to_e2(d) for d in dirs[1:]]
    T[-1] = S @ partition.Us[j]
    for F in T:
        _check_unitary(F, f"engine frame on train {j}")
    mats = [T[i + 1] @ L[p + i] @ T[i].conj().T for i in range(q - p)]
    al, be, ga, up = (np.array(v) for v in zip(*(_lower_data(m) for m in mats)))
    return EngineFrame(j=j, p=p, q=q, S=S, T=T, alpha=al, beta=be, gamma=ga, upper=np.abs(up))


# constants and checks -------------------------------------------------------------


def K1_of(C: float, D: float, x: float) -> float:
    return D / (C * (1 - D ** (1 - 1 / x)))


def K2_of(C: float, D: float, k: float, x: float) -> float:
    K1 = K1_of(C, D, x)
    return (2 * K1 * K1) ** (x + 1) * D ** (-(k - x) * (x + 1) / x)


def _pair_extremes(G: np.ndarray) -> tuple[float, float]:
    """``max`` and ``min`` of ``G[n] - G[m]`` over m <= n."""
    if G.size == 0:
        return 0.0, 0.0
    return float(np.max(G - np.minimum.accumulate(G))), float(np.min(G - np.maximum.accumulate(G)))


def verify_general_train_inequalities(partition: GeneralTrainPartition, tri: TriangularizedSequence, engines: list, constants=None, seq=None) -> InequalityReport:
    """Log-domain checks of engine and wagon ratios, frame ratios, the gamma and vector bounds and the K_2 growth bound.

    ``constants`` may be a ConstantsLedger or None (then C, D come from the partition).
    """
    k, x, D = partition.k, partition.x, partition.D
    C = getattr(constants, "C", None) or partition.C
    if C is None:
        raise ContractError("the checks need the lower bound C")
    lnD = math.log(D)
    K1 = K1_of(C, D, x)
    K2 = K2_of(C, D, k, x)
    lK1, lK2 = math.log(K1), math.log(K2)
    rep = InequalityReport()
    s = {name: [] for name in (
        "engine_gain", "wagon_ratio_floor", "wagon_handover", "engine_length",
        "frame_ratio_to_end", "frame_ratio_nonpositive", "frame_ratio_range_lower", "frame_ratio_range_upper", "gamma_bound",
        "vector_upper", "vector_lower", "engine_ratio_growth", "engine_ratio_range", "engine_ratio_to_end",
        "step_moduli_lower", "step_moduli_upper", "step_offdiag", "b_identity", "det_identity",
        "endpoint_swap", "upper_entry_zero",
    )}
    ld = partition.log_det
    Lmat = None
    if seq is not None:
        Lmat = seq.linear_arrays(partition.covered)
    by_j = {e.j: e for e in engines}
    for t in partition.trains:
        j, p, q, r = t.j, t.p, t.q, t.p_next
        la, lb = tri.log_prefix(j)  # index n - p
        lnum = ld[p:r]
        # per-step moduli and frame consistency
        s["step_moduli_lower"].append(np.minimum(np.log(np.abs(tri.a[p:r])), np.log(np.abs(tri.b[p:r]))) - math.log(C))
        s["step_moduli_upper"].append(lnD - np.maximum(np.log(np.abs(tri.a[p:r])), np.log(np.abs(tri.b[p:r]))))
        s["step_offdiag"].append(lnD - np.log(np.abs(tri.c[p:r]) + 1e-300))
        s["upper_entry_zero"].append(UPPER_TOL - tri.upper[p:r])
        s["det_identity"].append(1e-9 - np.abs(np.log(np.abs(tri.a[p:r] * tri.b[p:r])) - lnum))
        if Lmat is not None:
            # wagons: forward from the exact image at q_j; engine end: the eigenvalue of v_j
            ell, _ = push_logs(Lmat, _image_at_q(Lmat, partition.vs[j], partition.Us[j], p, q, j), q, r)
            s["b_identity"].append(1e-9 - np.abs(lb[q - p :] - lb[q - p] - ell))
            if j >= 1:
                # |lambda_v| = |det| / |lambda_u|; lambda_u belongs to the expanding image u_j
                u = incoming_direction(Lmat, partition, j)
                lu, _ = push_logs(Lmat, u, p, q)
                s["b_identity"].append([1e-9 - abs(lb[q - p] - (float(np.sum(ld[p:q])) - lu[-1]))])
        if j >= 1:
            s["engine_gain"].append([x * la[q - p] - lb[q - p] + (2**j) * lnD])
        s["engine_length"].append([(q - p) - (2**j) / (k - x)])
        # wagons q <= m <= n <= r in train-j coordinates
        Gw = la[q - p :] - x * lb[q - p :]
        _, mn = _pair_extremes(Gw)
        s["wagon_ratio_floor"].append([mn - (2 ** (j + 1)) * lnD])
        s["wagon_handover"].append([Gw[-1] - Gw[0]])
        # growth of |b|/|a|^x along the engine, j >= 1
        if j >= 1:
            n = np.arange(p, q + 1)
            Th = lb[: q - p + 1] - x * la[: q - p + 1]
            s["engine_ratio_growth"].append(lK2 + ((k - x) / x) * (n - p) * (-lnD) - Th)
            mx, _ = _pair_extremes(Th)
            s["engine_ratio_range"].append([lK2 + (2**j) * (x + 1) / x * (-lnD) - mx])
            s["engine_ratio_to_end"].append(lK2 - (Th[-1] - Th))
        e = by_j.get(j)
        if e is None or j < 1:
            continue
        lal, lbe = e.log_prefix()
        nlen = q - p
        # endpoint swap |beta_{q,p}| = |a_{q,p}|, |alpha_{q,p}| = |b_{q,p}|
        s["endpoint_swap"].append([1e-9 - abs(lbe[nlen] - la[nlen]), 1e-9 - abs(lal[nlen] - lb[nlen])])
        s["det_identity"].append(1e-9 - np.abs(np.log(np.abs(e.alpha * e.beta)) - ld[p:q]))
        s["upper_entry_zero"].append(UPPER_TOL - e.upper)
        G = lal - x * lbe
        s["frame_ratio_to_end"].append(-(G[-1] - G))
        s["frame_ratio_nonpositive"].append(-G)
        mx, mn = _pair_extremes(G)
        s["frame_ratio_range_upper"].append([-(2**j) * lnD - mx])
        s["frame_ratio_range_lower"].append([mn - (2**j + k - x) * lnD])
        s["gamma_bound"].append(_gamma_slacks(e, lK1, x))
        # vector lemma: |df_{n,p}(v_j)| = exp(lb[n - p])
        ellj = lb[: nlen + 1]
        rhs_i = math.log(2) + np.maximum(lal, lK1 + (1 - 1 / x) * lal + lbe)
        s["vector_upper"].append(rhs_i - ellj)
        s["vector_lower"].append(lK1 - lal + ellj)
    cat = lambda xs: np.concatenate([np.ravel(np.asarray(v, dtype=float)) for v in xs]) if xs else np.array([])
    for name, vals in s.items():
        if name == "b_identity" and Lmat is None:
            continue
        rep.add(name, cat(vals))
    return rep


def _gamma_slacks(e: EngineFrame, lK1: float, x: float) -> np.ndarray:
    """``log K1 + log|beta_{n,p}| - log|alpha_{m,p}|/x - log|gamma_{n,m}|`` over p <= m < n <= q."""
    lal, lbe = e.log_prefix()
    L = len(e.alpha)
    out = []
    # hat_m = gamma_{n,m} / beta_{n,m}; update hat_m += (gamma_n / beta_n) * alpha_{n,m} / beta_{n,m}
    hat = np.zeros(L + 1, dtype=complex)
    for n in range(L):
        m = np.arange(0, n + 1)
        ratio = np.exp((lal[n] - lal[m]) - (lbe[n] - lbe[m]))
        hat[: n + 1] = hat[: n + 1] + (e.gamma[n] / e.beta[n]) * ratio * _phase_ratio(e, m, n)
        with np.errstate(divide="ignore"):
            lg = np.log(np.abs(hat[: n + 1])) + (lbe[n + 1] - lbe[m])
        slack = lK1 + lbe[n + 1] - lal[m] / x - lg
        out.append(slack)
    return np.concatenate(out) if out else np.array([])


def _phase_ratio(e: EngineFrame, m: np.ndarray, n: int) -> np.ndarray:
    """Phase of ``alpha_{n,m} / beta_{n,m}``."""
    pa = np.concatenate([[0.0], np.cumsum(np.angle(e.alpha))])
    pb = np.concatenate([[0.0], np.cumsum(np.angle(e.beta))])
    return np.exp(1j * ((pa[n] - pa[m]) - (pb[n] - pb[m])))


def gamma_direct(e: EngineFrame, n: int, m: int) -> complex:
    """``gamma_{n,m}`` (offsets from p) by direct 2x2 products: oracle for the recursion."""
    P = np.eye(2, dtype=complex)
    for i in range(m, n):
        P = np.array([[e.alpha[i], 0], [e.gamma[i], e.beta[i]]]) @ P
    return complex(P[1, 0])

"""Basin maps ``Phi_n = g_{n,0}^{-1} o h_n o f_{n,0}`` and the checks around them.

Radii are kept as natural logs.  Orbits use the scaled representation from
:mod:`limit_chain`, so the tiny radii of late steps never underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegeneracyError, UndecidedError
from .jet_core import PolyMap2, compose, _degree_grid
from .limit_chain import LimitChain, PhiEvaluator, Scaled, _ldexp_c
from .quad_conjugation_general import ConstantsLedger
from .sequence_gen import ball_samples
from .train_diagonal import InequalityReport
from .triangular import TriangularMap

ESCAPE_RADIUS = 10.0


# radii ------------------------------------------------------------------------------------


@dataclass
class RadiiSchedule:
    """``log r_n``, ``log s_n`` for n <= n_max, with the contraction rate ``rho`` of the proof."""

    lam: float
    M: float
    rho: float
    D: float
    log_r: np.ndarray = field(repr=False)
    log_s: np.ndarray = field(repr=False)
    defect_power: float = 2.0

    @property
    def n_max(self) -> int:
        return len(self.log_s) - 1

    def v_of(self, u: int) -> int | None:
        """Least ``v >= u`` with ``D^(v-u) < s_v``; None beyond ``n_max``."""
        lD = math.log(self.D)
        v = np.arange(u, self.n_max + 1)
        ok = np.nonzero((v - u) * lD < self.log_s[u:])[0]
        return int(v[ok[0]]) if ok.size else None

    def monotone_slacks(self) -> np.ndarray:
        """``log s_{n+1} - log(D s_n)``; all positive when ``D s_n < s_{n+1}``."""
        return self.log_s[1:] - self.log_s[:-1] - math.log(self.D)

    def to_dict(self) -> dict:
        return {
            "lam": self.lam,
            "M": self.M,
            "rho": self.rho,
            "log_r_0": float(self.log_r[0]),
            "log_s_0": float(self.log_s[0]),
            "log_s_last": float(self.log_s[-1]),
            "v_0": self.v_of(0),
        }


def radii_schedule(led: ConstantsLedger, n_max: int) -> RadiiSchedule:
    """General-case radii: the three-branch ``r_n`` and ``s_n = r_n / (M/(1-rho) + 2)``."""
    if not led.k < 11 / 5:
        raise ConfigError(f"k < 11/5 required for the radii (k={led.k})")
    kap = led.kappa
    if not 4 * kap / (3 - led.k) < 1:
        raise ConfigError(f"4(k-2+eps)/(3-k) < 1 fails ({4 * kap / (3 - led.k):.4f}); D s_n < s_(n+1) cannot hold")
    n = np.arange(n_max + 1)
    lD = math.log(led.D)
    lZ = math.log(led.Z)
    b1 = math.log((1 - led.lam) * led.C**2 / 2) - lZ + 2 * n * kap * lD
    b2 = -math.log(48) - lZ + 2 * n * kap * lD
    b3 = -math.log(2) + 4 * n * kap / (3 - led.k) * lD
    log_r = np.minimum(np.minimum(b1, b2), b3)
    log_s = log_r - math.log(led.M / (1 - led.rho) + 2)
    sch = RadiiSchedule(lam=led.lam, M=led.M, rho=led.rho, D=led.D, log_r=log_r, log_s=log_s, defect_power=led.k)
    if n_max >= 1 and np.min(sch.monotone_slacks()) <= 0:
        raise ConfigError("D s_n < s_(n+1) fails for the computed radii")
    return sch


def _abs_block_norm(p: PolyMap2, m: int) -> float:
    """Euclidean norm of the per-component absolute coefficient sums in degree m."""
    s = p.block_abs_sum(m)
    return float(np.hypot(s[0], s[1]))


def diagonal_schedule(chain: LimitChain, C: float, D: float, k: int, n_max: int | None = None) -> RadiiSchedule:
    """Constant radii for the diagonal pipeline.

    ``r`` keeps ``|Dh_n - I| <= 1/2`` for every n, ``M`` bounds the one-step
    defect by ``M |z|^(k+1)`` on ``B(0, r)`` and ``rho = D^(k+1)/(lambda C)``.
    """
    n_max = chain.N if n_max is None else n_max
    lam = (1 + D ** (k + 1) / C) / 2
    rho = D ** (k + 1) / (lam * C)
    nu = max(_abs_block_norm(h, k) for h in chain.h[: n_max + 1])
    r = 1.0 if nu == 0 else min(1.0, (1 / (2 * k * nu)) ** (1 / (k - 1)))
    M = 0.0
    for m in range(n_max):
        d = chain.defect(m)
        M = max(M, sum(_abs_block_norm(d, ell) * r ** (ell - k - 1) for ell in range(k + 1, d.max_degree() + 1)))
    s = r / (M / (1 - rho) + 2)
    log_r = np.full(n_max + 1, math.log(r))
    log_s = np.full(n_max + 1, math.log(s))
    return RadiiSchedule(lam=lam, M=M, rho=rho, D=D, log_r=log_r, log_s=log_s, defect_power=k + 1)


# Phi --------------------------------------------------------------------------------------


@dataclass
class PhiTrace:
    """Values of Phi at a batch of points and the per-step difference history."""

    z: np.ndarray
    w: np.ndarray
    u: np.ndarray
    v: np.ndarray
    stop: np.ndarray
    log2_diff: np.ndarray = field(repr=False)  # (steps, points), log2 |Phi_{n+1} - Phi_n|
    start: int = 0
    certificate: np.ndarray = field(default=None, repr=False)

    def ratios(self) -> np.ndarray:
        """Per-step ratios ``|Phi_{n+1}-Phi_n| / |Phi_n - Phi_{n-1}|``."""
        return 2.0 ** np.diff(self.log2_diff, axis=0)

    def window_rate(self) -> np.ndarray:
        """Geometric mean contraction per step over the recorded window, per point."""
        L = self.log2_diff
        steps = L.shape[0] - 1
        return 2.0 ** ((L[-1] - L[0]) / max(steps, 1))

    def to_rows(self) -> list:
        rows = []
        for i in range(self.log2_diff.shape[0]):
            rows.append([self.start + i, *map(float, self.log2_diff[i])])
        return rows


def entry_index(chain: LimitChain, z, w, n_max: int) -> tuple[np.ndarray, list]:
    """First u with the bar-coordinate orbit inside the closed unit ball, per point (-1 if none)."""
    orbit = chain.forward_orbit(z, w, n_max)
    u = np.full(np.shape(z), -1, dtype=int)
    for m, x in enumerate(orbit):
        inside = (x.log2_norm() <= 0) & (u < 0)
        u[inside] = m
    return u, orbit


def phi_at(chain: LimitChain, schedule: RadiiSchedule, z, w, tol: float = 1e-10, window: int = 0, n_max: int | None = None) -> PhiTrace:
    """Phi at a batch of points.

    Starts at the common ``v = max v(u)``, then advances n until every point's
    difference satisfies ``|Phi_{n+1} - Phi_n| / (1 - rho) < tol`` and at least
    ``window`` differences are recorded.  The certificate column holds the
    proof's tail bound ``(M/(1-rho)) rho^(n - v(u))`` relative to ``|z|``.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    n_max = chain.N if n_max is None else min(n_max, chain.N)
    u, orbit = entry_index(chain, z, w, n_max)
    if np.any(u < 0):
        raise UndecidedError(f"{int(np.sum(u < 0))} points never enter the unit ball within {n_max} steps")
    v = np.array([schedule.v_of(int(ui)) if schedule.v_of(int(ui)) is not None else -1 for ui in u])
    if np.any(v < 0) or np.any(v >= n_max):
        raise UndecidedError(f"v(u) beyond the covered horizon {n_max}")
    # the orbit must sit in the certified radii from v(u) on
    for i, (ui, vi) in enumerate(zip(u, v)):
        ln = np.array([orbit[m].log2_norm()[i] for m in range(vi, n_max + 1)]) * math.log(2)
        if np.any(ln > schedule.log_s[vi : n_max + 1] + 1e-9):
            raise UndecidedError(f"orbit of point {i} leaves B(0, s_n) after v(u) = {vi}")
    start = int(v.max())
    ev = PhiEvaluator(chain, z, w, n_max)
    ev.run(start)
    hist = []
    stop = np.full(z.shape, -1, dtype=int)
    rho = schedule.rho
    lt = math.log2(tol * (1 - rho))
    n = start
    while n < n_max:
        dz, dw, e = ev.advance()
        l2 = PhiEvaluator.log2_norm(dz, dw, e)
        hist.append(l2)
        n += 1
        hit = (l2 < lt) & (stop < 0)
        stop[hit] = n
        if np.all(stop >= 0) and len(hist) >= window:
            break
    if np.any(stop < 0):
        raise UndecidedError(f"Phi not converged to {tol} by n = {n_max}")
    vz, vw = ev.value()
    lz = np.log(np.hypot(np.abs(z), np.abs(w)) + 1e-300)
    with np.errstate(divide="ignore"):  # M = 0 (linear chain) certifies a zero tail
        cert = np.log(schedule.M / (1 - rho)) + (stop - v) * math.log(rho) + lz * schedule.defect_power
    return PhiTrace(z=vz, w=vw, u=u, v=v, stop=stop, log2_diff=np.array(hist), start=start, certificate=cert / math.log(10))


def phi_fixed(chain: LimitChain, z, w, n: int):
    """Phi_n at a batch of points (no stopping rule)."""
    ev = PhiEvaluator(chain, np.atleast_1d(z), np.atleast_1d(w), n)
    return ev.run(n)


# membership ---------------------------------------------------------------------------------


@dataclass
class OrbitRecord:
    start: tuple
    norms: np.ndarray = field(repr=False)
    verdict: str = "undecided"
    stop: int = -1
    images: list = field(default=None, repr=False)
    reason: str = ""

    def to_dict(self) -> dict:
        return {"start": [[v.real, v.imag] for v in self.start], "verdict": self.verdict, "stop": self.stop,
                "final_norm": float(self.norms[-1]) if len(self.norms) else None, "reason": self.reason}


def local_contraction(F: PolyMap2, r: float) -> float:
    """``|F(z)| <= q |z|`` on ``B(0, r)`` with ``q = |L| + sum_l nu_l r^(l-1)``."""
    q = float(np.linalg.norm(F.linear_array(), 2))
    for ell in range(2, F.max_degree() + 1):
        q += _abs_block_norm(F, ell) * r ** (ell - 1)
    return q


def _tail_rule(seq, threshold: float):
    """(radius, factor) under which the remaining tail is certified, or None."""
    b = seq.bounds
    if b is not None:
        return 1.0, b.D
    if seq.spec.family == "constant":
        q = local_contraction(seq[0], threshold)
        return (threshold, q) if q < 1 else None
    return None


def membership_batch(seq, z, w, threshold: float = 1e-6, horizon: int = 200, escape_radius: float = ESCAPE_RADIUS):
    """Vectorized verdicts: 1 converged, -1 escaped, 0 undecided; and the stopping steps."""
    z = np.asarray(z, dtype=complex).copy()
    w = np.asarray(w, dtype=complex).copy()
    verdict = np.zeros(z.shape, dtype=int)
    stop = np.full(z.shape, -1, dtype=int)
    rule = _tail_rule(seq, threshold)
    live = np.ones(z.shape, dtype=bool)
    for n in range(horizon + 1):
        nrm = np.hypot(np.abs(z), np.abs(w))
        conv = live & (nrm < threshold) & (rule is not None) & (nrm <= (rule[0] if rule else 0))
        esc = live & ~(nrm <= escape_radius)
        verdict[conv], stop[conv] = 1, n
        verdict[esc], stop[esc] = -1, n
        live &= ~(conv | esc)
        if not live.any() or n == horizon:
            break
        zl, wl = seq[n].evaluate_arrays(z[live], w[live])
        z[live], w[live] = zl, wl
    return verdict, stop


def basin_membership(seq, z, threshold: float = 1e-6, horizon: int = 200, escape_radius: float = ESCAPE_RADIUS,
                     keep_images: bool = False) -> OrbitRecord:
    """Forward orbit of one point with a converged / escaped / undecided verdict."""
    z0 = complex(z[0]), complex(z[1])
    x = np.array(z0, dtype=complex)
    rule = _tail_rule(seq, threshold)
    norms, images = [], []
    for n in range(horizon + 1):
        nrm = float(np.hypot(abs(x[0]), abs(x[1])))
        norms.append(nrm)
        if keep_images:
            images.append(tuple(x))
        if nrm < threshold:
            if rule is not None and nrm <= rule[0]:
                return OrbitRecord(z0, np.array(norms), "converged", n, images or None, f"tail contracts by {rule[1]:.4g}")
        if not nrm <= escape_radius:
            return OrbitRecord(z0, np.array(norms), "escaped", n, images or None, f"norm above {escape_radius}")
        if n == horizon:
            break
        fz, fw = seq[n].evaluate_arrays(x[:1], x[1:])
        x = np.array([fz[0], fw[0]])
    why = "no certified tail contraction" if rule is None else "horizon reached"
    return OrbitRecord(z0, np.array(norms), "undecided", horizon, images or None, why)


# g-basin ---------------------------------------------------------------------------------


@dataclass
class GBasinReport:
    sufficient_coverage: bool
    j1: int
    covered: int
    reached: int
    samples: int
    j_z: list = field(default_factory=list)
    boundary_log10: list = field(default_factory=list, repr=False)
    report: InequalityReport = field(default_factory=InequalityReport)

    @property
    def passed(self) -> bool:
        return self.sufficient_coverage and self.reached == self.samples and self.report.passed

    def to_dict(self) -> dict:
        return {"passed": self.passed, "sufficient_coverage": self.sufficient_coverage, "j1": self.j1,
                "covered": self.covered, "reached": self.reached, "samples": self.samples, "j_z": self.j_z,
                **{"checks": self.report.to_dict()["checks"]}}


def verify_g_basin_full(g_maps: list, ps: list, led: ConstantsLedger, samples: int = 100, radius: float = 10.0,
                        threshold: float = 1e-6, seed: int = 7) -> GBasinReport:
    """Iterate the bar maps ``g`` train by train on random points of ``B(0, radius)``.

    Records ``R_j``, the norm at each train start, checks the train-to-train
    envelope ``R_{j+1} <= D^(2^j/(k-x)) R_j + Z/(C(1-D)) D^(2^(j-1)/(k-x)) R_j^2``
    and reports per point the first train ``j_z`` from which ``R`` only decreases.
    """
    J = len(ps) - 1
    pts = radius * ball_samples(samples, seed=seed)
    x = Scaled.from_points(pts[:, 0], pts[:, 1])
    R = [x.log2_norm() * math.log(2)]
    for j in range(J):
        for n in range(ps[j], ps[j + 1]):
            gz, gw = g_maps[n].evaluate_arrays(x.zh, x.wh, scale_e=x.e)
            x = Scaled(gz, gw, x.e.copy()).normalized()
        R.append(x.log2_norm() * math.log(2))
    R = np.array(R)  # (J + 1, samples), natural logs
    lD = math.log(led.D)
    A = led.Z / (led.C * (1 - led.D))
    slacks = []
    for j in range(J):
        rj = R[j]
        bound = np.logaddexp((2**j) / (led.k - led.x) * lD + rj, math.log(A) + (2 ** (j - 1)) / (led.k - led.x) * lD + 2 * rj)
        slacks.append(bound - R[j + 1])
    rep = InequalityReport()
    rep.add("train_envelope", np.concatenate(slacks) if slacks else np.array([]))
    jz = []
    for i in range(samples):
        col = R[:, i]
        dec = [j for j in range(J + 1) if np.all(np.diff(col[j:]) < 0)]
        jz.append(int(dec[0]) if dec else None)
    reached = int(np.sum(R[-1] < math.log(threshold)))
    return GBasinReport(sufficient_coverage=led.j1 is not None and led.j1 <= J - 1, j1=led.j1, covered=J, reached=reached,
                        samples=samples, j_z=jz, boundary_log10=(R / math.log(10)).max(axis=1).tolist(), report=rep)


# injectivity and coverage ---------------------------------------------------------------------


def _scaled_ball(samples: int, log_radius: float, seed: int, sphere: bool = False):
    """Points of norm <= exp(log_radius) as mantissas times a power of two at most that radius."""
    e = math.floor(log_radius / math.log(2))
    pts = ball_samples(samples, seed=seed)
    if sphere:
        pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    return pts[:, 0].copy(), pts[:, 1].copy(), e


def _poly_scaled_jacobian(p: PolyMap2, zh, wh, e: int) -> np.ndarray:
    """Jacobian of p at ``2^e (zh, wh)`` (it is scale free up to the degree weights)."""
    K = p.K
    deg = _degree_grid(K)
    J = np.zeros((len(zh), 2, 2), dtype=complex)
    for m in range(1, p.max_degree() + 1):
        blk = PolyMap2(K, np.where(deg == m, p.coeffs, 0))
        J += blk.jacobian_arrays(zh, wh) * np.ldexp(1.0, (m - 1) * e)
    return J


def verify_injectivity_coverage(chain: LimitChain, schedule: RadiiSchedule, ns, samples: int = 1000, sphere_ms=(),
                                 coverage_steps: int = 60, seed: int = 11) -> InequalityReport:
    """Derivative, norm, injectivity and defect bounds for ``h_n`` on ``B(0, r_n)``,
    and the boundary-minimum coverage bound on spheres of radius ``s_m``."""
    rep = InequalityReport()
    dev, lower, upper, sep, defect = [], [], [], [], []
    kpow = schedule.defect_power
    for n in ns:
        zh, wh, e = _scaled_ball(samples, schedule.log_r[n], seed + n)
        h = chain.h[n]
        J = _poly_scaled_jacobian(h, zh, wh, e)
        dev.append(0.5 - np.linalg.norm(J - np.eye(2), ord=2, axis=(1, 2)))
        hz, hw = h.evaluate_scaled(zh, wh, np.full(zh.shape, e))
        nz = np.hypot(np.abs(zh), np.abs(wh))
        nh = np.hypot(np.abs(hz), np.abs(hw))
        lower.append(nh - 0.5 * nz)
        upper.append(2 * nz - nh)
        # pairs: consecutive samples
        d1, d2 = hz[1:] - hz[:-1], hw[1:] - hw[:-1]
        sep.append(np.hypot(np.abs(d1), np.abs(d2)) - 0.5 * np.hypot(np.abs(zh[1:] - zh[:-1]), np.abs(wh[1:] - wh[:-1])))
        if n < chain.N:
            dz, dw = chain.defect(n).evaluate_scaled(zh, wh, np.full(zh.shape, e))
            with np.errstate(divide="ignore"):
                lhs = np.log(np.hypot(np.abs(dz), np.abs(dw))) + e * math.log(2)
            rhs = math.log(schedule.M) + kpow * (np.log(nz) + e * math.log(2))
            defect.append(rhs - lhs)
    cat = lambda xs: np.concatenate(xs) if xs else np.array([])
    rep.add("h_derivative_within_half", cat(dev))
    rep.add("h_norm_lower_half", cat(lower))
    rep.add("h_norm_upper_two", cat(upper))
    rep.add("h_pair_separation", cat(sep))
    with np.errstate(invalid="ignore"):
        rep.add("one_step_defect_le_M", cat(defect)[np.isfinite(cat(defect))] if defect else np.array([]))
    cov = []
    for m in sphere_ms:
        n = min(chain.N, m + coverage_steps)
        sub = shifted_chain(chain, m)
        zh, wh, e = _scaled_ball(64, schedule.log_s[m], seed + 1000 + m, sphere=True)
        ev = PhiEvaluator(sub, zh, wh, n - m, e=np.full(zh.shape, e, dtype=np.int64))
        ev.run(n - m)
        # |phi| / (2^e / 4) >= 1 on the sphere of radius 2^e <= s_m
        cov.append(ev.log2_value_norm() - (e - 2))
    rep.add("coverage_boundary_min_quarter", cat(cov), "boundary minimum above s/4 with Phi(0) = 0 puts B(0, s/4) in the image")
    return rep


def shifted_chain(chain: LimitChain, m: int) -> LimitChain:
    """The chain from time m on, with identity entry; cached defects are shared."""
    sub = LimitChain(chain.f[m:], chain.h[m:], chain.g[m:], np.eye(2, dtype=complex), chain.low_degree)
    for key, d in chain._defects.items():
        if key >= m:
            sub._defects[key - m] = d
    return sub


# surjectivity ---------------------------------------------------------------------------------


@dataclass
class Witness:
    w: np.ndarray
    z: np.ndarray
    t: np.ndarray
    n: int
    residual: np.ndarray
    iterations: int
    converged: np.ndarray

    def to_dict(self) -> dict:
        return {"n": self.n, "iterations": self.iterations, "t": self.t.tolist(), "max_residual": float(np.max(self.residual)),
                "converged": self.converged.tolist()}


def _invert_germ(f: PolyMap2, yz, yw, e, iters: int = 60):
    """Solve ``f(x) = y`` near ``L^{-1} y`` in scaled form (mantissas at exponent e)."""
    L = f.linear_array()
    Li = np.linalg.inv(L)
    xz = Li[0, 0] * yz + Li[0, 1] * yw
    xw = Li[1, 0] * yz + Li[1, 1] * yw
    for _ in range(iters):
        fz, fw = f.evaluate_scaled(xz, xw, e)
        rz, rw = fz - yz, fw - yw
        J = _poly_scaled_jacobian(f, xz, xw, 0) if np.all(e == 0) else None
        if J is None:
            J = np.stack([_poly_scaled_jacobian(f, xz[i : i + 1], xw[i : i + 1], int(e[i]))[0] for i in range(len(xz))])
        dz, dw = np.linalg.solve(J, np.stack([rz, rw], axis=1)[..., None])[..., 0].T
        xz, xw = xz - dz, xw - dw
        if np.max(np.hypot(np.abs(dz), np.abs(dw))) < 1e-16 * max(1.0, float(np.max(np.hypot(np.abs(xz), np.abs(xw))))):
            break
    return xz, xw


def surjectivity_witness(chain: LimitChain, schedule: RadiiSchedule, wz, ww, n: int | None = None, newton_iters: int = 30,
                         tol: float = 1e-13) -> Witness:
    """Preimages under Phi_n of a batch of targets.

    ``t`` is the first time the bar orbit of the target under ``g`` enters
    ``B(0, 1/4)``; the initial guess pulls that point back by ``h_t^{-1}``
    (first order) and exact inverses of ``f_{t-1}, ..., f_0``.  Newton on
    ``Phi_n(z) = w`` with a finite-difference complex Jacobian finishes.
    """
    wz = np.atleast_1d(np.asarray(wz, dtype=complex))
    ww = np.atleast_1d(np.asarray(ww, dtype=complex))
    E = chain.entry
    yz, yw = E[0, 0] * wz + E[0, 1] * ww, E[1, 0] * wz + E[1, 1] * ww
    t = np.full(wz.shape, -1, dtype=int)
    ys = []
    cz, cw = yz.copy(), yw.copy()
    for m in range(chain.N + 1):
        ys.append((cz.copy(), cw.copy()))
        inside = (np.hypot(np.abs(cz), np.abs(cw)) <= 0.25) & (t < 0)
        t[inside] = m
        if np.all(t >= 0) or m == chain.N:
            break
        cz, cw = chain.g[m].evaluate_arrays(cz, cw)
    if np.any(t < 0):
        raise UndecidedError("target never enters B(0, 1/4) under the g-orbit within the chain")
    if n is None:
        vt = [schedule.v_of(int(ti)) for ti in t]
        if any(v is None for v in vt):
            raise UndecidedError("v(t) beyond the schedule")
        n = min(chain.N, max(vt))
    xz = np.empty_like(wz)
    xw = np.empty_like(ww)
    for i, ti in enumerate(t):
        bz, bw = ys[ti][0][i : i + 1], ys[ti][1][i : i + 1]
        q = chain.h[ti]
        # first-order inverse of h_t, refined by fixed-point
        gz, gw = bz.copy(), bw.copy()
        for _ in range(50):
            hz, hw = q.evaluate_arrays(gz, gw)
            gz, gw = gz - (hz - bz), gw - (hw - bw)
        for m in range(ti - 1, -1, -1):
            gz, gw = _invert_germ(chain.f[m], gz, gw, np.zeros(1, dtype=np.int64))
        Ei = np.linalg.inv(E)
        xz[i] = Ei[0, 0] * gz[0] + Ei[0, 1] * gw[0]
        xw[i] = Ei[1, 0] * gz[0] + Ei[1, 1] * gw[0]
    it = 0
    res = np.full(wz.shape, np.inf)
    for it in range(1, newton_iters + 1):
        h = 1e-7 * np.maximum(1.0, np.hypot(np.abs(xz), np.abs(xw)))
        Z = np.concatenate([xz, xz + h, xz])
        W = np.concatenate([xw, xw, xw + h])
        pz, pw = phi_fixed(chain, Z, W, n)
        k = len(xz)
        f0z, f0w = pz[:k] - wz, pw[:k] - ww
        res = np.hypot(np.abs(f0z), np.abs(f0w))
        if np.all(res < tol * np.maximum(1.0, np.hypot(np.abs(wz), np.abs(ww)))):
            break
        J = np.empty((k, 2, 2), dtype=complex)
        J[:, 0, 0] = (pz[k : 2 * k] - pz[:k]) / h
        J[:, 1, 0] = (pw[k : 2 * k] - pw[:k]) / h
        J[:, 0, 1] = (pz[2 * k :] - pz[:k]) / h
        J[:, 1, 1] = (pw[2 * k :] - pw[:k]) / h
        step = np.linalg.solve(J, np.stack([f0z, f0w], axis=1)[..., None])[..., 0]
        xz, xw = xz - step[:, 0], xw - step[:, 1]
    pz, pw = phi_fixed(chain, xz, xw, n)
    res = np.hypot(np.abs(pz - wz), np.abs(pw - ww))
    return Witness(w=np.stack([wz, ww], axis=1), z=np.stack([xz, xw], axis=1), t=t, n=n, residual=res, iterations=it,
                   converged=res < 1e-6)


# autonomous baseline -------------------------------------------------------------------------------


@dataclass
class AutonomousBasinMap:
    """``Phi_n = G^{-n} o X o F^n`` in the eigenbasis ``P`` of DF(0)."""

    F: PolyMap2
    X: PolyMap2
    G: TriangularMap
    P: np.ndarray
    k: int
    chain: LimitChain = field(repr=False)

    def G_polymap(self) -> PolyMap2:
        return self.G.to_polymap(max(self.G.degree, 1))

    def phi(self, z, w, n: int) -> tuple[np.ndarray, np.ndarray]:
        return phi_fixed(self._chain_for(n), z, w, n)

    def _chain_for(self, n: int) -> LimitChain:
        if self.chain.N < n:
            Fe = self.chain.f[0]
            self.chain = LimitChain([Fe] * n, [self.X] * (n + 1), [self.G] * n, self.chain.entry, self.k)
        return self.chain

    def phi_converged(self, z, w, tol: float = 1e-14, n_max: int = 200):
        """Phi by successive differences until ``|Phi_{n+1}-Phi_n| < tol`` for all points."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        w = np.atleast_1d(np.asarray(w, dtype=complex))
        ch = self._chain_for(n_max)
        ev = PhiEvaluator(ch, z, w, n_max)
        ev.run(0)
        for n in range(n_max):
            dz, dw, e = ev.advance()
            if np.all(PhiEvaluator.log2_norm(dz, dw, e) < math.log2(tol)):
                return ev.value(), n + 1
        raise UndecidedError(f"autonomous Phi not converged to {tol} within {n_max} steps")

    def apply_G(self, z, w):
        """G in the original coordinates."""
        P, Pi = self.P, np.linalg.inv(self.P)
        a, b = Pi[0, 0] * z + Pi[0, 1] * w, Pi[1, 0] * z + Pi[1, 1] * w
        a, b = self.G.evaluate_arrays(a, b)
        return P[0, 0] * a + P[0, 1] * b, P[1, 0] * a + P[1, 1] * b

    def degrees_of_iterates(self, n: int) -> list:
        """Degrees of ``G^1, ..., G^n`` composed as polynomials."""
        d = max(self.G.degree, 1)
        K = d * d + 1
        Gp = self.G.to_polymap(K)
        acc = Gp
        out = [acc.max_degree()]
        for _ in range(n - 1):
            acc = compose(Gp, acc, K)
            out.append(acc.max_degree())
        return out


def autonomous_basin_map(F: PolyMap2, k: int, min_divisor: float = 1e-8) -> AutonomousBasinMap:
    """Normalize F to a lower triangular G up to degree k by coefficient matching."""
    L = F.linear_array()
    lam, vec = np.linalg.eig(L)
    order = np.argsort(-np.abs(lam))
    lam, vec = lam[order], vec[:, order]
    if abs(lam[0] - lam[1]) < min_divisor or abs(np.linalg.det(vec)) < min_divisor:
        raise DegeneracyError("linear part is not diagonalizable with distinct eigenvalues")
    if not np.all(np.abs(lam) < 1):
        raise ConfigError("the origin is not attracting")
    P = vec / np.linalg.norm(vec, axis=0)
    K = max(F.K, k)
    Pl = PolyMap2.linear(P, K)
    Fe = compose(PolyMap2.linear(np.linalg.inv(P), K), compose(F.with_cutoff(K), Pl, K), K)
    X = PolyMap2.identity(k)
    gpoly = [0j] * max(k - 1, 0)
    G = TriangularMap(lam[0], lam[1], 0j, tuple(gpoly), lower=True)
    for m in range(2, k + 1):
        Gp = G.to_polymap(m)
        E = compose(X.with_cutoff(m), Fe.with_cutoff(m), m) - compose(Gp, X.with_cutoff(m), m)
        c = X.coeffs.copy()
        for comp in range(2):
            for i in range(m + 1):
                j = m - i
                mu = lam[0] ** i * lam[1] ** j
                e = E.coef(comp + 1, i, j)
                div = mu - lam[comp]
                if abs(div) >= min_divisor:
                    c[comp, i, j] = -e / div
                elif comp == 1 and j == 0:
                    gpoly[m - 2] = e
                elif abs(e) > 0:
                    raise DegeneracyError(f"resonant monomial z^{i} w^{j} in component {comp + 1} cannot be triangularized")
        X = PolyMap2(k, c)
        G = TriangularMap(lam[0], lam[1], 0j, tuple(gpoly), lower=True)
    entry = np.linalg.inv(P)
    chain = LimitChain([Fe], [X, X], [G], entry.astype(complex), k)
    return AutonomousBasinMap(F=F, X=X, G=G, P=P, k=k, chain=chain)


# slices -------------------------------------------------------------------------------------------

PIXEL = {1: (40, 90, 220), -1: (0, 0, 0), 0: (250, 200, 40)}


@dataclass(frozen=True)
class SliceSpec:
    """Vary one coordinate over ``[-extent, extent]^2`` in the complex plane, fix the other."""

    vary: str = "z"
    fixed: complex = 0j
    extent: float = 2.0
    res: int = 64

    @classmethod
    def parse(cls, text: str) -> "SliceSpec":
        """Parse ``"vary=z,fixed=0.1+0j,extent=2,res=64"`` (any subset of keys)."""
        kw = {}
        for part in filter(None, (p.strip() for p in text.split(","))):
            if "=" not in part:
                raise ConfigError(f"bad slice field {part!r}")
            key, val = (s.strip() for s in part.split("=", 1))
            if key == "vary":
                if val not in ("z", "w"):
                    raise ConfigError("slice vary must be z or w")
                kw[key] = val
            elif key == "fixed":
                kw[key] = complex(val.replace(" ", ""))
            elif key == "extent":
                kw[key] = float(val)
            elif key == "res":
                kw[key] = int(val)
            else:
                raise ConfigError(f"unknown slice field {key!r}")
        return cls(**kw)


def basin_slice(seq, spec: SliceSpec, threshold: float = 1e-6, horizon: int = 200) -> np.ndarray:
    """Verdict grid (rows from top = +imag) over the slice."""
    xs = np.linspace(-spec.extent, spec.extent, spec.res)
    re, im = np.meshgrid(xs, xs[::-1])
    c = (re + 1j * im).ravel()
    other = np.full(c.shape, spec.fixed)
    z, w = (c, other) if spec.vary == "z" else (other, c)
    verdict, _ = membership_batch(seq, z, w, threshold, horizon)
    return verdict.reshape(spec.res, spec.res)


def ppm_bytes(verdicts: np.ndarray) -> bytes:
    """Binary PPM (P6): converged (40,90,220), escaped (0,0,0), undecided (250,200,40)."""
    h, w = verdicts.shape
    img = np.zeros((h, w, 3), dtype=np.uint8)
    for v, rgb in PIXEL.items():
        img[verdicts == v] = rgb
    return f"P6\n{w} {h}\n255\n".encode() + img.tobytes()

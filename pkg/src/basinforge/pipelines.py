"""End-to-end pipelines: diagonal, general and autonomous.

Each pipeline returns a :class:`RunResult` whose summary is plain JSON data
(every checker with its attained minimum slack) plus named text artifacts.
Checks fall in two classes: proof-derived checks, whose failure is a defect
(status ``fail``), and hypothesis or coverage checks, whose failure only
downgrades the run to ``warning``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import basin_map as bm
from .direct_diagonal import direct_trains, verify_directing
from .errors import ConfigError, DomainError, UndecidedError
from .limit_chain import LimitChain, dphi_at_zero, linear_step_deviation
from .quad_conjugation_general import ConstantsLedger, select_global_chain, verify_quad_chain, verify_wagon_max_bounds
from .sequence_gen import MapSequence, SequenceSpec, ball_samples, verify_uniform_attraction
from .train_diagonal import InequalityReport, build_trains_diagonal, verify_diagonal_train_inequalities
from .train_general import build_trains_general, triangularize_frames, verify_general_train_inequalities
from .triangularize_diagonal import build_conjugation_diagonal, verify_commutation

PIPELINES = ("diagonal", "general", "autonomous")
GENERAL_EXPONENT = 11 / 5


@dataclass
class LedgerOverrides:
    k: float | None = None
    x: float = 1.5
    eps: float | None = None
    delta: float = 0.05
    lam: float | None = None


@dataclass
class SampleCounts:
    phi: int = 50
    membership: int = 200
    fullness: int = 100
    witness: int = 10
    injectivity: int = 1000
    residual: int = 500


@dataclass
class RunConfig:
    """Everything a run depends on; (config, seed) fixes all outputs."""

    sequence: SequenceSpec
    pipeline: str = "diagonal"
    ledger: LedgerOverrides = field(default_factory=LedgerOverrides)
    horizon: int = 400
    trains: int = 3
    samples: SampleCounts = field(default_factory=SampleCounts)
    out: str | None = None
    slice: bm.SliceSpec | None = None
    verify_only: bool = False

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"unknown pipeline {self.pipeline!r}; expected one of {PIPELINES}")
        if self.horizon < 3:
            raise ConfigError("horizon must be at least 3")
        if self.trains < 1:
            raise ConfigError("trains must be at least 1")
        k = self.k
        b = self.sequence.bounds
        if self.pipeline == "diagonal" and b is not None and not b.D ** (k + 1) < b.C:
            raise ConfigError(f"diagonal pipeline needs D^(k+1) < C: {b.D}^{k + 1} = {b.D ** (k + 1):.4g} >= {b.C}")
        if self.pipeline == "general":
            if b is None:
                raise ConfigError("general pipeline needs attraction bounds")
            if not b.D**GENERAL_EXPONENT < b.C:
                raise ConfigError(f"general pipeline needs D^(11/5) < C: {b.D}^2.2 = {b.D**GENERAL_EXPONENT:.4g} >= {b.C}")
            if not k < GENERAL_EXPONENT:
                raise ConfigError(f"general pipeline needs k < 11/5, got {k}")
        if self.pipeline == "autonomous" and self.sequence.family != "constant":
            raise ConfigError("autonomous pipeline needs the constant family")

    @property
    def k(self) -> float:
        if self.ledger.k is not None:
            return self.ledger.k
        return 2.1 if self.pipeline == "general" else 2

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        seq = d.pop("sequence", None)
        if seq is None:
            raise ConfigError("config needs a [sequence] table")
        seed = d.pop("seed", None)
        if seed is not None:
            seq = {**seq, "seed": int(seed)}
        led = LedgerOverrides(**d.pop("ledger", {}))
        smp = SampleCounts(**d.pop("samples", {}))
        sl = d.pop("slice", None)
        sl = bm.SliceSpec.parse(sl) if isinstance(sl, str) else (bm.SliceSpec(**sl) if sl else None)
        known = {"pipeline", "horizon", "trains", "out", "verify_only"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(sequence=SequenceSpec.from_dict(seq), ledger=led, samples=smp, slice=sl, **d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class RunResult:
    status: str
    summary: dict
    artifacts: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 1 if self.status == "fail" else 0


def threads() -> int:
    """Worker cap from ``BASINFORGE_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("BASINFORGE_THREADS", "1")))
    except ValueError:
        return 1


class _Collector:
    """Accumulates checker verdicts and notes while a pipeline runs."""

    def __init__(self):
        self.checks = {}
        self.warnings = []
        self.failed = []
        self.info = {}

    def report(self, group: str, rep: InequalityReport, hard: bool = True):
        self.checks[group] = rep.to_dict()
        if not rep.passed:
            (self.failed if hard else self.warnings).append(group)

    def flag(self, name: str, ok: bool, detail, hard: bool = True):
        self.checks[name] = {"passed": bool(ok), "detail": detail}
        if not ok:
            (self.failed if hard else self.warnings).append(name)

    def warn(self, msg: str):
        self.warnings.append(msg)

    def status(self) -> str:
        return "fail" if self.failed else ("warning" if self.warnings else "ok")

    def summary(self, cfg: RunConfig) -> dict:
        return {
            "pipeline": cfg.pipeline,
            "sequence": cfg.sequence.to_dict(),
            "status": self.status(),
            "failed": self.failed,
            "warnings": self.warnings,
            "checks": self.checks,
            "info": self.info,
        }


def _attraction(col: _Collector, seq: MapSequence, n: int):
    rep = verify_uniform_attraction(seq, n, samples=200)
    col.info["attraction"] = {"passed": rep.passed, "failing_steps": rep.failing_steps[:20],
                              "lower_ratio_tail": rep.ratio_min[-5:]}
    if not rep.passed:
        col.warn("uniform attraction fails: the sequence is outside the hypotheses")
    return rep


def _phi_block(col, cfg, chain, sched, window: int):
    pts = ball_samples(cfg.samples.phi)
    try:
        tr = bm.phi_at(chain, sched, pts[:, 0], pts[:, 1], tol=1e-12, window=window)
    except UndecidedError as exc:
        col.warn(f"phi undecided: {exc}")
        return None, pts
    return tr, pts


def _membership(col, cfg, seq, radius: float = 1.5):
    pts = radius * ball_samples(cfg.samples.membership, seed=99)
    chunks = np.array_split(np.arange(len(pts)), threads())
    with ThreadPoolExecutor(max_workers=threads()) as ex:
        parts = list(ex.map(lambda idx: bm.membership_batch(seq, pts[idx, 0], pts[idx, 1], horizon=cfg.horizon), chunks))
    verdict = np.concatenate([p[0] for p in parts])
    counts = {name: int(np.sum(verdict == v)) for name, v in (("converged", 1), ("escaped", -1), ("undecided", 0))}
    col.info["membership"] = {"radius": radius, **counts}
    if counts["undecided"]:
        col.warn(f"{counts['undecided']} membership verdicts undecided")


def _slice(cfg, seq, artifacts):
    if cfg.slice is None:
        return
    grid = bm.basin_slice(seq, cfg.slice, horizon=cfg.horizon)
    artifacts["slice.ppm"] = bm.ppm_bytes(grid)


def _trace_csv(tr: bm.PhiTrace) -> str:
    head = "n," + ",".join(f"log2_diff_{i}" for i in range(tr.log2_diff.shape[1]))
    rows = [",".join(repr(v) if isinstance(v, float) else str(v) for v in r) for r in tr.to_rows()]
    return "\n".join([head, *rows]) + "\n"


# diagonal ------------------------------------------------------------------------------------


def run_diagonal(cfg: RunConfig) -> RunResult:
    col, art = _Collector(), {}
    seq = MapSequence(cfg.sequence)
    k = int(cfg.k)
    if cfg.k != k:
        raise ConfigError("the diagonal pipeline needs an integer k")
    _attraction(col, seq, min(cfg.horizon, 60))
    L0 = seq.linear_arrays(1)[0]
    mode = "diagonal" if abs(L0[0, 1]) + abs(L0[1, 0]) == 0 else "column"
    part = build_trains_diagonal(seq, k, cfg.horizon, multipliers=mode)
    col.info["trains"] = {"ps": part.ps, "qs": part.qs, "complete": part.complete, "multipliers": mode,
                          "truncated": part.truncated}
    if part.complete < cfg.trains:
        col.warn(f"train search truncated: {part.complete} complete trains, {cfg.trains} requested")
    if part.complete < 1 or seq.bounds is None:
        return RunResult(col.status(), col.summary(cfg), art)
    col.report("train_inequalities", verify_diagonal_train_inequalities(part, seq))
    directed = direct_trains(seq, part)
    col.report("directing", verify_directing(directed))
    art["directing.csv"] = directed.to_csv()
    conj = build_conjugation_diagonal(directed, part)
    col.report("commutation", verify_commutation(conj, directed.germs))
    E = np.diag([math.exp(directed.log_theta[0]), math.exp(directed.log_tau[0])]).astype(complex)
    chain = LimitChain(directed.germs, conj.h, conj.g, E, k)
    dphi = float(np.max(np.abs(dphi_at_zero(chain, chain.N) - np.eye(2))))
    step = linear_step_deviation(chain)
    col.flag("dphi_zero_identity", dphi <= 1e-12 and step <= 1e-12, {"max_deviation": dphi, "max_step_deviation": step})
    b = seq.bounds
    sched = bm.diagonal_schedule(chain, b.C, b.D, k)
    col.info["schedule"] = sched.to_dict()
    if cfg.verify_only:
        return RunResult(col.status(), col.summary(cfg), art)
    tr, _ = _phi_block(col, cfg, chain, sched, window=40)
    if tr is not None:
        bound = b.D ** (k + 1) / b.C + 0.05
        rate = tr.window_rate()
        ratios = tr.ratios()
        col.flag("cauchy_rate", float(rate.max()) <= bound,
                 {"max_window_rate": float(rate.max()), "bound": bound, "window": int(tr.log2_diff.shape[0]),
                  "per_step_max": float(ratios.max()), "per_step_median": float(np.median(ratios)),
                  "v_max": int(tr.v.max())})
        art["phi_trace.csv"] = _trace_csv(tr)
    _membership(col, cfg, seq)
    _slice(cfg, seq, art)
    return RunResult(col.status(), col.summary(cfg), art)


# general ------------------------------------------------------------------------------------------


@dataclass
class GeneralArtifacts:
    """Intermediate objects of a general run, exposed for tests and scripts."""

    seq: MapSequence
    partition: object
    tri: object
    engines: list
    ledger: ConstantsLedger
    quad: object
    chain: LimitChain
    schedule: bm.RadiiSchedule


def build_general(cfg: RunConfig, col: _Collector | None = None) -> GeneralArtifacts:
    col = col or _Collector()
    seq = MapSequence(cfg.sequence)
    b = seq.bounds
    o = cfg.ledger
    led = ConstantsLedger.build(b.C, b.D, cfg.k, o.x, eps=o.eps, delta=o.delta, lam=o.lam)
    part = build_trains_general(seq, cfg.k, o.x, horizon=cfg.horizon, max_trains=cfg.trains)
    col.info["trains"] = {"ps": part.ps, "qs": part.qs, "complete": part.complete, "truncated": part.truncated}
    if part.complete < cfg.trains:
        col.warn(f"train search truncated: {part.complete} complete trains, {cfg.trains} requested")
    if part.complete < 1:
        raise DomainError("no complete train within the horizon")
    tri, eng = triangularize_frames(seq, part)
    quad = select_global_chain(tri, part)
    germs = tri.bar_germs()[: quad.N]
    chain = LimitChain(germs, quad.h_maps(), quad.g_maps(), tri.entry(), 2)
    sched = bm.radii_schedule(led, quad.N)
    return GeneralArtifacts(seq, part, tri, eng, led, quad, chain, sched)


def run_general(cfg: RunConfig) -> RunResult:
    col, art = _Collector(), {}
    seq = MapSequence(cfg.sequence)
    _attraction(col, seq, min(cfg.horizon, 60))
    try:
        g = build_general(cfg, col)
    except DomainError as exc:
        col.warn(str(exc))
        return RunResult(col.status(), col.summary(cfg), art)
    led = g.ledger
    col.info["ledger"] = led.to_dict()
    col.report("train_inequalities", verify_general_train_inequalities(g.partition, g.tri, g.engines, seq=seq))
    qrep = verify_quad_chain(g.quad, g.partition, led, germs=g.chain.f)
    col.report("quadratic_chain", qrep.report)
    col.info["quadratic_chain"] = {"j0": qrep.j0, "Z_needed": qrep.Z_needed, "boundary": qrep.boundary,
                                   "applicable": qrep.applicable}
    col.report("wagon_max_bounds", verify_wagon_max_bounds(g.partition, g.tri, led))
    art["quad_coefficients.csv"] = g.quad.to_csv(led)
    step = linear_step_deviation(g.chain)
    first = g.quad.ps[min(2, len(g.quad.ps) - 1)]
    dphi = float(np.max(np.abs(dphi_at_zero(g.chain, first) - np.eye(2))))
    col.flag("dphi_zero_identity", step <= 1e-12 and dphi <= 1e-12,
             {"max_step_deviation": step, "composed_deviation": dphi, "composed_up_to": first})
    col.info["schedule"] = g.schedule.to_dict()
    full = bm.verify_g_basin_full(g.chain.g, g.quad.ps, led, samples=cfg.samples.fullness)
    col.checks["g_basin_fullness"] = full.to_dict()
    if not full.sufficient_coverage:
        col.warn(f"g-basin fullness: insufficient coverage (j1 = {full.j1}, covered trains = {full.covered})")
    elif not full.passed:
        col.failed.append("g_basin_fullness")
    if cfg.verify_only:
        return RunResult(col.status(), col.summary(cfg), art)
    N = g.chain.N
    ns = sorted({0, 1, *[p for p in g.quad.ps if p < N], N // 2, N - 1})
    for m in range(N):
        g.chain.defect(m)
    inj = bm.verify_injectivity_coverage(g.chain, g.schedule, ns, samples=cfg.samples.injectivity,
                                         sphere_ms=[p for p in g.quad.ps if p < N])
    col.report("injectivity_coverage", inj)
    tr, pts = _phi_block(col, cfg, g.chain, g.schedule, window=0)
    if tr is not None:
        art["phi_trace.csv"] = _trace_csv(tr)
        col.info["phi"] = {"v_max": int(tr.v.max()), "stop_max": int(tr.stop.max()),
                           "log10_certificate_max": float(tr.certificate.max())}
        try:
            wt = bm.surjectivity_witness(g.chain, g.schedule, tr.z, tr.w, n=int(tr.stop.max()))
            err = float(np.max(np.abs(wt.z - pts)))
            col.flag("round_trip", err <= 1e-7, {"max_error": err, **wt.to_dict()})
        except UndecidedError as exc:
            col.warn(f"round trip undecided: {exc}")
        if full.passed:
            tg = 5 * ball_samples(cfg.samples.witness, seed=5)
            try:
                wt = bm.surjectivity_witness(g.chain, g.schedule, tg[:, 0], tg[:, 1])
                col.flag("witness_far", bool(np.all(wt.residual < 1e-6)), wt.to_dict())
            except UndecidedError as exc:
                col.warn(f"surjectivity witness undecided: {exc}")
    _membership(col, cfg, seq)
    _slice(cfg, seq, art)
    return RunResult(col.status(), col.summary(cfg), art)


# autonomous -----------------------------------------------------------------------------------------


def conjugacy_residual(amap: bm.AutonomousBasinMap, pts: np.ndarray) -> float:
    """``max |Phi(F(z)) - G(Phi(z))|`` over the points (original coordinates)."""
    z, w = pts[:, 0], pts[:, 1]
    (pz, pw), _ = amap.phi_converged(z, w)
    fz, fw = amap.F.evaluate_arrays(z, w)
    (qz, qw), _ = amap.phi_converged(fz, fw)
    gz, gw = amap.apply_G(pz, pw)
    return float(np.max(np.hypot(np.abs(qz - gz), np.abs(qw - gw))))


def run_autonomous(cfg: RunConfig) -> RunResult:
    col, art = _Collector(), {}
    seq = MapSequence(cfg.sequence)
    k = int(cfg.k)
    amap = bm.autonomous_basin_map(seq[0], k)
    col.info["normal_form"] = {"G": amap.G.to_polymap(max(amap.G.degree, 1)).to_json_obj(), "X": amap.X.to_json_obj()}
    pts = 0.05 * ball_samples(cfg.samples.residual, seed=42)
    res = conjugacy_residual(amap, pts)
    col.flag("conjugacy_residual", res < 1e-8, {"max_residual": res, "radius": 0.05, "samples": len(pts)})
    degs = amap.degrees_of_iterates(20)
    col.flag("iterate_degrees_bounded", len(set(degs)) == 1, {"degrees": degs})
    if not cfg.verify_only:
        _membership(col, cfg, seq, radius=1.0)
        _slice(cfg, seq, art)
    return RunResult(col.status(), col.summary(cfg), art)


def run(cfg: RunConfig) -> RunResult:
    return {"diagonal": run_diagonal, "general": run_general, "autonomous": run_autonomous}[cfg.pipeline](cfg)

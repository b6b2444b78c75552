"""Acceptance gate: every criterion at its stated tolerance.

Each test records a PASS/FAIL line (shown in the terminal summary) before
asserting, so a failing criterion still leaves its line behind.
"""

import time

import numpy as np
import pytest

from basinforge import basin_map as bm
from basinforge.errors import ConfigError
from basinforge.jet_core import PolyMap2, compose, degree_mask, invert_formal
from basinforge.pipelines import RunConfig, build_general, conjugacy_residual, run
from basinforge.sequence_gen import MapSequence, SequenceSpec, ball_samples, verify_uniform_attraction

from .gate import record

pytestmark = pytest.mark.slow


def diagonal_cfg(seed):
    return RunConfig.from_dict({
        "pipeline": "diagonal", "horizon": 400, "trains": 3,
        "sequence": {"family": "diagonal-random", "seed": seed, "C": 0.35, "D": 0.5, "pattern": "alternating"},
        "ledger": {"k": 2},
    })


def general_cfg(seed, C, eps=None, horizon=4500, trains=8, verify_only=False):
    led = {"k": 2.1, "x": 1.5, "delta": 0.05}
    if eps is not None:
        led["eps"] = eps
    return RunConfig.from_dict({
        "pipeline": "general", "horizon": horizon, "trains": trains, "verify_only": verify_only,
        "sequence": {"family": "full-random", "seed": seed, "C": C, "D": 0.5, "pattern": "alternating",
                     "train_law": "general", "x": 1.5},
        "ledger": led,
    })


def unit_disc_jet(rng, K, min_det=0.1):
    """Jet with every coefficient in the unit disc and ``|det L| >= min_det``."""
    mask = degree_mask(K).copy()
    mask[0, 0] = False
    n = 2 * int(mask.sum())
    while True:
        c = np.zeros((2, K + 1, K + 1), dtype=complex)
        c[:, mask] = (np.sqrt(rng.uniform(0, 1, n)) * np.exp(2j * np.pi * rng.uniform(0, 1, n))).reshape(2, -1)
        p = PolyMap2(K, c)
        if abs(np.linalg.det(p.linear_array())) >= min_det:
            return p


def test_1_jet_algebra():
    # errors are per coefficient, relative to max(1, largest coefficient of the result);
    # inverses of |det| ~ 0.1 jets reach 1e11 at K = 6
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_assoc = worst_inv = worst_inv_abs = 0.0
    for _ in range(1000):
        K = int(rng.integers(1, 7))
        f, g, h = (unit_disc_jet(rng, K) for _ in range(3))
        lhs = compose(compose(f, g, K), h, K)
        rhs = compose(f, compose(g, h, K), K)
        worst_assoc = max(worst_assoc, lhs.max_abs_diff(rhs) / max(1.0, np.abs(lhs.coeffs).max()))
        fi = invert_formal(f, K)
        ident = PolyMap2.identity(K)
        err = max(compose(fi, f, K).max_abs_diff(ident), compose(f, fi, K).max_abs_diff(ident))
        worst_inv_abs = max(worst_inv_abs, err)
        worst_inv = max(worst_inv, err / max(1.0, np.abs(fi.coeffs).max()))
    elapsed = time.perf_counter() - t0
    ok = worst_assoc <= 1e-10 and worst_inv <= 1e-10 and elapsed < 10
    record("1", ok, f"assoc {worst_assoc:.1e}, inverse {worst_inv:.1e} relative ({worst_inv_abs:.1e} absolute), "
                    f"{elapsed:.2f}s")
    assert ok


def test_2_diagonal_pipeline_on_20_seeds():
    bad, slowest, worst_rate = [], 0.0, 0.0
    for seed in range(20):
        t0 = time.perf_counter()
        res = run(diagonal_cfg(seed))
        slowest = max(slowest, time.perf_counter() - t0)
        s = res.summary
        ch = s["checks"]
        rate = ch["cauchy_rate"]["detail"]
        worst_rate = max(worst_rate, rate["max_window_rate"])
        good = (
            s["info"]["trains"]["complete"] >= 3
            and ch["train_inequalities"]["passed"]
            and ch["commutation"]["passed"]
            and ch["directing"]["passed"]
            and ch["dphi_zero_identity"]["passed"]
            and ch["cauchy_rate"]["passed"]
            and res.status == "ok"
        )
        if not good:
            bad.append(seed)
    ok = not bad and slowest < 120
    record("2", ok, f"20 seeds, failing {bad}, worst window rate {worst_rate:.3f} <= {0.5**3 / 0.35 + 0.05:.3f}, "
                    f"slowest {slowest:.1f}s")
    assert ok


@pytest.mark.xfail(strict=True, raises=ConfigError,
                   reason="|a|^x/|b| <= D^x/C < 1 at C=0.4, D=0.5: no train engine exists")
def test_3_general_pipeline_at_stated_bounds():
    try:
        for seed in range(10):
            res = run(general_cfg(seed, 0.4, eps=0.1, horizon=800, trains=3, verify_only=True))
            assert res.summary["info"]["trains"]["complete"] >= 3 and not res.summary["failed"]
    except ConfigError as exc:
        record("3", False, f"C=0.4 infeasible: {exc}")
        raise
    record("3", True, "C=0.4 passed on 10 seeds")


def test_3_supplementary_general_at_C03():
    bad = []
    for seed in range(10):
        res = run(general_cfg(seed, 0.3, eps=0.1, horizon=800, trains=3, verify_only=True))
        s = res.summary
        # fullness coverage is criterion 4's business; here no checker may fail
        if not (s["info"]["trains"]["complete"] >= 3 and not s["failed"]):
            bad.append(seed)
    ok = not bad
    record("3-supp", ok, f"C=0.3, eps=0.1, 10 seeds with >=3 trains, failing {bad}")
    assert ok


@pytest.fixture(scope="module")
def general_full():
    cfg = general_cfg(0, 0.3)
    return cfg, run(cfg)


def test_4_g_basin_fullness(general_full):
    _, res = general_full
    full = res.summary["checks"]["g_basin_fullness"]
    ok = full["passed"] and full["reached"] == 100
    record("4", ok, f"{full['reached']}/100 points reached 1e-6, sufficient coverage {full['sufficient_coverage']}")
    assert ok


def test_5_injectivity_and_coverage(general_full):
    _, res = general_full
    inj = res.summary["checks"]["injectivity_coverage"]
    names = [c["name"] for c in inj["checks"] if c["passed"]]
    ok = inj["passed"]
    record("5", ok, f"{len(names)}/{len(inj['checks'])} checks passed")
    assert ok


def test_6_autonomous():
    F = PolyMap2.from_terms(2, {(1, 1, 0): 0.5, (1, 0, 2): 1.0, (2, 0, 1): 0.3})
    amap = bm.autonomous_basin_map(F, 2)
    res = conjugacy_residual(amap, 0.05 * ball_samples(500, seed=42))
    degs = amap.degrees_of_iterates(20)
    x_coef = amap.X.coef(1, 0, 2)
    G_diag = amap.G.b == 0.3 and amap.G.a == 0.5 and amap.G.degree == 1 and amap.G.c == 0
    ok = res < 1e-8 and len(set(degs)) == 1 and abs(x_coef - 1 / 0.41) < 1e-12 and G_diag
    record("6", ok, f"residual {res:.1e}, degrees {sorted(set(degs))}, X w^2 coefficient {x_coef.real:.4f}")
    assert ok


def test_7_round_trip_and_witness(general_full):
    _, res = general_full
    ch = res.summary["checks"]
    rt = ch["round_trip"]["detail"]["max_error"]
    far = ch["witness_far"]
    ok = rt < 1e-7 and far["passed"]
    record("7", ok, f"round trip {rt:.1e} on 50 points; ||w|| <= 5 witnesses all below 1e-6: {far['passed']}")
    assert ok


def test_8_fornaess_is_reported_not_certified():
    cfg = RunConfig.from_dict({"pipeline": "diagonal", "horizon": 60, "trains": 3,
                               "sequence": {"family": "fornaess-short", "a0": 0.5}})
    res = run(cfg)
    att = verify_uniform_attraction(MapSequence(cfg.sequence), 30, samples=200)
    tr = res.summary["info"]["trains"]
    lower = att.ratio_min
    ok = (res.exit_code == 0 and res.status == "warning" and not att.passed and lower[-1] < 1e-6
          and tr["truncated"] and tr["multipliers"] == "column")
    record("8", ok, f"exit {res.exit_code}, status {res.status}, lower ratio {lower[0]:.2g} -> {lower[-1]:.2g}, "
                    f"train search truncated in {tr['multipliers']} mode")
    assert ok

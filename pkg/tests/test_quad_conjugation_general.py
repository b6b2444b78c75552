import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from basinforge.errors import ConfigError, SingularityError
from basinforge.jet_core import PolyMap2, compose, invert_formal
from basinforge.quad_conjugation_general import (
    NAMES,
    ConstantsLedger,
    QuadCoeffs,
    TrainLogs,
    _brute_double_a,
    choose_d_n,
    classify_case,
    commutation_residuals_quad,
    conjugate_by_unitary,
    derive_quad_recursions,
    eps_ceiling,
    max_expressions,
    propagate_train,
    quad_step,
    select_global_chain,
    terminal_sensitivity,
    verify_quad_chain,
    verify_wagon_max_bounds,
)
from basinforge.sequence_gen import AttractionBounds, MapSequence, SequenceSpec
from basinforge.train_general import build_trains_general, triangularize_frames
from basinforge.triangular import TriangularMap

_BUILT = {}


def general(trains=5):
    if trains not in _BUILT:
        seq = MapSequence(SequenceSpec(family="full-random", seed=0, bounds=AttractionBounds(0.3, 0.5),
                                       pattern="alternating", train_law="general"))
        part = build_trains_general(seq, 2.1, 1.5, horizon=800, max_trains=trains)
        tri, _ = triangularize_frames(seq, part)
        _BUILT[trains] = part, tri
    return _BUILT[trains]


def lower(a, b, c=0.0, **quad):
    terms = {(1, 1, 0): a, (2, 0, 1): b, (2, 1, 0): c}
    names = {"z02": (1, 0, 2), "z11": (1, 1, 1), "z20": (1, 2, 0), "w02": (2, 0, 2), "w11": (2, 1, 1), "w20": (2, 2, 0)}
    for k, v in quad.items():
        terms[names[k]] = v
    return PolyMap2.from_terms(2, terms)


def random_quad(r):
    return r.standard_normal((2, 3)) + 1j * r.standard_normal((2, 3))


class TestRecursions:
    @pytest.mark.parametrize("a,b", [(0.5, 0.3), (0.31 + 0.2j, -0.45), (0.4, 0.4j)])
    def test_multipliers(self, a, b):
        rec = derive_quad_recursions(lower(a, b))
        expect = [b * b / a, b, a, b, a, a * a / b]
        assert np.allclose(rec.multipliers(), expect, rtol=1e-12)
        assert np.all(rec.cross_terms() == 0)

    def test_linear_zero_next_gives_zero(self):
        Q, d = quad_step(np.zeros((2, 3)), np.diag([0.5, 0.3]), np.zeros((2, 3)))
        assert np.all(Q == 0) and d == 0

    def test_single_z2_term_in_second_component(self):
        rec = derive_quad_recursions(lower(0.5, 0.3, w20=0.7))
        named = dict(zip(NAMES, rec.constant))
        assert named["beta20"] == pytest.approx(0.7 / 0.3)
        assert all(v == 0 for k, v in named.items() if k != "beta20")

    def test_singular(self):
        with pytest.raises(SingularityError):
            derive_quad_recursions(lower(0.0, 0.3))

    def test_cross_terms_bounded_on_seeded_family(self):
        _, tri = general(3)
        bound = 4 * 0.5**2 / 0.3**2
        for n in range(tri.N):
            rec = derive_quad_recursions(tri.germs[n], tri.lin[n])
            assert np.abs(rec.cross_terms()).max() <= bound
            assert np.abs(rec.constant).max() <= bound


class TestChooseD:
    def test_zero_next(self):
        rec = derive_quad_recursions(lower(0.5, 0.3))
        assert choose_d_n(rec, QuadCoeffs.zero()) == 0

    def test_unit_beta20_gives_a_squared(self):
        a, b = 0.45 * np.exp(0.3j), 0.32
        rec = derive_quad_recursions(lower(a, b))
        assert choose_d_n(rec, QuadCoeffs.from_named(beta20=1.0)) == pytest.approx(a * a, rel=1e-14)

    def test_agrees_with_quad_step(self):
        r = np.random.default_rng(1)
        f = lower(0.47, 0.33, 0.01, z02=0.2, w11=-0.1j, w20=0.3)
        nxt = random_quad(r)
        _, d = quad_step(np.array([[0.2, 0, 0], [0, -0.1j, 0.3]]), f.linear_array(), nxt)
        assert d == pytest.approx(choose_d_n(derive_quad_recursions(f), QuadCoeffs(nxt)), rel=1e-12)

    @given(st.integers(0, 2**32 - 1))
    def test_substitution(self, seed):
        # h_n must equal g_n^{-1} o h_{n+1} o f_n through degree 2, with no z^2 in its second component
        r = np.random.default_rng(seed)
        a, b = r.uniform(0.3, 0.5) * np.exp(1j * r.uniform(0, 6)), r.uniform(0.3, 0.5)
        c = 0.1 * complex(r.standard_normal(), r.standard_normal())
        f2 = random_quad(r) * 0.1
        L = np.array([[a, 0], [c, b]])
        f = PolyMap2.linear(L, 2) + QuadCoeffs(f2).to_polymap(2) - PolyMap2.identity(2)
        nxt = random_quad(r)
        Q, d = quad_step(f2, L, nxt)
        g = TriangularMap(a, b, c, (d,), lower=True).to_polymap(2)
        h = compose(invert_formal(g), compose(QuadCoeffs(nxt).to_polymap(), f, 2), 2)
        got = QuadCoeffs.from_polymap(h).c
        assert abs(got[1, 2]) <= 1e-12 * max(1.0, np.abs(nxt).max())
        assert np.allclose(got, Q, atol=1e-12)


class TestLedger:
    def test_ceiling_and_default(self):
        assert eps_ceiling(2.1) == pytest.approx(0.125)
        assert ConstantsLedger.build(0.3, 0.5).eps == pytest.approx(0.0625)

    def test_formulas(self):
        led = ConstantsLedger.build(0.3, 0.5, eps=0.1, delta=0.05)
        r = 4 * 0.25 / 0.09
        assert led.X == pytest.approx(r / (0.05 * (1 - 0.5**0.05)))
        assert led.K3 == pytest.approx(led.K2 ** (1 / 1.5))
        assert led.lam < 1 and 0.5**2.1 < led.lam * 0.3
        assert led.rho == pytest.approx(0.5**2.1 / (led.lam * 0.3))

    def test_run_constants(self):
        led = ConstantsLedger.build(0.3, 0.5)
        assert led.K1 == pytest.approx(8.08, rel=1e-3)
        assert led.X == pytest.approx(1.04e4, rel=1e-2)
        assert led.j1 == 7

    @pytest.mark.parametrize(
        "kw",
        [dict(k=2.3), dict(eps=0.2), dict(eps=0.0), dict(delta=-1.0), dict(lam=1.2), dict(x=2.2)],
    )
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            ConstantsLedger.build(0.3, 0.5, **kw)

    def test_with_Z_updates_dependents(self):
        led = ConstantsLedger.build(0.3, 0.5)
        big = led.with_Z(led.Z * 10)
        assert big.M > led.M and big.j1 >= led.j1


class TestChain:
    def test_linear_sequence_gives_identities(self):
        lin = np.array([np.diag([0.5, 0.3])] * 8, dtype=complex)
        germs = [PolyMap2.linear(m, 2) for m in lin]
        Q, d, res = propagate_train(germs, lin, (0, 8), np.zeros((2, 3)))
        assert np.all(Q == 0) and np.all(d == 0) and np.all(res == 0)

    def test_pipeline_chain_passes(self):
        part, tri = general()
        ch = select_global_chain(tri, part)
        for eps in (None, 0.1):
            led = ConstantsLedger.build(0.3, 0.5, eps=eps)
            rep = verify_quad_chain(ch, part, led, germs=tri.bar_germs()[: ch.N])
            assert rep.report.passed, [c for c in rep.report.checks if not c.passed]
            assert rep.j0 is not None and rep.Z_needed <= led.Z

    def test_commutation_through_boundaries(self):
        part, tri = general()
        ch = select_global_chain(tri, part)
        assert commutation_residuals_quad(ch, tri.bar_germs()[: ch.N]).max() <= 1e-9

    def test_transfer_within_six(self):
        part, tri = general()
        ch = select_global_chain(tri, part)
        for j in range(1, len(ch.ps) - 1):
            R = np.abs(ch.Q_in[j]).max()
            assert np.abs(conjugate_by_unitary(ch.Q_in[j], tri.M[j])).max() <= 6 * R

    @given(st.integers(0, 2**32 - 1))
    def test_unitary_transfer_bound(self, seed):
        r = np.random.default_rng(seed)
        Q = random_quad(r)
        M, _ = np.linalg.qr(r.standard_normal((2, 2)) + 1j * r.standard_normal((2, 2)))
        assert np.abs(conjugate_by_unitary(Q, M)).max() <= 6 * np.abs(Q).max()

    def test_terminal_sensitivity_shrinks(self):
        part, tri = general()
        r = np.random.default_rng(0)
        T = random_quad(r)
        T[1, 2] = 0
        diffs = terminal_sensitivity(tri, part, part.complete, T)
        assert diffs[-1] > 0
        assert all(d <= 1e-12 * diffs[-1] for d in diffs[:-1])

    def test_csv_and_json(self):
        part, tri = general()
        ch = select_global_chain(tri, part)
        led = ConstantsLedger.build(0.3, 0.5)
        assert ch.to_csv(led).splitlines()[0] == "n,max_abs_h_coef,abs_d,log_envelope"
        assert len(ch.to_json_obj()["h"]) == ch.N + 1


class TestMaxExpressions:
    def test_flat_train_is_empty_product(self):
        tl = TrainLogs(0, 3, 10, np.zeros(11), np.zeros(11))
        mx = max_expressions(tl, 0.1)
        for key in ("single", "double_a", "double_b", "triple"):
            assert np.all(mx[key] == 0)

    @given(st.integers(0, 2**32 - 1), st.integers(2, 30), st.floats(0.01, 0.12))
    def test_double_a_matches_brute_force(self, seed, n, eps):
        r = np.random.default_rng(seed)
        la = np.log(r.uniform(0.3, 0.5, n))
        lb = np.log(r.uniform(0.3, 0.5, n))
        tl = TrainLogs(0, n // 2, n, np.concatenate([[0], np.cumsum(la)]), np.concatenate([[0], np.cumsum(lb)]))
        mx = max_expressions(tl, eps)
        for i in range(n + 1):
            assert mx["double_a"][i] == pytest.approx(_brute_double_a(tl, eps, i), abs=1e-12)

    @pytest.mark.parametrize(
        "s,t,q,first,case",
        [(0, 5, 4, True, "I"), (0, 2, 4, True, "II"), (5, 6, 4, False, "I"), (1, 6, 4, False, "II"), (1, 2, 4, False, "III")],
    )
    def test_case_labels(self, s, t, q, first, case):
        assert classify_case(s, t, q, first) == case

    def test_wagon_bounds_seeded(self):
        part, tri = general()
        rep = verify_wagon_max_bounds(part, tri, ConstantsLedger.build(0.3, 0.5))
        assert rep.passed
        assert sum(json.loads(rep.checks[1].detail).values()) == part.covered

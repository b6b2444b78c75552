import dataclasses

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from basinforge.direct_diagonal import DirectingWeights, direct_trains
from basinforge.errors import DomainError
from basinforge.jet_core import PolyMap2
from basinforge.sequence_gen import AttractionBounds, MapSequence, SequenceSpec
from basinforge.train_diagonal import build_trains_diagonal
from basinforge.triangularize_diagonal import (
    build_conjugation_diagonal,
    commutation_residuals,
    orbit_bound_slack,
    solve_bounded_orbit,
    verify_commutation,
)

from .toys import FOUR_TRAINS, BlockSequence


def plain_weights(germs, parity, k=2):
    n = len(germs)
    return DirectingWeights(k=k, log_theta=np.zeros(n + 1), log_tau=np.zeros(n + 1), parity=np.asarray(parity),
                            germs=germs, original=germs)


def partition_for(germs, k=2):
    class P:
        pass

    p = P()
    p.k = k
    return p


def seeded(seed):
    seq = MapSequence(SequenceSpec(family="diagonal-random", seed=seed, bounds=AttractionBounds(0.35, 0.5),
                                   pattern="alternating"))
    part = build_trains_diagonal(seq, 2, 400)
    d = direct_trains(seq, part)
    return d, part, build_conjugation_diagonal(d, part)


class TestBoundedOrbit:
    def test_fixed_point(self):
        x = solve_bounded_orbit(np.full(200, 0.5), np.ones(200))
        assert x[0] == pytest.approx(2.0, abs=1e-12)

    def test_zero_drive(self):
        assert np.all(solve_bounded_orbit(np.full(10, 0.9), np.zeros(10)) == 0)

    def test_geometric_series(self):
        x = solve_bounded_orbit(np.full(40, 0.25), np.ones(40))
        assert abs(x[0] - 4 / 3) < 1e-10

    def test_not_contracting(self):
        with pytest.raises(DomainError):
            solve_bounded_orbit(np.full(5, 1.0), np.ones(5))

    @given(st.integers(0, 2**32 - 1), st.integers(1, 80))
    def test_bound_and_recursion(self, seed, n):
        r = np.random.default_rng(seed)
        mult = r.uniform(0, 0.5, n) * np.exp(2j * np.pi * r.uniform(size=n))
        drive = r.standard_normal(n) + 1j * r.standard_normal(n)
        term = complex(r.standard_normal())
        x = solve_bounded_orbit(mult, drive, term)
        assert np.allclose(x[:-1], mult * x[1:] + drive, atol=1e-12)
        assert np.abs(x).max() <= abs(term) + np.abs(drive).max() / 0.5 + 1e-12


class TestChain:
    def test_linear_gives_trivial_chain(self):
        germs = [PolyMap2.linear(np.diag([0.5, 0.3]), 2)] * 6
        ch = build_conjugation_diagonal(plain_weights(germs, [1] * 6), partition_for(germs))
        assert np.all(ch.normal == 0) and np.all(ch.corner == 0)
        for g, f in zip(ch.g, germs):
            assert g.to_polymap(2).max_abs_diff(f) == 0

    def test_single_w2_term_matches_bounded_orbit(self):
        r = np.random.default_rng(3)
        n = 25
        a = r.uniform(0.45, 0.5, n) * np.exp(1j * r.uniform(0, 6, n))
        b = r.uniform(0.3, 0.35, n)
        c = r.standard_normal(n) + 1j * r.standard_normal(n)
        germs = [PolyMap2.from_terms(2, {(1, 1, 0): a[i], (2, 0, 1): b[i], (1, 0, 2): c[i]}) for i in range(n)]
        ch = build_conjugation_diagonal(plain_weights(germs, [1] * n), partition_for(germs))
        ref = solve_bounded_orbit(b**2 / a, c / a)
        assert np.allclose(ch.normal, ref[:-1], atol=1e-13)

    def test_boundary_alpha_ignores_later_steps(self):
        seq = BlockSequence(FOUR_TRAINS)
        part = build_trains_diagonal(seq, 2, len(seq.mods))
        d = direct_trains(seq, part)
        ch = build_conjugation_diagonal(d, part)
        r = part.ps[2]  # train 1 (odd) ends at r - 1, train 2 is even
        later = [g if i < r else g + g.drop_degrees(1).scaled(5.0) for i, g in enumerate(d.germs)]
        ch2 = build_conjugation_diagonal(dataclasses.replace(d, germs=later), part)
        assert ch2.normal[r] != ch.normal[r]
        assert ch2.normal[r - 1] == ch.normal[r - 1]

    def test_identity_linear_part(self):
        _, _, ch = seeded(0)
        for h in ch.h:
            assert np.array_equal(h.linear_array(), np.eye(2))

    def test_json(self):
        _, _, ch = seeded(1)
        obj = ch.to_json_obj()
        assert len(obj["steps"]) == ch.N
        assert {"alpha", "gamma"} <= set(obj["steps"][ch.parity.tolist().index(1)])


class TestCommutation:
    def test_linear_zero_residual(self):
        germs = [PolyMap2.linear(np.diag([0.3, 0.5]), 2)] * 4
        ch = build_conjugation_diagonal(plain_weights(germs, [0] * 4), partition_for(germs))
        assert np.all(commutation_residuals(ch, germs) == 0)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_seeded_family(self, seed):
        d, _, ch = seeded(seed)
        assert commutation_residuals(ch, d.germs).max() < 1e-10
        assert verify_commutation(ch, d.germs).passed

    def test_corrupted_alpha_detected(self):
        d, _, ch = seeded(0)
        n = int(np.nonzero(ch.parity == 1)[0][3])
        h = list(ch.h)
        h[n] = h[n] + PolyMap2.from_terms(2, {(1, 0, 2): 1.0})
        bad = dataclasses.replace(ch, h=h)
        res = commutation_residuals(bad, d.germs)
        assert res[n] > 0.1 and not verify_commutation(bad, d.germs).passed

    def test_orbit_bound(self):
        d, _, ch = seeded(3)
        assert orbit_bound_slack(ch, d) >= 0

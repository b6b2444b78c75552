import numpy as np
import pytest

from basinforge.errors import ConfigError
from basinforge.jet_core import PolyMap2
from basinforge.sequence_gen import (
    AttractionBounds,
    MapSequence,
    SequenceSpec,
    ball_samples,
    order_of_contact,
    verify_uniform_attraction,
)


def seq_of(**kw) -> MapSequence:
    return MapSequence(SequenceSpec(**kw))


class TestSpec:
    @pytest.mark.parametrize(
        "kw",
        [
            dict(family="nope"),
            dict(family="diagonal-random"),
            dict(family="fornaess-short", bounds=AttractionBounds(0.3, 0.5)),
            dict(family="constant", contact_order=1),
            dict(family="diagonal-random", bounds=AttractionBounds(0.49, 0.5)),
            dict(family="user-file", bounds=AttractionBounds(0.3, 0.5)),
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            SequenceSpec(**kw)

    def test_bounds_order(self):
        with pytest.raises(ConfigError):
            AttractionBounds(0.6, 0.5)

    def test_dict_round_trip(self):
        s = SequenceSpec(family="constant", linear=((0.5, 0), (0, 0.3)), terms=((1, 0, 2, 1.0),))
        assert SequenceSpec.from_dict(s.to_dict()) == s

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown sequence keys"):
            SequenceSpec.from_dict({"family": "constant", "colour": 1})


class TestGenerate:
    def test_constant_is_constant(self):
        s = seq_of(family="constant")
        assert s[0].max_abs_diff(s[17]) == 0
        assert np.allclose(s[3].linear_array(), np.diag([0.5, 0.3]))

    def test_fornaess_second_map(self):
        f1 = seq_of(family="fornaess-short", a0=0.5)[1]
        expect = PolyMap2.from_terms(3, {(1, 2, 0): 1, (1, 0, 1): 0.25, (2, 1, 0): 0.25})
        assert f1.max_abs_diff(expect) == 0

    @pytest.mark.parametrize("family", ["diagonal-random", "triangular-random", "full-random"])
    def test_deterministic(self, family):
        kw = dict(family=family, seed=42, bounds=AttractionBounds(0.35, 0.5))
        a, b = seq_of(**kw), seq_of(**kw)
        # query in different orders: germs depend only on (seed, n)
        for n in (5, 0, 3):
            b[n]
        for n in range(6):
            assert np.array_equal(a[n].coeffs, b[n].coeffs)

    def test_seed_changes_output(self):
        a = seq_of(family="diagonal-random", seed=1, bounds=AttractionBounds(0.35, 0.5))
        b = seq_of(family="diagonal-random", seed=2, bounds=AttractionBounds(0.35, 0.5))
        assert not np.array_equal(a[0].coeffs, b[0].coeffs)

    def test_alternating_blocks(self):
        s = seq_of(family="diagonal-random", seed=3, bounds=AttractionBounds(0.35, 0.5), pattern="alternating")
        L = s.linear_arrays(200)
        dom = np.abs(L[:, 0, 0]) > np.abs(L[:, 1, 1])
        # opening prefix is dominated by the second coordinate
        assert not dom[: s.prefix_length].any()
        ends = [s.prefix_length, *s.block_ends(200)]
        for j, (lo, hi) in enumerate(zip(ends, ends[1:])):
            assert np.all(dom[lo:hi] == (j % 2 == 0))

    def test_general_law_infeasible_bounds(self):
        s = seq_of(family="full-random", bounds=AttractionBounds(0.4, 0.5), pattern="alternating", train_law="general")
        with pytest.raises(ConfigError, match="per-step log gain -0.1608"):
            s[0]

    def test_ball_samples_inside(self):
        pts = ball_samples(500, seed=1)
        assert np.all(np.hypot(np.abs(pts[:, 0]), np.abs(pts[:, 1])) <= 1 + 1e-12)


class TestAttraction:
    def test_constant_pass(self):
        rep = verify_uniform_attraction(seq_of(family="constant", bounds=AttractionBounds(0.3, 0.5)), 3, 500)
        assert rep.passed
        assert min(rep.ratio_min) >= 0.3 - 1e-12 and max(rep.ratio_max) <= 0.5 + 1e-12

    def test_fornaess_fails_with_collapsing_lower_ratio(self):
        rep = verify_uniform_attraction(seq_of(family="fornaess-short"), 6, 200)
        assert not rep.passed
        lo = rep.lower_ratio_trend()
        assert lo[-1] < 1e-5 and lo[-1] < lo[2]

    @pytest.mark.parametrize("family", ["diagonal-random", "triangular-random", "full-random"])
    def test_random_families_within_bounds(self, family):
        s = seq_of(family=family, seed=5, bounds=AttractionBounds(0.35, 0.5), pattern="alternating")
        assert verify_uniform_attraction(s, 20, 2000).passed

    def test_large_sample(self):
        s = seq_of(family="diagonal-random", seed=9, bounds=AttractionBounds(0.35, 0.5))
        assert verify_uniform_attraction(s, 3, 10_000).passed


class TestOrderOfContact:
    def test_linear_returns_cutoff(self):
        assert order_of_contact(seq_of(family="constant", cutoff=4), 5) == 4

    def test_fornaess_quadratic(self):
        assert order_of_contact(seq_of(family="fornaess-short"), 5) == 2

    def test_cubic_only(self):
        s = seq_of(family="diagonal-random", seed=1, bounds=AttractionBounds(0.35, 0.5), contact_order=3, cutoff=4)
        assert s[0].block_max(2) == 0 and s[0].block_max(3) > 0
        assert order_of_contact(s, 10) == 3

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from basinforge.errors import ContractError, DomainError, SingularityError
from basinforge.jet_core import (
    Complex2Vector,
    PolyMap2,
    cauchy_certify,
    compose,
    evaluate,
    invert_formal,
)

from .conftest import random_germ


def terms(K, **kw):
    """Shorthand: terms(2, z10=..., w02=...) for the two components."""
    out = {}
    for name, v in kw.items():
        comp = 1 if name[0] == "z" else 2
        out[(comp, int(name[1]), int(name[2]))] = v
    return PolyMap2.from_terms(K, out)


class TestCompose:
    def test_identity_left(self, rng):
        q = random_germ(rng, 4)
        assert compose(PolyMap2.identity(4), q, 4).max_abs_diff(q) < 1e-15

    def test_diagonal_after_shear(self):
        a, b = 0.7, -0.2 + 0.1j
        p = terms(2, z10=a, w01=b)
        q = terms(2, z10=1, z02=1, w01=1)
        expect = terms(2, z10=a, z02=a, w01=b)
        assert compose(p, q, 2).max_abs_diff(expect) < 1e-15

    def test_cross_term_truncated(self):
        p = terms(2, z10=1, z02=1, w01=1)
        q = terms(2, z10=1, w01=1, w20=1)
        # (w + z^2)^2 only contributes from degree 4 on
        expect = terms(2, z10=1, z02=1, w01=1, w20=1)
        assert compose(p, q, 2).max_abs_diff(expect) < 1e-15

    def test_degree_three_by_hand(self):
        p = terms(3, z10=1, z02=1, w01=1)
        q = terms(3, z10=1, w01=1, w20=1)
        # z + (w + z^2)^2 = z + w^2 + 2 w z^2 + O(4)
        expect = terms(3, z10=1, z02=1, z21=2, w01=1, w20=1)
        assert compose(p, q, 3).max_abs_diff(expect) < 1e-15

    def test_inner_constant_rejected(self):
        q = terms(2, z00=1.0, z10=1, w01=1)
        with pytest.raises(DomainError):
            compose(PolyMap2.identity(2), q)

    def test_cutoff_too_large(self):
        with pytest.raises(ContractError):
            compose(PolyMap2.identity(2), PolyMap2.identity(3), 3)


class TestInvert:
    def test_identity(self):
        assert invert_formal(PolyMap2.identity(3)).max_abs_diff(PolyMap2.identity(3)) == 0

    @pytest.mark.parametrize("a,b,d", [(0.5, 0.5, 1.0), (0.3, 0.45, -2.0 + 1j), (0.9, 0.2, 0.25)])
    def test_lower_triangular_closed_form(self, a, b, d):
        g = terms(2, z10=a, w01=b, w20=d)
        expect = terms(2, z10=1 / a, w01=1 / b, w20=-d / (a * a * b))
        assert invert_formal(g).max_abs_diff(expect) < 1e-13

    def test_worked_numbers(self):
        g = terms(2, z10=0.5, w01=0.5, w20=1.0)
        assert invert_formal(g).max_abs_diff(terms(2, z10=2, w01=2, w20=-8)) < 1e-13

    def test_singular(self):
        with pytest.raises(SingularityError):
            invert_formal(terms(2, z10=1, w10=1, w20=1))


class TestEvaluate:
    @pytest.mark.parametrize(
        "p,pt,expect",
        [
            (PolyMap2.identity(2), (1, 2), (1, 2)),
            (terms(2, z10=0.5, w01=0.3), (1, 1), (0.5, 0.3)),
            (terms(2, z20=1, w01=1), (2, 0), (4, 0)),
        ],
    )
    def test_examples(self, p, pt, expect):
        v = evaluate(p, Complex2Vector(*pt))
        assert abs(v.z - expect[0]) < 1e-15 and abs(v.w - expect[1]) < 1e-15

    def test_json_round_trip(self, rng):
        p = random_germ(rng, 3)
        assert PolyMap2.from_json(p.to_json()).max_abs_diff(p) == 0


class TestCauchy:
    @pytest.mark.parametrize(
        "p,ok",
        [
            (terms(2, z10=0.4, w01=0.4), True),
            (terms(2, z10=0.4, z20=2.0, w01=0.4), False),
            (terms(3, z10=0.45, w01=-0.45j), True),
        ],
    )
    def test_examples(self, p, ok):
        assert cauchy_certify(p, 0.5).passed is ok

    def test_violation_detail(self):
        rep = cauchy_certify(terms(2, z10=0.4, z20=2.0, w01=0.4), 0.5)
        assert rep.violations[0]["degree"] == 2


seeds = st.integers(0, 2**32 - 1)
cutoffs = st.integers(1, 6)


class TestAlgebraProperties:
    @given(seeds, cutoffs)
    def test_associativity(self, seed, K):
        r = np.random.default_rng(seed)
        f, g, h = (random_germ(r, K) for _ in range(3))
        lhs = compose(f, compose(g, h, K), K)
        rhs = compose(compose(f, g, K), h, K)
        assert lhs.max_abs_diff(rhs) <= 1e-10 * max(1.0, np.abs(lhs.coeffs).max())

    @given(seeds, cutoffs)
    def test_inverse_both_sides(self, seed, K):
        r = np.random.default_rng(seed)
        f = random_germ(r, K, scale=0.5, lin_min=0.5)
        g = invert_formal(f)
        ident = PolyMap2.identity(K)
        assert compose(f, g, K).max_abs_diff(ident) < 1e-10
        assert compose(g, f, K).max_abs_diff(ident) < 1e-10

    @given(seeds, st.integers(2, 5))
    def test_truncation_commutes_with_compose(self, seed, K):
        r = np.random.default_rng(seed)
        f, g = random_germ(r, K), random_germ(r, K)
        low = compose(f.with_cutoff(K - 1), g.with_cutoff(K - 1), K - 1)
        assert compose(f, g, K).with_cutoff(K - 1).max_abs_diff(low) < 1e-11

    @given(seeds)
    def test_evaluation_matches_composition(self, seed):
        # for polynomials of degree 1 composition is exact, so evaluation must agree
        r = np.random.default_rng(seed)
        f, g = random_germ(r, 1), random_germ(r, 1)
        z, w = r.standard_normal(3) + 0j, r.standard_normal(3) + 0j
        a = compose(f, g, 1).evaluate_arrays(z, w)
        b = f.evaluate_arrays(*g.evaluate_arrays(z, w))
        assert np.allclose(a, b, atol=1e-13)

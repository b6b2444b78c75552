import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from basinforge.errors import SingularityError
from basinforge.jet_core import PolyMap2, compose
from basinforge.limit_chain import Scaled
from basinforge.logmag import LogMag, logabs, prefix_logs
from basinforge.triangular import TriangularMap


class TestLogMag:
    def test_power_beyond_float_range(self):
        x = LogMag.power(0.5, -(2.0**60))
        assert x.log() == pytest.approx(2.0**60 * math.log(2))

    def test_products_are_sums(self):
        a, b = LogMag.of(3.0), LogMag.of(-0.25)
        assert (a * b).log() == pytest.approx(math.log(0.75))

    def test_zero(self):
        assert LogMag.of(0.0).log() == -math.inf

    def test_prefix(self):
        assert np.allclose(prefix_logs([1.0, 2.0, -0.5]), [0, 1, 3, 2.5])

    def test_logabs_complex(self):
        assert logabs(np.array([3 + 4j]))[0] == pytest.approx(math.log(5))


coef = st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False)
diag = st.floats(0.2, 1.0)


class TestTriangularMap:
    @given(diag, diag, coef, coef, coef, st.booleans())
    def test_inverse_round_trip(self, a, b, c, d2, d3, lower):
        g = TriangularMap(a, b, c, (d2, d3), lower=lower)
        z = np.array([0.3 + 0.1j, -0.2, 0.05j])
        w = np.array([0.1, 0.2j, -0.3])
        Z, W = g.evaluate_arrays(z, w)
        z2, w2 = g.inverse_arrays(Z, W)
        assert np.allclose(z2, z, atol=1e-10) and np.allclose(w2, w, atol=1e-10)

    @given(diag, diag, coef, coef)
    def test_polymap_inverse_composes_to_identity(self, a, b, c, d):
        g = TriangularMap(a, b, c, (d,), lower=True)
        prod = compose(g.inverse_polymap(2), g.to_polymap(2), 2)
        assert prod.max_abs_diff(PolyMap2.identity(2)) < 1e-10

    def test_scaled_evaluation(self):
        g = TriangularMap(0.5, 0.3, 0.1, (2.0,), lower=True)
        z, w = np.array([0.75]), np.array([0.5j])
        Z, W = g.evaluate_arrays(z, w, scale_e=np.array([-40]))
        Zr, Wr = g.evaluate_arrays(z * 2.0**-40, w * 2.0**-40)
        assert Z[0] * 2.0**-40 == pytest.approx(Zr[0], rel=1e-14)
        assert W[0] * 2.0**-40 == pytest.approx(Wr[0], rel=1e-14)

    def test_singular(self):
        with pytest.raises(SingularityError):
            TriangularMap(0.0, 1.0)


class TestScaled:
    def test_normalized_round_trip(self):
        s = Scaled.from_points(np.array([3e-200 + 0j]), np.array([1e-201j]))
        z, w = s.normalized().to_points()
        assert z[0] == pytest.approx(3e-200) and w[0] == pytest.approx(1e-201j)
        assert s.log2_norm()[0] == pytest.approx(math.log2(math.hypot(3e-200, 1e-201)))

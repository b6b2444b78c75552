import numpy as np
import pytest
from hypothesis import settings

from basinforge.jet_core import PolyMap2, degree_mask

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


def random_germ(rng: np.random.Generator, K: int, scale: float = 1.0, lin_min: float = 0.3) -> PolyMap2:
    """Germ with an invertible linear part and random higher coefficients."""
    c = np.zeros((2, K + 1, K + 1), dtype=complex)
    mask = degree_mask(K).copy()
    mask[0, 0] = False
    c[:, mask] = scale * (rng.standard_normal((2, int(mask.sum()))) + 1j * rng.standard_normal((2, int(mask.sum()))))
    Q, _ = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
    L = Q @ np.diag(rng.uniform(lin_min, 1.0, 2))
    c[:, 1, 0] = L[:, 0]
    c[:, 0, 1] = L[:, 1]
    return PolyMap2(K, c)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from tests import gate

    if gate.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(gate.LINES, key=lambda s: s.split(":")[0]):
            terminalreporter.write_line(line)

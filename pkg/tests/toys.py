"""Small hand-built sequences with exactly known multipliers."""

import numpy as np

from basinforge.jet_core import PolyMap2
from basinforge.sequence_gen import AttractionBounds


class BlockSequence:
    """Diagonal germs (a z + c w^2, b w + c z^2) with a/b = 0.5/0.3 swapped per block.

    ``blocks`` is a list of (length, first_dominates).  Only the attributes the
    train and conjugation builders read are provided.
    """

    def __init__(self, blocks, K: int = 2, c: complex = 0.01, bounds=AttractionBounds(0.3, 0.5), big=0.5, small=0.3):
        self.bounds = bounds
        self.K = K
        self.c = c
        self.mods = []
        for n, first in blocks:
            self.mods += [(big, small) if first else (small, big)] * n

    def germ(self, n: int) -> PolyMap2:
        a, b = self.mods[min(n, len(self.mods) - 1)]
        return PolyMap2.from_terms(self.K, {(1, 1, 0): a, (2, 0, 1): b, (1, 0, 2): self.c, (2, 2, 0): self.c})

    def __getitem__(self, n):
        return self.germ(n)

    def linear_arrays(self, n: int) -> np.ndarray:
        return np.array([self.germ(i).linear_array() for i in range(n)])


# train 0 certified: its two prefix steps already give |b/a|^2 >= 1/D
FOUR_TRAINS = [(2, False), (4, True), (7, False), (12, True), (25, False)]

"""Log-domain magnitudes.

Products of hundreds of contraction factors, and thresholds such as
``D**(-k**j)``, leave the double range quickly.  A :class:`LogMag` keeps the
natural log of a magnitude plus an explicit zero flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, order=False)
class LogMag:
    value: float = 0.0
    zero: bool = False

    @classmethod
    def of(cls, x) -> "LogMag":
        a = abs(x)
        if a == 0:
            return cls(-math.inf, True)
        return cls(math.log(a))

    @classmethod
    def power(cls, base: float, exponent: float) -> "LogMag":
        """``base**exponent`` without evaluating it (base > 0)."""
        return cls(exponent * math.log(base))

    def __mul__(self, other: "LogMag") -> "LogMag":
        if self.zero or other.zero:
            return ZERO
        return LogMag(self.value + other.value)

    def __truediv__(self, other: "LogMag") -> "LogMag":
        if other.zero:
            raise ZeroDivisionError("division by a zero magnitude")
        if self.zero:
            return ZERO
        return LogMag(self.value - other.value)

    def __pow__(self, e: float) -> "LogMag":
        if self.zero:
            if e > 0:
                return ZERO
            raise ZeroDivisionError("non-positive power of zero")
        return LogMag(self.value * e)

    def log(self) -> float:
        return -math.inf if self.zero else self.value

    def log_base(self, base: float) -> float:
        """Logarithm in an arbitrary base, e.g. base 1/D."""
        return self.log() / math.log(base)

    def __float__(self) -> float:
        if self.zero:
            return 0.0
        try:
            return math.exp(self.value)
        except OverflowError:
            return math.inf

    def __lt__(self, other: "LogMag") -> bool:
        return self.log() < other.log()

    def __le__(self, other: "LogMag") -> bool:
        return self.log() <= other.log()

    def __gt__(self, other: "LogMag") -> bool:
        return self.log() > other.log()

    def __ge__(self, other: "LogMag") -> bool:
        return self.log() >= other.log()


ZERO = LogMag(-math.inf, True)
ONE = LogMag(0.0)


def logabs(x) -> np.ndarray:
    """Elementwise log|x| with -inf for zeros (no warnings)."""
    a = np.abs(np.asarray(x))
    out = np.full(a.shape, -np.inf)
    np.log(a, out=out, where=a > 0)
    return out


def prefix_logs(steps) -> np.ndarray:
    """Prefix sums S with S[n] = sum(steps[:n]); products a_{n,m} become S[n] - S[m]."""
    steps = np.asarray(steps, dtype=float)
    out = np.zeros(len(steps) + 1)
    np.cumsum(steps, out=out[1:])
    return out


def logsumexp_complex(logmag, phase) -> tuple[float, complex]:
    """Sum of ``exp(logmag) * phase`` returned as (log-scale, unit-scaled sum)."""
    logmag = np.asarray(logmag, dtype=float)
    if logmag.size == 0 or np.all(np.isneginf(logmag)):
        return -math.inf, 0j
    top = np.max(logmag)
    s = np.sum(np.exp(logmag - top) * np.asarray(phase))
    return float(top), complex(s)

"""Non-autonomous attracting basins in C^2: train partitions, triangular normal forms and limit maps."""

from .errors import (
    ConfigError,
    ContractError,
    DegeneracyError,
    DomainError,
    FrameError,
    InvariantError,
    SingularityError,
    UndecidedError,
)
from .jet_core import PolyMap2, compose, invert_formal
from .sequence_gen import AttractionBounds, MapSequence, SequenceSpec

__version__ = "0.1.0"

__all__ = [
    "AttractionBounds",
    "ConfigError",
    "ContractError",
    "DegeneracyError",
    "DomainError",
    "FrameError",
    "InvariantError",
    "MapSequence",
    "PolyMap2",
    "SequenceSpec",
    "SingularityError",
    "UndecidedError",
    "compose",
    "invert_formal",
]

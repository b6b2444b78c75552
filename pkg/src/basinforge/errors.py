"""Exception hierarchy shared by all modules."""


class BasinForgeError(Exception):
    """Base class for library errors."""


class ContractError(BasinForgeError):
    """A caller violated a documented precondition (e.g. cutoff mismatch)."""


class DomainError(BasinForgeError):
    """Input outside the mathematical domain of an operation."""


class SingularityError(BasinForgeError):
    """A linear part is (numerically) singular."""


class DegeneracyError(BasinForgeError):
    """Eigenvalues or divisors too close to resonance to proceed."""


class FrameError(BasinForgeError):
    """A unitary frame lost unitarity beyond tolerance."""


class ConfigError(BasinForgeError):
    """Invalid run configuration or violated parameter inequality."""


class InvariantError(BasinForgeError):
    """An internal invariant failed; indicates a bug rather than bad input."""


class UndecidedError(BasinForgeError):
    """A numerical procedure could not reach a verdict within its budget."""

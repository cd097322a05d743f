"""Exception types shared across the package."""

from __future__ import annotations


class DimensionError(ValueError):
    """Operator or state shapes are incompatible."""


class ContractViolation(ValueError):
    """An input breaks a documented precondition (hermiticity, trace, ...)."""


class CompletenessError(ContractViolation):
    """A Kraus family or walk kernel fails its completeness relation."""


class DegenerateStepError(RuntimeError):
    """All branch probabilities of a sampling step are numerically null."""


class CapacityError(ValueError):
    """A toy-Fock request exceeds the supported register size."""


class PaddingError(ValueError):
    """A lattice window is too small for the requested operation."""


class StepSizeError(ValueError):
    """A time step violates a stability constraint (CFL, stiffness)."""


class CollapseError(RuntimeError):
    """A trajectory's state trace collapsed below the recoverable threshold."""


class ConfigError(ValueError):
    """An experiment configuration is malformed; carries a field path."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.detail = message

"""Exception hierarchy shared by all slicetl modules."""


class SliceTlError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigurationError(SliceTlError):
    """Invalid scenario or experiment configuration."""

    exit_code = 2


class DimensionError(SliceTlError):
    """Mismatched vector/matrix dimensions."""

    exit_code = 3


class DomainError(SliceTlError):
    """Argument outside its mathematical domain."""

    exit_code = 4


class ActionError(SliceTlError):
    """Resource-partitioning action violates the simplex constraint."""

    exit_code = 5


class NumericError(SliceTlError):
    """Non-finite value encountered during numeric computation."""

    exit_code = 6


class ContractViolationError(SliceTlError):
    """Internal API contract broken, e.g. a stale backprop cache."""

    exit_code = 7


class SingularityError(SliceTlError):
    """Singular covariance in a closed-form divergence."""

    exit_code = 8


class EmptySetError(SliceTlError):
    """An operation that requires at least one element received none."""

    exit_code = 9


class IncompatibleArchitectureError(SliceTlError):
    """Network shapes do not match between transfer source and target."""

    exit_code = 10


class DependencyError(SliceTlError):
    """A required input artifact (checkpoint, trace, run) is missing."""

    exit_code = 11

"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: configuration problems exit with 2,
numerical precondition failures with 3.
"""


class FloquetError(Exception):
    """Base class for all errors raised by floquet_bbc."""


class DomainError(FloquetError, ValueError):
    """An argument lies outside the supported domain (axis, index set, ...)."""


class UnsupportedGeometryError(FloquetError, ValueError):
    """The operation is not defined for this boundary type or dimension."""


class PreconditionError(FloquetError):
    """A numerical precondition (unitarity, self-adjointness, loop closure) fails."""

    def __init__(self, message, defect=None):
        super().__init__(message)
        self.defect = defect


class GapViolationError(PreconditionError):
    """A branch cut, band edge or gap function collides with the spectrum."""


class ConfigError(FloquetError):
    """Invalid run configuration or protocol file."""

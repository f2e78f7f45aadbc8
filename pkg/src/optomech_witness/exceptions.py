"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`WitnessError`, so callers (the CLI in particular) can map them to
exit codes without catching unrelated failures.
"""


class WitnessError(Exception):
    """Base class for all package errors."""


class ConfigError(WitnessError, ValueError):
    """Invalid user configuration or argument."""


class NumericalError(WitnessError, ArithmeticError):
    """A computation could not be carried out to the required accuracy."""


class UnderTruncationError(NumericalError):
    """The Fock-space cutoff is too small for the requested state or operator."""

    def __init__(self, message, cutoff=None, point=None):
        super().__init__(message)
        self.cutoff = cutoff
        self.point = point


class InconsistentProbabilitiesError(NumericalError):
    """A set of probabilities violates a consistency relation beyond tolerance."""


class CalibrationDegenerateError(NumericalError):
    """A calibration ratio has a zero (or non-finite) numerator or denominator."""


class NoViolationError(WitnessError):
    """The witness is not violated, so no finite run budget exists."""

"""Exception taxonomy shared by all mopair modules.

CLI exit-code mapping: ConfigError -> 2, ConvergenceError -> 3,
InvalidDataError (and file-level data problems) -> 4.
"""


class MopairError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(MopairError):
    """Operator/state dimensions are inconsistent or too small."""


class TruncationError(MopairError):
    """Requested Fock truncation leaves too much tail weight."""


class InvalidParameterError(MopairError):
    """A physical parameter is outside its admissible range."""


class IntegratorAccuracyError(MopairError):
    """Time step too coarse: trajectory failed an accuracy diagnostic."""


class InvalidRangeError(MopairError):
    """A time/delay grid does not cover the requested evaluation range."""


class DegenerateConditionError(MopairError):
    """Jump conditioning applied to a state with (numerically) zero weight."""


class InvalidDataError(MopairError):
    """Input data is empty, malformed, or violates a precondition."""


class ConvergenceError(MopairError):
    """Iterative fit failed to converge; carries the best report so far."""

    def __init__(self, message, best_report=None):
        super().__init__(message)
        self.best_report = best_report


class SingularCalibrationError(MopairError):
    """Gain calibration at the reflection-dip singularity (kappa_e == kappa_i)."""


class DegenerateNormalizationError(MopairError):
    """Normalized correlation requested with a zero denominator."""


class InvalidDomainError(MopairError):
    """Input outside the mathematical domain of the operation."""


class ConfigError(MopairError):
    """Configuration file is invalid (schema, unknown keys, bad include)."""

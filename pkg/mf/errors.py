"""Exception hierarchy shared by the model, calibration and hedging code."""


class MfError(Exception):
    """Base class for all library errors."""


class MarketDataError(MfError, ValueError):
    """Malformed or inconsistent market inputs."""


class OutOfRangeError(MarketDataError):
    """Query outside the data an interpolator was built from."""


class NoSolutionError(MfError):
    """A bracketed root search found no admissible solution."""


class MappingError(MfError):
    """Lattice construction violated one of its invariants."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class CalibrationWarning(UserWarning):
    """Calibration returned its best point without meeting the stopping rule."""

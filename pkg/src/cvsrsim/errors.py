"""Exception types, grouped by failure class so the CLI can map exit codes."""


class CvsrSimError(Exception):
    """Base class for all package errors."""


class UsageError(CvsrSimError):
    """An operation was applied to the wrong kind of object."""


class NetworkError(CvsrSimError):
    """A network could not be constructed as requested."""


class ConfigError(CvsrSimError):
    """Configuration text is malformed or semantically invalid.

    `location` carries "section.key" (or a line reference) when known.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class SolverError(CvsrSimError):
    """A time step could not be completed."""

    def __init__(self, message, time=None, iterations=None, residual=None):
        self.time = time
        self.iterations = iterations
        self.residual = residual
        parts = [message]
        if time is not None:
            parts.append(f"t={time:.9g} s")
        if iterations is not None:
            parts.append(f"iterations={iterations}")
        if residual is not None:
            parts.append(f"residual={residual:.3e}")
        super().__init__("; ".join(parts))


class NumericalError(CvsrSimError):
    """A numerical reduction failed (singular or ill-posed system)."""


class CalibrationError(CvsrSimError):
    """Calibration target unreachable within the search bracket."""

    def __init__(self, message, bracket=None, values=None):
        self.bracket = bracket
        self.values = values
        if bracket is not None:
            message = f"{message} (bracket {bracket}, endpoint values {values})"
        super().__init__(message)


class TuningError(CvsrSimError):
    """Controller tuning failed to find a usable ultimate point."""

    def __init__(self, message, last_stable_kp=None):
        self.last_stable_kp = last_stable_kp
        if last_stable_kp is not None:
            message = f"{message} (last stable kp={last_stable_kp:.6g})"
        super().__init__(message)


class ReportingError(CvsrSimError):
    """Analysis or reporting could not be produced from the given data."""

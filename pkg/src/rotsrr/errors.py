"""Exception types shared across the package."""


class DegenerateGeometryError(RuntimeError):
    """A view's sampling grid has no overlap with the volume it samples."""


class RegistrationError(RuntimeError):
    """Rigid registration cannot proceed (flat images or empty overlap)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SolverError(RuntimeError):
    """The iterative solver diverged; carries the last iterate."""

    def __init__(self, message, last_iterate=None, residuals=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residuals = residuals


class TrainingDivergedError(RuntimeError):
    """The training loss became non-finite; carries a diagnostic snapshot."""

    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot or {}


class NiftiParseError(ValueError):
    """Malformed NIfTI-1 input; the message names the offending field."""


class ConfigError(ValueError):
    """Malformed job configuration document."""


class UndefinedMetricError(ValueError):
    """The requested metric is undefined for the given inputs."""

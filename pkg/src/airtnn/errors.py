"""Exception types shared across the package."""


class GraphGenerationError(RuntimeError):
    """Random graph generation exhausted its retry budget."""


class PowerIterationError(RuntimeError):
    """Spectral-norm power iteration failed to converge."""


class FormatError(ValueError):
    """A serialized file is malformed.

    Carries the offending line number when one is known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DatasetError(ValueError):
    """Dataset configuration cannot be satisfied."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""

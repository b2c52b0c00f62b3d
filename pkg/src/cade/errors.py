"""Exception types shared across the package.

The CLI maps these onto process exit codes (see ``cade.cli``).
"""


class CadeError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(CadeError, ValueError):
    """Invalid configuration value; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class SizingError(CadeError, ValueError):
    """Population or vector dimensions are inconsistent."""


class DomainError(CadeError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class NumericError(CadeError, ArithmeticError):
    """A computation produced a non-finite value."""


class FitnessEvaluationError(CadeError, RuntimeError):
    """Fitness evaluation failed for one individual."""

    def __init__(self, index, cause):
        super().__init__(f"fitness evaluation failed for individual {index}: {cause!r}")
        self.index = index
        self.cause = cause


class TrainingDivergedError(NumericError):
    def __init__(self, epoch):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


class CorruptFileError(CadeError, ValueError):
    """A checkpoint, population, or dataset file is truncated or malformed."""


class SpecMismatchError(CadeError, ValueError):
    """A stored genome was produced for a different network spec."""


class MissingInputError(CadeError, FileNotFoundError):
    """An upstream artifact required by a command does not exist."""

"""
Exception hierarchy shared by every package.

Each error also derives from the closest builtin so callers that only know
about ``ValueError``/``LookupError`` keep working.
"""
from typing import Optional


class EditingError(Exception):
    """Base class for all errors raised by the editing engine."""


class DimensionError(EditingError, ValueError):
    """Tensor shapes do not agree."""


class ContractError(EditingError, ValueError):
    """A precondition of an operation was violated."""


class NumericError(EditingError, ArithmeticError):
    """NaN or Inf encountered where finite values are required."""


class RangeError(EditingError, IndexError):
    """An index or timestep is outside its valid range."""


class LookupFailure(EditingError, LookupError):
    """A named entity (e.g. an attention layer id) does not exist."""


class CatalogError(EditingError, KeyError):
    """An edit code or parameter is not part of the task catalog."""

    def __str__(self):
        return Exception.__str__(self)


class IntegrityError(EditingError):
    """Stored or supplied data is inconsistent (gaps, misaligned grids, missing slots)."""


class ConfigurationError(EditingError, ValueError):
    """A configuration value is invalid or inconsistent."""


class SpecError(EditingError, ValueError):
    """A synthetic scene specification cannot be rendered."""


class TrainingError(EditingError, RuntimeError):
    """Training diverged."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.message = message
        self.step = step

    def __reduce__(self):
        return self.__class__, (self.message, self.step)


class WorkerError(EditingError, RuntimeError):
    """A frame worker failed."""

    def __init__(self, message: str, frame_index: Optional[int] = None):
        super().__init__(message if frame_index is None else f"frame {frame_index}: {message}")
        self.message = message
        self.frame_index = frame_index

    def __reduce__(self):
        return self.__class__, (self.message, self.frame_index)

"""Exception types raised across the package."""


class TardError(Exception):
    """Base class for all package errors."""


class ConfigError(TardError, ValueError):
    """Shapes, dimensions or configuration values are inconsistent."""


class DegenerateBatchError(TardError, ValueError):
    """A batch statistic was requested from fewer than two rows."""


class UsageError(TardError, RuntimeError):
    """An operation was called out of order or without a prerequisite."""


class DivergenceError(TardError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss!r})")
        self.epoch = epoch
        self.loss = loss


class FrozenModelError(TardError, RuntimeError):
    """The frozen backbone changed during adaptive-module training."""


class DataError(TardError, ValueError):
    """Input data does not match its declared schema."""


class BundleFormatError(TardError, ValueError):
    """A model bundle file is malformed."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class MethodRunError(TardError):
    """A component failed while running one method on one fault case."""

    def __init__(self, case: str, method: str, cause: Exception):
        super().__init__(f"[{case}/{method}] {type(cause).__name__}: {cause}")
        self.case = case
        self.method = method

"""Exception types shared across the package."""


class StockBenchError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(StockBenchError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(StockBenchError, ValueError):
    """An API precondition was violated by the caller."""


class DegenerateMaskError(StockBenchError, ValueError):
    """An attention query row has no allowed position to attend to."""


class DataError(StockBenchError, ValueError):
    """Input data failed validation (malformed CSV, bad values, ordering)."""


class ConfigError(StockBenchError, ValueError):
    """An experiment config file is malformed or holds unknown keys."""


class TrainingDivergedError(StockBenchError, RuntimeError):
    """Training produced a non-finite loss; carries diagnostics in the message."""


class ConvergenceError(StockBenchError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

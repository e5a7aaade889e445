#!/usr/bin/env python3
"""
Exception hierarchy for the Topic/Expectation Pipeline

Every pipeline error carries the process exit code the entrypoint returns
when the error escapes a command.
"""

from datetime import date
from typing import Optional, Sequence


class PipelineError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


class ConfigurationError(PipelineError):
    """Invalid configuration value, range or combination."""

    exit_code = 2


class UsageError(PipelineError):
    """Missing or inconsistent command-line input."""

    exit_code = 2


class ArtifactLockError(PipelineError):
    """Another command holds the output directory lock."""

    exit_code = 2


class DataError(PipelineError):
    """Input data that cannot be used as given."""

    exit_code = 3


class BarParseError(DataError):
    """A bar record is malformed or violates a price/volume invariant."""

    def __init__(self, row: int, reason: str):
        self.row = row
        self.reason = reason
        super().__init__(f"Row {row}: {reason}")


class BarConflictError(DataError):
    """The same (stock_id, date) appears more than once."""

    def __init__(self, stock_id: str, day: date, rows: Sequence[int]):
        self.stock_id = stock_id
        self.date = day
        self.rows = tuple(rows)
        row_list = ', '.join(str(r) for r in self.rows)
        super().__init__(f"Duplicate bar for ({stock_id}, {day}) at rows {row_list}")


class EmptyPanelError(DataError):
    """No stock qualifies for a feature panel."""


class AlignmentError(DataError):
    """Two dated sequences disagree on dates or stocks."""

    def __init__(self, message: str, day: Optional[date] = None):
        self.date = day
        super().__init__(message)


class TrainingDataError(DataError):
    """A panel handed to training cannot be trained on."""


class StaleArtifactError(DataError):
    """An upstream artifact no longer matches its manifest digest."""


class BootstrapError(DataError):
    """The trading simulation cannot open its initial positions."""


class InsufficientDataError(DataError):
    """Too few usable observations to compute a statistic."""


class DivergenceError(PipelineError):
    """Training produced a non-finite loss."""

    exit_code = 4

    def __init__(self, day: Optional[date], value: float):
        self.date = day
        self.value = value
        super().__init__(f"Non-finite loss {value} at {day}")


class DegenerateSimilarityError(ValueError):
    """Tanimoto similarity of two zero vectors (zero denominator)."""


class UndefinedCorrelationError(ValueError):
    """Correlation with a zero-variance vector."""

from __future__ import annotations


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


class PcDagError(Exception):
    """Base class for every error raised by the estimation library."""

    exit_code: int = EXIT_NUMERICAL


class ContractViolation(PcDagError, ValueError):
    """A precondition of an operation was not met by its arguments."""

    exit_code = EXIT_USAGE


class UsageError(PcDagError):
    exit_code = EXIT_USAGE


class InputError(PcDagError):
    """Unreadable or malformed input files."""

    exit_code = EXIT_INPUT


class InvalidCpdagError(PcDagError):
    """No consistent DAG extension could be found."""


class SingularConditioningError(PcDagError):
    pass


class DegenerateScaleError(PcDagError):
    """A robust scale estimate is zero (constant or near-constant sample)."""


class UnsupportedCombinationError(ContractViolation):
    pass


class PositiveDefinitenessError(PcDagError):
    pass


class LossUndefinedError(PcDagError):
    pass


class TuningError(PcDagError):
    """Every fit along a tuning grid failed."""

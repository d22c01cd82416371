"""Exception taxonomy shared by every module.

Exit codes used by the command line front end:
2 config error, 3 input error, 4 numerical or runtime failure.
"""

from __future__ import annotations


class SubstrateError(Exception):
    """Base class for all package errors."""

    exit_code = 4


class ConfigError(SubstrateError):
    """Invalid configuration value or combination."""

    exit_code = 2


class InputError(SubstrateError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class NumericalError(SubstrateError):
    """Numerical routine failed or hit a degenerate instance."""

    exit_code = 4


# -- config ------------------------------------------------------------


class InvalidKError(ConfigError):
    pass


class InvalidAlphaError(ConfigError):
    pass


class InvalidPermCountError(ConfigError):
    pass


class InvalidBootCountError(ConfigError):
    pass


class BasinsOverlapError(ConfigError):
    """Synthetic basin centroids closer than the separation guard."""


class NotCommittedError(ConfigError):
    """Confirmatory harness invoked without the committed flag."""


# -- input -------------------------------------------------------------


class SnapshotFormatError(InputError):
    """Unparseable snapshot row. Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateIdError(SnapshotFormatError):
    pass


class DimensionMismatchError(SnapshotFormatError):
    pass


class NonFiniteValueError(SnapshotFormatError):
    pass


class ZeroVectorError(InputError):
    """Zero embedding vector under a cosine ground metric."""


class UnknownNodeError(InputError):
    pass


class UnknownAtomError(InputError):
    pass


class CostShapeError(InputError):
    """Cost matrix rows/cols do not match the measure supports."""


class DisjointSnapshotsError(InputError):
    """Two snapshots share no node ids."""


# -- numerics ----------------------------------------------------------


class ZeroDistanceError(NumericalError):
    """Curvature requested for a pair at ground distance zero."""


class SupportCapError(NumericalError):
    """Exact transport instance above the configured support cap."""


class MissingCurvatureError(NumericalError):
    """Curvature value needed but absent from the profile."""


class SingleClassError(NumericalError):
    """Rank statistic on labels that are all one class."""


class NoPositivesError(NumericalError):
    """Quantile threshold produced an empty positive set."""


class InsufficientNodesError(NumericalError):
    """Harness sample smaller than the hard floor."""


class SolverError(NumericalError):
    """Linear program terminated without an optimal basis."""


class OperatorProtocolError(NumericalError):
    """External operator subprocess crashed, stalled, or spoke garbage."""

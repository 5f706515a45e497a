"""Exception taxonomy shared by all modules.

The CLI maps these onto its exit-code contract: configuration problems
exit 1, negative construction/certification outcomes exit 2, numeric or
oracle failures exit 3.
"""


class TractdimError(Exception):
    """Base class for all package errors."""


class ConfigError(TractdimError):
    """Invalid family definition or run configuration."""


class DomainError(TractdimError):
    """Evaluation requested outside the domain of a map or branch."""


class GeometryError(TractdimError):
    """Inconsistent geometric parameters (squares, disks, margins)."""


class ConstructionError(TractdimError):
    """An invariant of the cell construction was violated."""


class NumericError(TractdimError):
    """Iteration failed to converge or an oracle disagreed."""

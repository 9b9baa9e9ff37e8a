"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration/format/contract problems
exit with 1, runtime failures (training divergence, degenerate batches,
numeric domain violations) exit with 2.
"""


class DaacError(Exception):
    """Base class for all package errors."""


class DimensionError(DaacError):
    """Operand shapes are incompatible for the requested operation."""


class DomainError(DaacError):
    """Numeric domain violation: log/division out of range, NaN/Inf produced."""


class ContractError(DaacError):
    """An API precondition was violated by the caller."""


class ConfigError(DaacError):
    """Invalid configuration value or combination."""


class FormatError(DaacError):
    """On-disk artifact (corpus, checkpoint, config) fails validation."""


class DegenerateBatchError(DaacError):
    """A contrastive batch has no valid anchor/positive/negative structure."""


class TrainingError(DaacError):
    """Training diverged or failed mid-run."""


class UndefinedMetricError(DaacError):
    """A requested metric is undefined for the given inputs."""

"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration/validation problems
(everything except DivergenceError) exit 1, runtime failures exit 2.
"""


class AdepError(Exception):
    """Base class for all package errors."""


class DimensionError(AdepError):
    """Shape mismatch between arrays, layers, or checkpoints."""


class DegenerateBatchError(AdepError):
    """Batch too small for the requested operation (BatchNorm needs >= 2 rows)."""


class MissingCacheError(AdepError):
    """backward() called without a matching train-mode forward()."""


class LabelError(AdepError):
    """Class label outside [0, C)."""


class MissingStatisticsError(AdepError):
    """Moment-matched fake sampling requested before observing a real batch."""


class GradCheckError(AdepError):
    """Non-finite gradient encountered during a gradient check."""

    def __init__(self, message, param_name=None):
        super().__init__(message)
        self.param_name = param_name


class ParseError(AdepError):
    """Malformed dataset file; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FeatureIndexError(AdepError):
    """Feature index outside its declared modality width."""


class UnknownDrugError(AdepError):
    """Drug id referenced but not present in the feature table."""


class ConfigError(AdepError):
    """Invalid or inconsistent configuration."""


class CheckpointError(AdepError):
    """Checkpoint manifest/blob inconsistent or incompatible with the request."""


class DivergenceError(AdepError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None, batch=None):
        if epoch is not None:
            message = f"{message} (epoch {epoch}, batch {batch})"
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch

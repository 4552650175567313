"""Exception types raised across the pipeline."""


class WidsError(Exception):
    """Base class for all package errors."""


class IngestError(WidsError):
    pass


class CleanError(WidsError):
    pass


class TimestampError(WidsError):
    pass


class SpecError(WidsError):
    pass


class SelectionError(WidsError):
    pass


class SmoteError(WidsError):
    pass


class SplitError(WidsError):
    pass


class FoldError(WidsError):
    pass


class TransformError(WidsError):
    pass


class PcaError(WidsError):
    pass


class TrainError(WidsError):
    pass


class PredictError(WidsError):
    pass


class SearchError(WidsError):
    pass


class MetricError(WidsError):
    pass


class CorruptBundle(WidsError):
    pass


class VersionError(WidsError):
    pass


class ConfigError(WidsError):
    pass

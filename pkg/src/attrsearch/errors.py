"""Exception types shared across the package."""


class AttrSearchError(Exception):
    """Base class for all package errors."""


class ConfigError(AttrSearchError):
    """Invalid configuration (bad dimensions, negative rates, ...)."""


class SamplingError(AttrSearchError):
    """Requested sample cannot be drawn from the dataset."""


class DatasetParseError(AttrSearchError):
    """Dataset or checkpoint file is malformed."""


class TrainingDivergenceError(AttrSearchError):
    """Training produced a non-finite loss."""

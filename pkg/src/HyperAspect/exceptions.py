class HyperAspectError(Exception):
    """Base class for every error raised by the package."""


class DomainError(HyperAspectError, ValueError):
    """A value left the domain of a geometric or differentiable primitive."""


class GraphError(HyperAspectError):
    """The autodiff tape was used incorrectly."""


class DataError(HyperAspectError):
    """An input file or in-memory dataset is malformed or inconsistent."""


class ConfigError(HyperAspectError):
    """A configuration file or value is invalid."""


class TrainingError(HyperAspectError):
    """Training produced a non-finite loss term."""

"""Exception hierarchy shared across the package."""


class BanditError(Exception):
    """Base class for all errors raised by vclbandit."""


class DimensionError(BanditError, ValueError):
    """A vector or matrix has the wrong shape, or a dimension is invalid."""


class ProtocolError(BanditError, RuntimeError):
    """The select/update alternation was violated or an arm index is invalid."""


class ConstructionError(BanditError, ValueError):
    """An adversarial instance violates its norm or size preconditions."""


class ConfigError(BanditError, ValueError):
    """An experiment configuration is malformed."""

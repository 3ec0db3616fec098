"""Exception types shared across the toolkit."""


class QkdError(Exception):
    """Base class for toolkit errors."""


class ParameterError(QkdError, ValueError):
    """A parameter is outside its documented domain."""


class DeadLinkError(QkdError):
    """The link can never produce a click (p_sig + p_d = 0)."""


class EstimationError(QkdError):
    """A statistical estimate cannot be formed (e.g. zero single-photon yield)."""


class ConfigError(QkdError, ValueError):
    """A run configuration is malformed or inconsistent."""

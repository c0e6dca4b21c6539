"""Exception types shared across the package."""


class DomainError(ValueError):
    """A numeric argument lies outside an operation's domain."""


class ConfigError(ValueError):
    """Invalid configuration or mismatched network/variant setup."""


class UsageError(RuntimeError):
    """An API was called in a state where it cannot do anything useful."""


class CheckpointError(ValueError):
    """A checkpoint file cannot be loaded."""

"""Exception hierarchy; the CLI maps each family to its own exit code."""


class ErwError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ErwError, ValueError):
    """Malformed, unknown, missing or out-of-range configuration."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class DomainError(ErwError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class StateError(ErwError, RuntimeError):
    """An operation was applied to a state it does not accept."""


class ResourceLimitError(ErwError):
    """A request exceeds a hard enumeration or memory cap."""

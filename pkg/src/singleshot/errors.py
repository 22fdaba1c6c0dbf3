"""Exception types shared across the engine."""


class ContractError(ValueError):
    """An input violates a documented precondition or invariant."""


class InfeasibleError(ValueError):
    """A requested transformation cannot be realised (e.g. dimension condition fails)."""


class SizeCapError(RuntimeError):
    """A shell or matrix would exceed the configured size cap."""


class ConfigError(ContractError):
    """A model configuration file cannot be parsed or fails validation."""

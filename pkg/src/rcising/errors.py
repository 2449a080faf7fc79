"""Exception types shared by all modules."""


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


class ConfigError(ValueError):
    """Invalid configuration (coupling table, config file, ...)."""


class ResourceError(RuntimeError):
    """Requested computation exceeds the enumeration budget."""

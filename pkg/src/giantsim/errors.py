"""Exception hierarchy; the CLI maps each family to an exit code."""


class ConfigError(ValueError):
    """Invalid input or configuration (exit code 2)."""


class NumericError(RuntimeError):
    """A numerical procedure failed to converge or went out of bounds (exit code 3)."""


class CapacityError(RuntimeError):
    """Problem too large for the dense engines (exit code 4)."""

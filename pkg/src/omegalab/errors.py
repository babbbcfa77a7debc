"""Error types shared across the package."""


class NumericError(RuntimeError):
    """A numerical procedure failed (non-convergence, degeneracy, overflow)."""


class ConfigError(ValueError):
    """A run configuration could not be parsed or validated."""

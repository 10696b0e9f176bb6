"""Exception types shared across the package."""


class NumericalGuardError(ValueError):
    """A resolution or truncation guard was violated (CLI exit code 3)."""

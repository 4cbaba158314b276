"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A scenario or model parameter violates a documented invariant."""


class DomainError(ValueError):
    """A function argument lies outside the function's mathematical domain."""


class InsufficientDataError(ValueError):
    """Too few usable points to fit a tail exponent.

    The number of points that survived the fit window is kept on
    ``usable`` so callers can report it.
    """

    def __init__(self, usable: int, required: int = 4):
        super().__init__(f"only {usable} usable tail points, need at least {required}")
        self.usable = usable
        self.required = required


class SchemaError(ValueError):
    """A CSV input is missing a required column."""

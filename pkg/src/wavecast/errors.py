"""Exception types shared across the package."""


class UsageError(ValueError):
    """Caller supplied invalid parameters (bad dtype, qbits out of range, ...)."""


class DataError(ValueError):
    """Input data is malformed (size mismatch, bad container magic, ...)."""

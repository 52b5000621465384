"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input data (model files, operators, sites) failed validation."""


class ResourceCapError(RuntimeError):
    """A dense computation would exceed the configured size cap."""

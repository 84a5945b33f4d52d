"""Exception types shared across the package.

The CLI maps ValidationError to exit code 2 and NumericalError to exit
code 3; everything else is a plain crash.
"""


class ValidationError(ValueError):
    """Invalid configuration, arguments, or input data."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (divergence, undefined quantity, ...)."""

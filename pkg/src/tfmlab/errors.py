"""Exception hierarchy shared across the package.

Two branches matter to the CLI exit-code contract: bad inputs (exit 2) and
numerical/statistical failures (exit 3).
"""


class TfmLabError(Exception):
    """Base class for all package-specific errors."""


class InputError(TfmLabError):
    """Invalid user-supplied input: files, configs, malformed rows."""


class NumericalError(TfmLabError):
    """A computation could not be carried out: no solution, singular system."""

"""Exception types shared across the package.

The CLI maps these onto process exit codes: usage problems exit 1,
DataError exits 2, NumericError exits 3.
"""


class DataError(ValueError):
    """Malformed or inconsistent input data (files, labels, shapes)."""


class NumericError(RuntimeError):
    """A non-finite value appeared where the pipeline requires finite data."""

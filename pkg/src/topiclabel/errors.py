"""Shared exception types.

The CLI maps these onto exit codes: usage errors -> 1, DataError -> 2,
NumericError -> 3.
"""


class DataError(Exception):
    """Malformed or inconsistent input data (bad record, bad file format)."""


class NumericError(Exception):
    """Numerical failure: NaN/Inf appeared where finite values are required."""

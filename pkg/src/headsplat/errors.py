"""Exception taxonomy mapped to CLI exit codes."""

from __future__ import annotations


class HeadsplatError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class UsageError(HeadsplatError):
    """Bad invocation: unknown flags, malformed overrides, missing arguments."""

    exit_code = 1


class DataError(HeadsplatError):
    """Invalid input data: parse failures, dimension mismatches, bad files."""

    exit_code = 2


class NumericalError(HeadsplatError):
    """Non-finite losses or other numerical breakdowns during optimization."""

    exit_code = 3

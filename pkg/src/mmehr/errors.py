"""Shared exception hierarchy.

The CLI maps these onto exit codes: ConfigError -> 2, DataError and
StaleInput -> 3, ExternalFailure -> 4.
"""

from __future__ import annotations


class MmehrError(Exception):
    pass


class ConfigError(MmehrError):
    """Invalid or incomplete run configuration; carries the dotted field path."""

    def __init__(self, field_path: str, message: str = ""):
        self.field_path = field_path
        super().__init__(f"{field_path}: {message}" if message else field_path)


class DataError(MmehrError):
    """Malformed or inconsistent input data."""


class ExternalFailure(MmehrError):
    """An external encoder adapter or model endpoint failed."""


class StaleInput(MmehrError):
    """A stage input no longer matches the checksum its producer recorded."""

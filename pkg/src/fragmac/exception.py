from __future__ import annotations


class FragmacException(Exception):
    """Base exception class for fragmac."""

    pass


class ConfigError(FragmacException):
    """Scenario configuration error."""

    pass


class ContractViolation(FragmacException):
    """A simulator contract was broken; the run cannot continue."""

    pass

"""
Error types shared by the library and the command-line front end.
"""


class GofError(ValueError):
    """Base class for errors raised by conclique_gof."""

    exit_code = 1


class ConfigError(GofError):
    """Invalid configuration: bad template, out-of-range parameter, missing seed."""

    exit_code = 2


class DataError(GofError):
    """Input data that cannot be analysed (unparseable, non-finite, degenerate)."""

    exit_code = 3


class NumericalError(GofError):
    """A numerical routine failed (factorization, optimizer, too many dropped replicates)."""

    exit_code = 4

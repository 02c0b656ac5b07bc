"""Exception hierarchy.

Each class carries the process exit code the CLI maps it to.
"""


class WvcalError(Exception):
    exit_code = 1


class DomainError(WvcalError, ValueError):
    """A value lies outside the parameter space or a function's domain."""

    exit_code = 1


class ScaleError(WvcalError, ValueError):
    """A requested scale level cannot be computed for the signal length."""

    exit_code = 3


class RankError(WvcalError, ValueError):
    """Normal equations or sandwich bread are singular."""

    exit_code = 3


class IdentifiabilityError(WvcalError):
    exit_code = 3


class UnsupportedProcessError(WvcalError, ValueError):
    exit_code = 1


class InputFormatError(WvcalError, ValueError):
    exit_code = 4

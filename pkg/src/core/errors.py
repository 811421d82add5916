# core/errors.py


class DialopreError(Exception):
    """Base error, carries the process exit code the CLI reports"""

    exit_code = 1


class UsageError(DialopreError, ValueError):
    """Bad flags, unknown config keys, busy output directory"""

    exit_code = 1


class DataError(DialopreError, ValueError):
    """Missing or malformed input data, or an operation's precondition on it"""

    exit_code = 2


class NumericError(DialopreError, ArithmeticError):
    """Non-finite loss, gradient or bound"""

    exit_code = 3

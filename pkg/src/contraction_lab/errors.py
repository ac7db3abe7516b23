"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front-end:
2 for validation problems, 3 for numerical failures. IO problems surface as
plain :class:`OSError` and map to 4.
"""


class ContractionLabError(Exception):
    exit_code = 2


class ShapeError(ContractionLabError, ValueError):
    pass


class DomainError(ContractionLabError, ValueError):
    pass


class OrderError(ContractionLabError, ValueError):
    """A Loewner-order precondition does not hold."""


class RangeError(ContractionLabError, IndexError):
    pass


class ParseError(ContractionLabError, ValueError):
    pass


class MissingData(ContractionLabError):
    pass


class ChainTooShort(ContractionLabError):
    pass


class ThetaTooLarge(ContractionLabError):
    pass


class Unreachable(ContractionLabError):
    pass


class NumericalFailure(ContractionLabError, ArithmeticError):
    exit_code = 3


class ConstructionError(ContractionLabError):
    exit_code = 3


class NoGap(ContractionLabError):
    exit_code = 3


EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ContractionLabError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, (ValueError, KeyError, TypeError)):
        return EXIT_VALIDATION
    return EXIT_NUMERICAL

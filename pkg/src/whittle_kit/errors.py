"""Exception hierarchy shared by every module of the package."""


class WhittleKitError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for this error class."""

    exit_code = 1
    # unclassified failures (unreadable files, bad JSON) also exit with 1


class DimensionMismatch(WhittleKitError, ValueError):
    exit_code = 14  # 2 is taken by command-line usage errors


class NotStochastic(WhittleKitError, ValueError):
    exit_code = 3


class SingularSystem(WhittleKitError, ArithmeticError):
    exit_code = 4


class NotUnichain(WhittleKitError, ValueError):
    exit_code = 5


class NoCrossing(WhittleKitError, RuntimeError):
    exit_code = 6


class IterationLimit(WhittleKitError, RuntimeError):
    exit_code = 7


class DegenerateUpdate(WhittleKitError, ArithmeticError):
    exit_code = 8


class TooLarge(WhittleKitError, ValueError):
    exit_code = 9


class NotFound(WhittleKitError, LookupError):
    exit_code = 10


class InsufficientSamples(WhittleKitError, ValueError):
    exit_code = 11


class StructureMismatch(WhittleKitError, ValueError):
    exit_code = 12


class ConfigError(WhittleKitError, ValueError):
    exit_code = 13

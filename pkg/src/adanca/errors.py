"""Exception hierarchy shared by every subpackage."""


class AdaNCAError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(AdaNCAError, ValueError):
    pass


class ReceptiveFieldError(ShapeError):
    """Dilated kernel footprint too large for the token grid."""


class ConfigError(AdaNCAError, ValueError):
    pass


class RangeError(AdaNCAError, IndexError):
    pass


class ContractError(AdaNCAError, RuntimeError):
    """A caller broke an operation's precondition (wrong mode, non-scalar loss, ...)."""


class NumericError(AdaNCAError, ArithmeticError):
    pass


class InfeasibleError(AdaNCAError, ValueError):
    pass


class SizeError(AdaNCAError, ValueError):
    """Enumeration would exceed the configured combinatorial budget."""


class InputError(AdaNCAError, ValueError):
    pass


class FormatError(AdaNCAError, ValueError):
    """Malformed or inconsistent container / config file."""


class CorruptFileError(FormatError):
    pass

"""Exception hierarchy shared by the library and the command line."""


class RMDPError(Exception):
    """Base class for every error raised by the toolkit."""


class InvalidInputError(RMDPError, ValueError):
    """Input rejected: dimension mismatch, invalid policy, out-of-range parameter."""


class SizeGuardError(RMDPError):
    """An enumeration would exceed its configured guard."""


class PreconditionError(RMDPError, ValueError):
    """An operation precondition does not hold (e.g. negative costs)."""


class NumericalError(RMDPError, ArithmeticError):
    """A numerical routine could not meet its accuracy contract."""

"""Exception types raised by capauct."""


class CapauctError(Exception):
    """Base class for all library errors."""


class ZeroDensity(CapauctError, ValueError):
    pass


class OutOfSupport(CapauctError, ValueError):
    pass


class NotRegular(CapauctError, ValueError):
    pass


class ReportNotOnGrid(CapauctError, KeyError):
    pass


class LengthMismatch(CapauctError, ValueError):
    pass


class NumericalBreakdown(CapauctError, ArithmeticError):
    pass


class TooLarge(CapauctError, ValueError):
    pass


class NonMonotoneAllocation(CapauctError, ValueError):
    pass


class ZeroAllocation(CapauctError, ValueError):
    pass


class AtomicDistribution(CapauctError, ValueError):
    pass


class UnboundedCapacity(CapauctError, ValueError):
    pass


class EmptyProfile(CapauctError, ValueError):
    pass

"""Exception hierarchy shared by every module."""


class MBPError(Exception):
    """Base class for all errors raised by mbplab."""


class InvalidLaw(MBPError, ValueError):
    """Offspring intensities violate the branching-law invariants."""


class DomainError(MBPError, ValueError):
    """Argument outside the domain of a generating function."""


class ConvergenceFailure(MBPError):
    """A root finder or fixed-point iteration exhausted its budget."""


class ToleranceNotMet(MBPError):
    """Two independent numerical routes disagree beyond tolerance."""


class NotApplicable(MBPError):
    """Quantity is undefined for the criticality class of the law."""


class SingularPoint(MBPError, ValueError):
    """Evaluation requested at a removable or genuine singularity."""


class DegenerateCondition(MBPError):
    """Conditioning event has numerically zero probability."""


class InfiniteMoment(MBPError):
    """Requested moment is infinite for this law."""


class RateOverflow(MBPError):
    """Jump-rate table could not be truncated within budget."""


class ConfigError(MBPError, ValueError):
    """Experiment configuration could not be parsed or is out of range."""

"""Exception hierarchy shared by every module."""


class NlcapError(Exception):
    """Base class for all errors raised by the package."""


class NonPositiveProfile(NlcapError):
    pass


class QuadratureFailure(NlcapError):
    pass


class DivergentTail(NlcapError):
    pass


class ExtrapolationDominated(NlcapError):
    pass


class TailVanishes(NlcapError):
    pass


class NonPositiveSample(NlcapError):
    pass


class GeometryMismatch(NlcapError):
    pass


class SingularCellBudget(NlcapError):
    pass


class OutOfRange(NlcapError):
    pass


class BetaOutOfRange(NlcapError):
    pass


class SupportViolation(NlcapError):
    pass


class IndexTooLow(NlcapError):
    pass


class NoConvergence(NlcapError):
    pass


class MaskTouchesBoundary(NlcapError):
    pass


class GeometryViolation(NlcapError):
    pass


class NegativeFunction(NlcapError):
    pass


class ConfigParse(NlcapError):
    pass

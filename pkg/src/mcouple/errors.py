"""Exception hierarchy.

Every error raised on purpose by the library derives from ``McoupleError`` so
callers (and the CLI) can separate validation failures from programming bugs.
"""


class McoupleError(Exception):
    """Base class for all library errors."""


class EmptyInput(McoupleError, ValueError):
    pass


class NonPositiveWeight(McoupleError, ValueError):
    pass


class UnnormalizedWeights(McoupleError, ValueError):
    pass


class OutOfRange(McoupleError, ValueError):
    pass


class InvalidRho(McoupleError, ValueError):
    pass


class UnequalMeans(McoupleError, ValueError):
    pass


class IdenticalMeasures(McoupleError, ValueError):
    pass


class OrderViolation(McoupleError, ValueError):
    pass


class SingleSignChangeViolation(McoupleError, ValueError):
    pass


class MassMismatch(McoupleError, ValueError):
    pass


class NoValidWindow(McoupleError, RuntimeError):
    pass


class FingerprintMismatch(McoupleError, ValueError):
    pass


class KernelBranchViolation(McoupleError, ValueError):
    pass


class SupportViolation(McoupleError, ValueError):
    pass


class SizeLimit(McoupleError, ValueError):
    pass


class NumericalFailure(McoupleError, RuntimeError):
    pass


class UnknownDistribution(McoupleError, ValueError):
    pass


__all__ = [
    "McoupleError",
    "EmptyInput",
    "NonPositiveWeight",
    "UnnormalizedWeights",
    "OutOfRange",
    "InvalidRho",
    "UnequalMeans",
    "IdenticalMeasures",
    "OrderViolation",
    "SingleSignChangeViolation",
    "MassMismatch",
    "NoValidWindow",
    "FingerprintMismatch",
    "KernelBranchViolation",
    "SupportViolation",
    "SizeLimit",
    "NumericalFailure",
    "UnknownDistribution",
]

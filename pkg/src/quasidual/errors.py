"""Exception hierarchy.

Input problems derive from :class:`InputError` (also a ``ValueError``) so the
CLI can map them to exit code 2; solver problems derive from
:class:`SolverError` (exit code 4).
"""


class QuasidualError(Exception):
    pass


class InputError(QuasidualError, ValueError):
    pass


class SolverError(QuasidualError, RuntimeError):
    pass


# probability space / partitions
class NonPositiveProbability(InputError):
    pass


class ProbabilitySumMismatch(InputError):
    pass


class DuplicateLabel(InputError):
    pass


class OverlappingBlocks(InputError):
    pass


class UncoveredIndex(InputError):
    pass


class EmptyBlock(InputError):
    pass


class SpaceMismatch(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class NotMeasurable(InputError):
    pass


class EmptyAtom(InputError):
    pass


# maps
class DomainViolation(InputError):
    pass


class WeightAllZero(InputError):
    pass


class NotGMeasurablePartition(InputError):
    pass


class OrientationError(InputError):
    """Operation requires a quasiconvex (not mirrored) map."""


class NotCashInvariant(InputError):
    pass


class QNullAtom(InputError):
    pass


# oracle
class AtomTooLarge(InputError):
    pass


class EmptyFeasibleGrid(InputError):
    pass


class TooManyAtoms(InputError):
    pass


# solvers
class BracketExhausted(SolverError):
    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class SolverDiverged(SolverError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


# scenario files
class ParseError(InputError):
    pass


class ValidationError(InputError):
    pass

"""Exception hierarchy shared by every stage of the pipeline."""


class RelaxBCError(Exception):
    """Base class for all errors raised by :mod:`relaxbc`."""


class NonCharacteristicViolation(RelaxBCError):
    pass


class OrderingError(RelaxBCError):
    pass


class InvalidRelaxationSpeed(RelaxBCError):
    pass


class SingularEigenbasis(RelaxBCError):
    pass


class InvalidGivenBC(RelaxBCError):
    pass


class DegenerateConstruction(RelaxBCError):
    pass


class InvalidLayerDatum(RelaxBCError):
    pass


class EigenSplitFailure(RelaxBCError):
    pass


class ReductionFailure(RelaxBCError):
    pass


class DomainError(RelaxBCError):
    pass


class NumericsError(RelaxBCError):
    pass


class SymmetrizerUnavailable(RelaxBCError):
    pass


class ConfigError(RelaxBCError):
    pass


class BoundarySolveFailure(RelaxBCError):
    pass


class InconclusiveStudy(RelaxBCError):
    pass

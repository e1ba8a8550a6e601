"""Exception hierarchy for mdlina."""


class MdLinaError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class UsageError(MdLinaError):
    exit_code = 2


class DataError(MdLinaError):
    """Malformed or degenerate input data."""

    exit_code = 2


class ZeroVarianceVariable(DataError):
    def __init__(self, index):
        super().__init__(f"variable {index} has (near) zero variance")
        self.index = index


class EmptyDomain(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class DegenerateReference(MdLinaError):
    """Reference variable is (nearly) uncorrelated with the second variable."""


class UncorrelatedTriple(MdLinaError):
    pass


class InsufficientSamples(MdLinaError):
    pass


class NoClustersFound(MdLinaError):
    pass


class InvalidClusters(DataError):
    pass


class NonConvergence(MdLinaError):
    pass


class RankDeficientLoadings(MdLinaError):
    pass


class RankDeficientH(MdLinaError):
    pass


class AssignmentInfeasible(MdLinaError):
    pass


class OverflowRisk(MdLinaError):
    pass


class SingularDesign(MdLinaError):
    pass

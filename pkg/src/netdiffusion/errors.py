"""Exception hierarchy shared across the toolkit."""


class DiffusionError(Exception):
    """Base class for every error raised by netdiffusion."""


class GraphError(DiffusionError, ValueError):
    """Invalid graph description."""


class SelfLoop(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class BadWeight(GraphError):
    pass


class BadParams(DiffusionError, ValueError):
    pass


class DimensionMismatch(DiffusionError, ValueError):
    pass


class Defective(DiffusionError):
    """Eigenvector matrix too ill-conditioned to serve as a basis."""


class NoZeroEigenvalue(DiffusionError):
    pass


class Reducible(DiffusionError):
    """Generator has more than one stationary direction."""


class NotStronglyConnected(DiffusionError):
    pass


class WrongProtocol(DiffusionError, ValueError):
    pass


class NotConservative(WrongProtocol):
    pass


class NotNonConservative(WrongProtocol):
    pass


class RankDeficient(DiffusionError):
    pass


class UnstableSpectrum(DiffusionError):
    pass


class SingularReduced(DiffusionError):
    pass


class StubbornSetError(DiffusionError, ValueError):
    pass


class EmptyStubborn(StubbornSetError):
    pass


class AllStubborn(StubbornSetError):
    pass


class DegenerateLeadingCoefficient(DiffusionError, ValueError):
    pass


class UnstableClosedLoop(DiffusionError):
    pass


class Disconnected(DiffusionError):
    pass


class SteadyModeEdited(DiffusionError, ValueError):
    pass


class InvalidPlan(DiffusionError, ValueError):
    pass


class AbsorbingState(DiffusionError):
    def __init__(self, state, grand_matrix):
        super().__init__(f"state {state} has zero total outgoing rate")
        self.state = state
        self.grand_matrix = grand_matrix


class BadHorizon(DiffusionError, ValueError):
    pass

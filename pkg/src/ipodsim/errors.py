"""Exception hierarchy for ipodsim."""


class IpodError(Exception):
    """Base class for all errors raised by this package."""


class GraphError(IpodError):
    pass


class InvalidSizeError(GraphError):
    pass


class SymmetryError(GraphError):
    pass


class ConnectivityError(GraphError):
    pass


class NormalizationError(GraphError):
    pass


class EdgeListError(GraphError):
    """Malformed edge-list document."""


class DimensionError(IpodError, ValueError):
    pass


class DomainError(IpodError, ValueError):
    pass


class GapIsZeroError(GraphError):
    pass


class ConvergenceError(IpodError):
    """Iterative method stopped before reaching its tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual

"""Exception types shared across the package."""


class FiberCondError(Exception):
    """Base class for all numerical failures raised by this package."""


class NonFinite(FiberCondError):
    """An evaluation returned NaN or Inf where a finite value is required."""


class RankDeficient(FiberCondError):
    """The Jacobian is (numerically) rank deficient, i.e. the point is not regular."""


class NoConvergence(FiberCondError):
    """An iterative solve did not reach its tolerance within the iteration budget."""


class MaxNodesExceeded(FiberCondError):
    """Fiber tracing hit the node budget before closing or truncating."""


class ZeroMass(FiberCondError):
    """A density is identically zero (underflows) on the discretized fiber."""


class AllStartsFailed(FiberCondError):
    """No optimization start converged to a feasible local minimizer."""


class TooManySingularFibers(FiberCondError):
    """More sampled observations than allowed had untraceable fibers."""

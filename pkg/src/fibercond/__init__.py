"""Conditional densities on observation fibers: disintegration vs. restriction.

Core pipeline: trace the level set h^-1({y}) of an observation map as a
polyline, evaluate the ambient density and the Jacobian Gram-determinant
corrective factor along it, normalize, and study modes and Onsager-Machlup
functionals of the resulting conditional measures.
"""

from .density import (AmbientDensity, FiberDensityProfile, density_from_spec,
                      diagonal_gaussian, gaussian, gaussian_mixture,
                      log_disint_unnorm, log_restricted_unnorm, normalize_on_fiber,
                      standard_gaussian)
from .errors import (AllStartsFailed, FiberCondError, MaxNodesExceeded, NoConvergence,
                     NonFinite, RankDeficient, TooManySingularFibers, ZeroMass)
from .fiber import FiberTrace, fiber_integral, find_seed, restrict_to_set, trace_fiber
from .geometry import (JacobianDecomposition, ObservationOperator, corrective_factor,
                       decompose, gram_det, is_regular_point, operator_from_spec)
from .modes import ModeProblem, ModeResult, objective, scan_fiber, solve
from .om import lp_slice_volume, om_value, small_ball_mass

__all__ = [
    "AmbientDensity", "FiberDensityProfile", "FiberTrace", "JacobianDecomposition",
    "ModeProblem", "ModeResult", "ObservationOperator",
    "AllStartsFailed", "FiberCondError", "MaxNodesExceeded", "NoConvergence",
    "NonFinite", "RankDeficient", "TooManySingularFibers", "ZeroMass",
    "corrective_factor", "decompose", "density_from_spec", "diagonal_gaussian",
    "fiber_integral", "find_seed", "gaussian", "gaussian_mixture", "gram_det",
    "is_regular_point", "log_disint_unnorm", "log_restricted_unnorm",
    "lp_slice_volume", "normalize_on_fiber", "objective", "om_value",
    "operator_from_spec", "restrict_to_set", "scan_fiber", "small_ball_mass",
    "solve", "standard_gaussian", "trace_fiber",
]

__version__ = "0.1.0"

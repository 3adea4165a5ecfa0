"""Onsager-Machlup functionals on fibers under l_p ambient metrics, and small-ball masses.

An OM functional is defined only up to an additive constant: differences of its
values are limits of log small-ball mass ratios. On a fiber of codimension n
with d - n = 1, changing the ambient norm from Euclidean to l_p contributes the
term -log V_1(x), where V_1(x) is the length of the chord cut from the unit
l_p ball by the fiber's tangent line. No re-centering is applied here: values
are the raw formula, anchored by the trace's seed node.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .density import FiberDensityProfile
from .fiber import FiberTrace, restrict_to_set
from .geometry import ObservationOperator, kernel_direction
from .modes import ModeProblem, objective, objective_on_trace, _lp_norm

UNIT_TOL = 1e-12


def lp_slice_volume(tangent: np.ndarray, p: float) -> float:
    """Length of {t * v : |t * v|_p <= 1} for a Euclidean-unit vector v: 2 / |v|_p."""
    v = np.asarray(tangent, dtype=float)
    nrm2 = float(np.linalg.norm(v))
    if abs(nrm2 - 1.0) > UNIT_TOL:
        raise ValueError(f"tangent must be Euclidean-unit (norm {nrm2!r})")
    if not p >= 1.0:
        raise ValueError("p must lie in [1, inf]")
    return 2.0 / float(_lp_norm(v, p))


def lp_slice_volume_mc(kernel_basis: np.ndarray, p: float, n_samples: int = 10**6,
                       seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo (d-n)-volume of the unit l_p ball sliced by a tangent subspace.

    Rejection sampling in the subspace spanned by the orthonormal columns of
    ``kernel_basis``; returns (estimate, standard error). Experimental path for
    codimension gaps > 1; for a single column it cross-checks lp_slice_volume.
    """
    B = np.atleast_2d(np.asarray(kernel_basis, dtype=float))
    if B.ndim != 2:
        raise ValueError("kernel_basis must be a d x k matrix")
    d, k = B.shape
    # |B u|_p >= |B u|_2 / sqrt(d) = |u|_2 / sqrt(d), so the slice fits in a box.
    half_width = math.sqrt(d)
    rng = np.random.Generator(np.random.Philox(seed))
    u = rng.uniform(-half_width, half_width, size=(n_samples, k))
    inside = _lp_norm(u @ B.T, p) <= 1.0
    box_volume = (2.0 * half_width) ** k
    frac = float(np.mean(inside))
    est = box_volume * frac
    se = box_volume * math.sqrt(max(frac * (1.0 - frac), 0.0) / n_samples)
    return est, se


def om_value(problem: ModeProblem, x: np.ndarray, on_fiber_tol: float = 1e-8) -> float:
    """OM functional value at a fiber point under the problem's metric variant.

    variant "disintegration" (or "restricted"/"lp" via the problem) follows the
    corresponding mode objective; the Euclidean OM functional of the
    disintegration equals the disintegration objective.
    """
    x = np.asarray(x, dtype=float)
    res = float(np.max(np.abs(problem.operator(x) - problem.y)))
    if res > on_fiber_tol:
        raise ValueError(f"point is off-fiber: |h(x) - y|_inf = {res:.3e}")
    return objective(problem, x)


def om_scan(problem: ModeProblem, trace: FiberTrace) -> np.ndarray:
    """OM values at every trace node (vectorized objective on the trace)."""
    return objective_on_trace(problem, trace)


def om_values_on_trace(mu, op: ObservationOperator, trace: FiberTrace,
                       base: str = "disintegration",
                       p: Optional[float] = None) -> np.ndarray:
    """l_p OM functional of the restricted measure or the disintegration on a trace.

    base "restricted":      -log dmu/dlambda(x)
    base "disintegration":  -log dmu/dlambda(x) + log gram_det(Jh(x))
    p given:                adds -log V_1(x) = -log(2 / |tangent|_p)

    With p = None the value is the Euclidean OM functional of the base measure
    (for the restricted base the constant -log 2 tangent term is omitted, which
    only shifts the functional).
    """
    from .geometry import gram_det as _gram

    vals = -np.asarray(mu.log_density(trace.nodes), dtype=float)
    if base == "disintegration":
        vals = vals + np.log(np.asarray(_gram(op.jacobian(trace.nodes)), dtype=float))
    elif base != "restricted":
        raise ValueError(f"base must be 'restricted' or 'disintegration', got {base!r}")
    if p is not None:
        vals = vals - np.log(2.0 / _lp_norm(trace.tangents, p))
    return vals


def lp_ball_predicate(center: np.ndarray, r: float, p: float):
    """Signed level function of the l_p ball B_r^p(center): positive inside."""
    c = np.asarray(center, dtype=float)

    def pred(x: np.ndarray) -> np.ndarray:
        return r - _lp_norm(np.asarray(x, float) - c, p)

    return pred


def small_ball_mass(profile: FiberDensityProfile, center: np.ndarray, r: float,
                    p: float = 2.0) -> float:
    """Mass of the normalized fiber profile inside the l_p ball of radius r.

    Deterministic trapezoid mass with linearly interpolated boundary crossings;
    requires r > 2 * trace step so the ball spans several nodes.
    """
    trace = profile.trace
    if r <= 2.0 * trace.step:
        raise ValueError(f"ball radius {r} must exceed twice the trace step {trace.step}")
    w = restrict_to_set(trace, lp_ball_predicate(center, r, p))
    return profile.mass(w)


def small_ball_log_ratio(profile: FiberDensityProfile, x1: np.ndarray, x2: np.ndarray,
                         r: float, p: float = 2.0) -> float:
    """log mass(B_r(x2)) - log mass(B_r(x1)); converges to I(x1) - I(x2) as r -> 0."""
    m1 = small_ball_mass(profile, x1, r, p)
    m2 = small_ball_mass(profile, x2, r, p)
    return math.log(m2) - math.log(m1)


def richardson_extrapolate(values: np.ndarray, order: int = 2) -> float:
    """Extrapolate f(r), f(r/2), f(r/4), ... to r = 0 assuming error ~ c r^order.

    Successive halvings eliminate one error power per level; with symmetric
    ball masses about on-fiber centers the leading error is O(r^2).
    """
    v = [float(x) for x in values]
    k = order
    while len(v) > 1:
        f = 2.0 ** k
        v = [(f * v[i + 1] - v[i]) / (f - 1.0) for i in range(len(v) - 1)]
        k += 2
    return v[0]

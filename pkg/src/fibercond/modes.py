"""Weak modes of disintegrations and restricted measures as constrained minimizers.

Three objective variants over the constraint h(x) = y:

  restricted        -log dmu/dlambda(x)
  disintegration    -log dmu/dlambda(x) + log gram_det(Jh(x))
  lp(p)             disintegration objective - log V_1(x), with V_1(x) the
                    length of the unit l_p ball sliced along the fiber tangent

Minimization runs an augmented-Lagrangian outer loop (multiplier update, x10
penalty growth) around a BFGS inner solve, from a compass grid of starts plus
any user seeds. An exhaustive discrete search along a traced fiber
(``scan_fiber``) serves as the independent oracle in d = 2.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from .density import AmbientDensity
from .errors import AllStartsFailed, FiberCondError, RankDeficient
from .fiber import FiberTrace, find_seed
from .geometry import ObservationOperator, gram_det, kernel_direction

VARIANTS = ("restricted", "disintegration", "lp")
PLATEAU_TOL = 1e-12
DEFAULT_OPT_TOL = 1e-6
DEFAULT_MERGE_RADIUS = 1e-4
COMPASS_RADIUS = 2.0


@dataclasses.dataclass(frozen=True)
class ModeProblem:
    """A constrained mode-search problem: minimize the variant objective s.t. h(x) = y."""

    density: AmbientDensity
    operator: ObservationOperator
    y: np.ndarray
    variant: str = "disintegration"
    p: Optional[float] = None           # only for variant="lp"; p in [1, inf]
    starts: Sequence[np.ndarray] = ()
    opt_tol: float = DEFAULT_OPT_TOL

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant == "lp":
            if self.p is None or not (self.p >= 1.0):
                raise ValueError("variant 'lp' requires p in [1, inf]")
        object.__setattr__(self, "y", np.atleast_1d(np.asarray(self.y, dtype=float)))


@dataclasses.dataclass(frozen=True)
class ModePoint:
    x: np.ndarray
    objective: float
    residual: float
    multiplier: np.ndarray


@dataclasses.dataclass(frozen=True)
class ModeResult:
    minimizers: list[ModePoint]
    variant: str
    p: Optional[float]
    y: np.ndarray
    merged: bool
    starts_failed: int

    def points(self) -> np.ndarray:
        return np.array([m.x for m in self.minimizers])

    def to_dict(self) -> dict:
        p = self.p
        if p is not None and not math.isfinite(p):
            p = "inf"  # keep the JSON strict
        return {
            "variant": self.variant,
            "p": p,
            "y": [float(v) for v in self.y],
            "minimizers": [
                {"x": [float(v) for v in m.x], "objective": m.objective,
                 "residual": m.residual}
                for m in self.minimizers
            ],
            "starts_failed": self.starts_failed,
        }


def _lp_norm(v: np.ndarray, p: float) -> np.ndarray:
    if math.isinf(p):
        return np.max(np.abs(v), axis=-1)
    return np.sum(np.abs(v) ** p, axis=-1) ** (1.0 / p)


def objective(problem: ModeProblem, x: np.ndarray) -> float:
    """Variant objective at a single regular point x (RankDeficient otherwise)."""
    x = np.asarray(x, dtype=float)
    mu, op = problem.density, problem.operator
    val = -float(mu.log_density(x))
    if problem.variant == "restricted":
        return val
    g = gram_det(op.jacobian(x))
    val += math.log(float(g))
    if problem.variant == "lp":
        t = kernel_direction(op, x)
        val -= math.log(2.0 / float(_lp_norm(t, problem.p)))
    return val


def objective_on_trace(problem: ModeProblem, trace: FiberTrace) -> np.ndarray:
    """Vectorized variant objective at every trace node (uses stored tangents)."""
    mu, op = problem.density, problem.operator
    vals = -np.asarray(mu.log_density(trace.nodes), dtype=float)
    if problem.variant == "restricted":
        return vals
    vals = vals + np.log(np.asarray(gram_det(op.jacobian(trace.nodes)), dtype=float))
    if problem.variant == "lp":
        vals = vals - np.log(2.0 / _lp_norm(trace.tangents, problem.p))
    return vals


def _fd_gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
                 rel_step: float = 1e-6) -> np.ndarray:
    """Central finite differences with per-coordinate step rel_step * max(1, |x_i|)."""
    g = np.zeros_like(x)
    for i in range(x.size):
        h = rel_step * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def projected_gradient_norm(problem: ModeProblem, x: np.ndarray) -> float:
    """Norm of the objective gradient projected onto ker Jh(x) (tangential stationarity)."""
    x = np.asarray(x, dtype=float)
    g = _fd_gradient(lambda z: _guarded_objective(problem, z), x)
    J = np.atleast_2d(problem.operator.jacobian(x))
    G = J @ J.T
    proj = g - J.T @ np.linalg.solve(G, J @ g)
    return float(np.linalg.norm(proj))


def _guarded_objective(problem: ModeProblem, x: np.ndarray) -> float:
    """Objective with a +inf barrier at non-regular/non-finite iterates."""
    try:
        v = objective(problem, x)
    except FiberCondError:
        return float("inf")
    return v if math.isfinite(v) or v == float("inf") else float("inf")


def default_starts(d: int, radius: float = COMPASS_RADIUS) -> list[np.ndarray]:
    """Eight compass directions at the given radius (d = 2); axis points otherwise."""
    if d == 2:
        angles = np.arange(8) * (math.pi / 4.0)
        return [radius * np.array([math.cos(a), math.sin(a)]) for a in angles]
    starts = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = radius
        starts.extend([e.copy(), -e.copy()])
    return starts


def _augmented_lagrangian(problem: ModeProblem, x0: np.ndarray,
                          residual_target: float = 1e-10,
                          max_outer: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Minimize the variant objective s.t. h(x) = y from one start.

    Returns (x, multiplier); raises on non-convergence.
    """
    op = problem.operator
    y = problem.y
    n = op.dim_obs
    x = np.asarray(x0, dtype=float).copy()
    lam = np.zeros(n)
    rho = 10.0
    prev_cnorm = float("inf")
    mu_grad = problem.density.log_density_gradient
    analytic = mu_grad is not None and problem.variant in ("restricted", "disintegration")

    def constraint(z: np.ndarray) -> np.ndarray:
        return op(z) - y

    for _ in range(max_outer):
        def al_value(z: np.ndarray) -> float:
            c = constraint(z)
            base = _guarded_objective(problem, z)
            return base + float(lam @ c) + 0.5 * rho * float(c @ c)

        if analytic:
            # -grad log density analytically; FD only for the log-gram part,
            # which needs second derivatives of h.
            def al_grad(z: np.ndarray) -> np.ndarray:
                g = -np.asarray(mu_grad(z), dtype=float)
                if problem.variant == "disintegration":
                    g = g + _fd_gradient(
                        lambda w: _log_gram_guarded(op, w), z)
                c = constraint(z)
                J = np.atleast_2d(op.jacobian(z))
                return g + J.T @ (lam + rho * c)
        else:
            def al_grad(z: np.ndarray) -> np.ndarray:
                return _fd_gradient(al_value, z)

        res = optimize.minimize(al_value, x, jac=al_grad, method="BFGS",
                                options={"gtol": max(1e-9, 0.01 * problem.opt_tol),
                                         "maxiter": 400})
        x = np.asarray(res.x, dtype=float)
        c = constraint(x)
        cnorm = float(np.max(np.abs(c)))
        if not np.all(np.isfinite(x)):
            raise FiberCondError("augmented-Lagrangian iterate diverged")
        if cnorm <= residual_target:
            return x, lam + rho * c
        lam = lam + rho * c
        if cnorm > 0.25 * prev_cnorm:
            rho = min(rho * 10.0, 1e10)
        prev_cnorm = cnorm
    raise FiberCondError(f"constraint residual {cnorm:.2e} above target after outer loop")


def _log_gram_guarded(op: ObservationOperator, x: np.ndarray) -> float:
    try:
        return math.log(float(gram_det(op.jacobian(x))))
    except FiberCondError:
        return float("inf")


def _is_tangential_minimum(problem: ModeProblem, x: np.ndarray,
                           delta: float = 1e-3) -> bool:
    """Second-difference test along the fiber: x must not be a saddle or fiber-maximum.

    Symmetry-axis starts can slide the inner solve into a constrained critical
    point that maximizes the objective along the fiber; this filter probes one
    tangential step to each side (projected back onto the fiber) and rejects
    candidates that are not local minima there.
    """
    op = problem.operator
    f0 = _guarded_objective(problem, x)
    try:
        t = kernel_direction(op, x)
        for sgn in (1.0, -1.0):
            xs = find_seed(op, problem.y, x + sgn * delta * t, tol=1e-12)
            if _guarded_objective(problem, xs) < f0 - 1e-12:
                return False
    except FiberCondError:
        return False
    return True


def solve(problem: ModeProblem, merge_radius: float = DEFAULT_MERGE_RADIUS,
          co_optimal_tol: float = 1e-6) -> ModeResult:
    """Multi-start constrained minimization; returns the weak-mode set.

    Each start runs the augmented-Lagrangian loop, is polished back onto the
    fiber by Gauss-Newton (which moves normal to the fiber only), and must pass
    the residual bound, tangential-minimum filter, and (for smooth variants)
    the projected-gradient stationarity check. Survivors are deduplicated
    within ``merge_radius`` and sorted by objective, then lexicographically.

    Weak modes are global minimizers of the OM functional, so only minimizers
    co-optimal with the best one found (objective within ``co_optimal_tol``)
    are reported; all of them are, never a silently chosen single point.
    Strictly worse local minima are exposed by ``scan_fiber``.
    """
    op = problem.operator
    starts = [np.asarray(s, dtype=float) for s in problem.starts]
    starts = default_starts(op.dim_ambient) + starts
    smooth = problem.variant != "lp" or (problem.p is not None and 1.0 < problem.p < math.inf)

    candidates: list[ModePoint] = []
    failed = 0
    for x0 in starts:
        try:
            x, lam = _augmented_lagrangian(problem, x0)
            x = find_seed(op, problem.y, x, tol=1e-12)
            residual = float(np.max(np.abs(op(x) - problem.y)))
            if residual > 1e-8:
                raise FiberCondError(f"residual {residual:.2e} > 1e-8 after polish")
            if not _is_tangential_minimum(problem, x):
                raise FiberCondError("converged to a non-minimal constrained critical point")
            if smooth and projected_gradient_norm(problem, x) > problem.opt_tol:
                raise FiberCondError("projected gradient above opt_tol")
            candidates.append(ModePoint(x=x, objective=objective(problem, x),
                                        residual=residual, multiplier=lam))
        except FiberCondError:
            failed += 1
    if not candidates:
        raise AllStartsFailed(f"none of {len(starts)} starts produced a feasible minimizer")

    candidates.sort(key=lambda m: (m.objective, tuple(m.x)))
    best = candidates[0].objective
    kept: list[ModePoint] = []
    for cand in candidates:
        if cand.objective > best + co_optimal_tol:
            break
        if all(np.linalg.norm(cand.x - k.x) > merge_radius for k in kept):
            kept.append(cand)
    return ModeResult(minimizers=kept, variant=problem.variant, p=problem.p,
                      y=problem.y, merged=len(kept) < len(candidates),
                      starts_failed=failed)


def local_minima_of_series(values: np.ndarray, closed: bool,
                           tie_tol: float = PLATEAU_TOL) -> list[int]:
    """Indices of strict local minima, with plateaus (ties within tie_tol) collapsed.

    Runs of consecutive values whose neighbor-to-neighbor differences are within
    ``tie_tol`` count as a single candidate, represented by the run's middle
    index; a run is a minimum iff both neighboring values outside the run are
    strictly larger. Endpoint runs of open series are never minima. A fully
    tied series collapses to the single representative index 0.
    """
    v = np.asarray(values, dtype=float)
    m = v.size
    if m < 3:
        return []
    nxt = np.roll(v, -1) - v if closed else np.diff(v)
    tie = np.abs(nxt) <= tie_tol
    if np.all(tie):
        return [0]

    minima: list[int] = []
    if closed:
        # Split the circle at non-tie boundaries; runs are maximal tied stretches.
        boundaries = np.nonzero(~tie)[0]    # edge i connects node i and i+1
        run_starts = [(b + 1) % m for b in boundaries]
        for k, start in enumerate(run_starts):
            prev_edge = boundaries[k]
            next_edge = boundaries[(k + 1) % len(boundaries)]
            run_len = (next_edge - start) % m + 1
            run_val = v[start]
            before = v[prev_edge]           # node just before the run
            after = v[(next_edge + 1) % m]  # node just after the run
            if before > run_val + tie_tol and after > run_val + tie_tol:
                minima.append((start + run_len // 2) % m)
        return sorted(minima)

    i = 0
    while i < m:
        j = i
        while j + 1 < m and tie[j]:
            j += 1
        if i > 0 and j < m - 1 and v[i - 1] > v[i] + tie_tol and v[j + 1] > v[j] + tie_tol:
            minima.append((i + j) // 2)
        i = j + 1
    return minima


def scan_fiber(problem: ModeProblem, trace: FiberTrace) -> list[tuple[int, float]]:
    """Exhaustive discrete mode search along a trace: (node index, objective) local minima."""
    vals = objective_on_trace(problem, trace)
    idx = local_minima_of_series(vals, closed=trace.closed)
    return [(int(i), float(vals[i])) for i in idx]

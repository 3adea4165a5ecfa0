"""Predictor-corrector tracing of observation fibers h^-1({y}) in the curve case d - n = 1.

The predictor steps along the unit kernel vector of the Jacobian (orientation
kept continuous with the previous tangent); the corrector is a damped
Gauss-Newton projection back onto the level set. Closed fibers are detected by
returning near the seed with aligned tangent; open fibers are either truncated
where the ambient log-density falls a fixed number of nats below its running
maximum, or run into the node budget.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Optional

import numpy as np

from .errors import MaxNodesExceeded, NoConvergence, NonFinite, RankDeficient
from .geometry import DEFAULT_RANK_TOL, ObservationOperator, kernel_direction

DEFAULT_STEP = 1e-3
DEFAULT_CORRECTOR_TOL = 1e-10
DEFAULT_MAX_NODES = 1_000_000
DEFAULT_TRUNCATE_DROP = 40.0
CLOSURE_FACTOR = 1.5        # closure: candidate within 1.5*step of the seed ...
CLOSURE_MIN_STEPS = 10      # ... after at least 10 steps, with aligned tangent
MIN_SPACING_FACTOR = 0.2


@dataclasses.dataclass(frozen=True)
class FiberTrace:
    """Discretized connected component of a fiber, parameterized by polyline arc length."""

    y: np.ndarray               # (n,) target observation
    nodes: np.ndarray           # (m, d) ordered points on the fiber
    arclen: np.ndarray          # (m,) cumulative Euclidean arc length, arclen[0] = 0
    closed: bool
    max_residual: float         # max over nodes of |h(node) - y|_inf
    tangents: np.ndarray        # (m, d) unit kernel vectors, orientation-continuous
    step: float
    corrector_tol: float

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def wrap_length(self) -> float:
        """Length of the closing segment from the last node back to the first."""
        if not self.closed:
            return 0.0
        return float(np.linalg.norm(self.nodes[0] - self.nodes[-1]))

    @property
    def total_length(self) -> float:
        return float(self.arclen[-1]) + self.wrap_length

    def segment_lengths(self) -> np.ndarray:
        """Lengths of polyline segments; includes the wrap segment when closed."""
        seg = np.diff(self.arclen)
        if self.closed:
            seg = np.append(seg, self.wrap_length)
        return seg

    def trapezoid_weights(self) -> np.ndarray:
        """Per-node composite-trapezoid weights over arc length (wrap included)."""
        seg = self.segment_lengths()
        m = self.n_nodes
        w = np.zeros(m)
        if self.closed:
            w += 0.5 * seg                     # segment i starts at node i
            w += 0.5 * np.roll(seg, 1)         # segment i-1 ends at node i
        else:
            w[:-1] += 0.5 * seg
            w[1:] += 0.5 * seg
        return w


def _gauss_newton_direction(op: ObservationOperator, x: np.ndarray, r: np.ndarray,
                            rank_tol: float) -> np.ndarray:
    """Gauss-Newton correction J^T (J J^T)^-1 r at x for residual r = h(x) - y."""
    J = op.jacobian(x)
    if op.dim_obs == 1:
        J0 = J[0]
        jj = float(J0 @ J0)
        if jj <= (rank_tol * max(1.0, np.sqrt(jj))) ** 2:
            raise RankDeficient("vanishing gradient during Gauss-Newton")
        return J0 * (r[0] / jj)
    G = J @ J.T
    s = np.linalg.svd(G, compute_uv=False)
    if s[-1] <= (rank_tol * max(1.0, np.sqrt(s[0]))) ** 2:
        raise RankDeficient("rank-deficient Jacobian during Gauss-Newton")
    return J.T @ np.linalg.solve(G, r)


def _project_onto_fiber(op: ObservationOperator, x0: np.ndarray, y: np.ndarray,
                        tol: float, max_iter: int, rank_tol: float) -> np.ndarray:
    """Damped Gauss-Newton x <- x - J^T (J J^T)^-1 (h(x) - y) until |h(x) - y|_inf <= tol."""
    x = np.array(x0, dtype=float)
    r = op(x) - y
    res = float(abs(r).max())
    for _ in range(max_iter):
        if res <= tol:
            return x
        dx = _gauss_newton_direction(op, x, r, rank_tol)
        # Backtrack when the full step fails to reduce the residual.
        alpha = 1.0
        for _ in range(30):
            x_new = x - alpha * dx
            r_new = op(x_new) - y
            res_new = float(abs(r_new).max())
            if res_new < res:  # NaN fails the comparison, triggering backtracking
                break
            alpha *= 0.5
        else:
            raise NoConvergence(f"Gauss-Newton stalled at residual {res:.3e}")
        x, r, res = x_new, r_new, res_new
    if res <= tol:
        return x
    raise NoConvergence(f"Gauss-Newton did not reach tol={tol:.1e}; residual {res:.3e}")


def find_seed(op: ObservationOperator, y: np.ndarray, x0: np.ndarray,
              tol: float = DEFAULT_CORRECTOR_TOL, max_iter: int = 100,
              rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Project an initial guess onto the fiber h^-1({y}) by Gauss-Newton.

    The iteration moves only within the local row space of the Jacobian, so the
    returned point stays (to first order) at the same position along the fiber.
    """
    x0 = np.asarray(x0, dtype=float)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if not np.all(np.isfinite(x0)):
        raise NonFinite("find_seed requires a finite initial guess")
    return _project_onto_fiber(op, x0, y, tol, max_iter, rank_tol)


def trace_fiber(op: ObservationOperator, y: np.ndarray, seed: np.ndarray,
                step: float = DEFAULT_STEP,
                corrector_tol: float = DEFAULT_CORRECTOR_TOL,
                max_nodes: int = DEFAULT_MAX_NODES,
                truncate_log_density: Optional[Callable[[np.ndarray], float]] = None,
                truncate_drop: float = DEFAULT_TRUNCATE_DROP,
                orientation: int = 1,
                rank_tol: float = DEFAULT_RANK_TOL) -> FiberTrace:
    """Trace the connected fiber component through ``seed`` (curve case d - n = 1).

    Closed fibers terminate on closure detection. Open fibers require either
    ``truncate_log_density`` (the trace stops in each direction once the log
    density drops ``truncate_drop`` nats below its running maximum) or a
    ``max_nodes`` budget, whose exhaustion raises MaxNodesExceeded.
    """
    if op.dim_ambient - op.dim_obs != 1:
        raise ValueError("trace_fiber handles the curve case d - n = 1 only")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    seed = np.asarray(seed, dtype=float)

    x0 = _project_onto_fiber(op, seed, y, corrector_tol, 100, rank_tol)
    t0 = kernel_direction(op, x0, rank_tol=rank_tol)
    if orientation < 0:
        t0 = -t0

    def log_density_at(x: np.ndarray) -> float:
        return float(truncate_log_density(x)) if truncate_log_density is not None else 0.0

    running_max = log_density_at(x0)

    min_spacing_sq = (MIN_SPACING_FACTOR * step) ** 2
    max_spacing_sq = (2.0 * step) ** 2
    closure_sq = (CLOSURE_FACTOR * step) ** 2

    def march(direction_tangent: np.ndarray):
        """Nodes strictly after x0 in one direction; returns (nodes, tangents, closed)."""
        nonlocal running_max
        nodes: list[np.ndarray] = []
        tangents: list[np.ndarray] = []
        x, t = x0, direction_tangent
        while True:
            if len(nodes) + 1 > max_nodes:
                raise MaxNodesExceeded(
                    f"fiber exceeded max_nodes={max_nodes} (open or very long fiber; "
                    f"last node {x.tolist()})")
            x_new = _project_onto_fiber(op, x + step * t, y, corrector_tol, 50, rank_tol)
            gap = x_new - x
            spacing_sq = float(gap @ gap)
            if not (min_spacing_sq <= spacing_sq <= max_spacing_sq):
                raise NoConvergence(
                    f"corrector produced node spacing {np.sqrt(spacing_sq):.3e} outside "
                    f"[{MIN_SPACING_FACTOR * step:.1e}, {2 * step:.1e}]")
            t_new = kernel_direction(op, x_new, prev=t, rank_tol=rank_tol)
            seed_gap = x_new - x0
            seed_dist_sq = float(seed_gap @ seed_gap)
            if (len(nodes) + 1 >= CLOSURE_MIN_STEPS
                    and seed_dist_sq <= closure_sq
                    and float(t_new @ t0) > 0.0):
                # Keep the candidate unless it nearly coincides with the seed.
                if seed_dist_sq >= min_spacing_sq:
                    nodes.append(x_new)
                    tangents.append(t_new)
                return nodes, tangents, True
            nodes.append(x_new)
            tangents.append(t_new)
            if truncate_log_density is not None:
                ld = log_density_at(x_new)
                running_max = max(running_max, ld)
                if ld < running_max - truncate_drop:
                    return nodes, tangents, False
            x, t = x_new, t_new

    fwd_nodes, fwd_tans, closed = march(t0)
    if closed:
        nodes = [x0] + fwd_nodes
        tangents = [t0] + fwd_tans
    else:
        bwd_nodes, bwd_tans, closed_b = march(-t0)
        if closed_b:
            # Only reachable through asymmetric truncation; treat as closed.
            nodes = [x0] + bwd_nodes
            tangents = [t0] + bwd_tans
            closed = True
        else:
            nodes = bwd_nodes[::-1] + [x0] + fwd_nodes
            # Backward tangents point along the backward march; flip for a
            # consistent forward orientation.
            tangents = [-t for t in bwd_tans[::-1]] + [t0] + fwd_tans

    node_arr = np.asarray(nodes)
    tan_arr = np.asarray(tangents)
    seg = np.linalg.norm(np.diff(node_arr, axis=0), axis=1)
    arclen = np.concatenate([[0.0], np.cumsum(seg)])
    residuals = np.max(np.abs(op(node_arr) - y), axis=-1)
    return FiberTrace(y=y, nodes=node_arr, arclen=arclen, closed=closed,
                      max_residual=float(np.max(residuals)), tangents=tan_arr,
                      step=step, corrector_tol=corrector_tol)


def fiber_integral(trace: FiberTrace, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """Composite trapezoid of f over arc length: approximates the integral of f
    against the fiber's arc-length volume measure (wrap segment included)."""
    values = np.asarray(f(trace.nodes), dtype=float)
    return float(np.dot(trace.trapezoid_weights(), values))


def restrict_to_set(trace: FiberTrace, predicate: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Trapezoid weights masked to the set {predicate > 0}.

    ``predicate`` is a signed, continuous level function evaluated at the trace
    nodes (inside iff value > 0); segment boundary crossings are resolved by
    linear interpolation of the signed values, so an integrand restricted to the
    set is integrated as ``dot(weights, values)``.
    """
    a = np.asarray(predicate(trace.nodes), dtype=float)
    if a.shape != (trace.n_nodes,):
        raise ValueError("predicate must return one signed value per node")
    seg = trace.segment_lengths()
    m = trace.n_nodes
    i_idx = np.arange(len(seg))
    j_idx = (i_idx + 1) % m
    ai, aj = a[i_idx], a[j_idx]
    in_i, in_j = ai > 0.0, aj > 0.0

    wi = np.zeros(len(seg))
    wj = np.zeros(len(seg))
    both = in_i & in_j
    wi[both] = 0.5 * seg[both]
    wj[both] = 0.5 * seg[both]

    crossing = in_i != in_j
    with np.errstate(invalid="ignore", divide="ignore"):
        theta = np.where(crossing, ai / np.where(crossing, ai - aj, 1.0), 0.0)
    exit_seg = crossing & in_i      # inside part adjoins node i
    th = theta[exit_seg]
    wi[exit_seg] = seg[exit_seg] * th * (1.0 - 0.5 * th)
    wj[exit_seg] = seg[exit_seg] * 0.5 * th * th
    enter_seg = crossing & in_j     # inside part adjoins node j
    th = theta[enter_seg]
    wi[enter_seg] = seg[enter_seg] * 0.5 * (1.0 - th) ** 2
    wj[enter_seg] = seg[enter_seg] * (1.0 - th) * (0.5 + 0.5 * th)

    w = np.zeros(m)
    np.add.at(w, i_idx, wi)
    np.add.at(w, j_idx, wj)
    return w


def write_trace_csv(path, trace: FiberTrace, op: ObservationOperator) -> None:
    """Trace CSV: columns s, x1..xd, t1..td, residual (%.17g, LF)."""
    d = trace.nodes.shape[1]
    residual = np.max(np.abs(op(trace.nodes) - trace.y), axis=-1)
    header = (["s"] + [f"x{i+1}" for i in range(d)]
              + [f"t{i+1}" for i in range(d)] + ["residual"])
    cols = ([trace.arclen] + [trace.nodes[:, i] for i in range(d)]
            + [trace.tangents[:, i] for i in range(d)] + [residual])
    from .ioutil import write_csv_atomic
    write_csv_atomic(path, header, cols)

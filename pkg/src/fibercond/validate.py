"""Numerical verification of disintegration identities.

Two families of checks:

  * the law of total probability mu(A) = int mu^y(A) d(mu_h)(y), verified by
    Monte Carlo over observations y = h(x) with x ~ mu, each fiber traced and
    its conditional mass of A read off the normalized profile; and
  * deterministic lemma checks (product slice, pushforward, equivalent
    observations, dominated reweighting, restriction, Gaussian Bayes), each
    comparing two independently assembled profiles at a stated tolerance.

Monte-Carlo verdicts use a paired three-standard-error rule and are
bit-reproducible given (sample count, seed): samples come from a counter-based
Philox stream and all reductions run in a fixed order.
"""

from __future__ import annotations

import dataclasses
import math
import time
from typing import Callable, Optional, Sequence

import numpy as np

from . import density as dens
from .density import AmbientDensity, normalize_on_fiber, normalize_values
from .errors import FiberCondError, RankDeficient, TooManySingularFibers, ZeroMass
from .fiber import FiberTrace, find_seed, restrict_to_set, trace_fiber
from .geometry import (ObservationOperator, compose_scalar, coordinate_projection,
                       gram_det, is_regular_point, kernel_direction, linear_operator,
                       pushforward_operator)

MC_DEFAULT_STEP = 0.01
DETERMINISTIC_STEP = 1e-3
MAX_SINGULAR_FRACTION = 1e-3


@dataclasses.dataclass
class ValidationReport:
    """Outcome of one check: estimates, uncertainty, verdict, and bookkeeping.

    ``runtime_seconds`` is informational only and deliberately excluded from
    the serialized form so identical runs produce identical report files.
    """

    check: str
    lhs: float
    rhs: float
    se_lhs: Optional[float]
    se_rhs: Optional[float]
    se_diff: Optional[float]
    n_samples: int
    seed: Optional[int]
    verdict: str                      # "pass" | "fail" | "inconclusive"
    runtime_seconds: float
    details: dict = dataclasses.field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        row = {
            "check": self.check,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "se_lhs": self.se_lhs,
            "se_rhs": self.se_rhs,
            "se_diff": self.se_diff,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "verdict": self.verdict,
        }
        row.update({k: v for k, v in sorted(self.details.items())})
        return row


def _deterministic_report(check: str, sup_distance: float, tolerance: float,
                          n_samples: int, t0: float, seed: Optional[int] = None,
                          **details) -> ValidationReport:
    verdict = "pass" if sup_distance <= tolerance else "fail"
    return ValidationReport(check=check, lhs=float(sup_distance), rhs=0.0,
                            se_lhs=None, se_rhs=None, se_diff=None,
                            n_samples=n_samples, seed=seed, verdict=verdict,
                            runtime_seconds=time.perf_counter() - t0,
                            details={"tolerance": tolerance, **details})


# ---------------------------------------------------------------------------
# Law of total probability (Monte Carlo)
# ---------------------------------------------------------------------------

def trace_sampled_fiber(op: ObservationOperator, y: np.ndarray, on_fiber_point: np.ndarray,
                        mu: AmbientDensity, step: float) -> FiberTrace:
    """Trace the fiber through a sampled point, shrinking the step for tiny fibers.

    A closed fiber whose perimeter is comparable to the step would be detected
    as closed only after wrapping several times; retracing with a smaller step
    below forty-ish nodes rules that out.
    """
    s = step
    last_exc: Exception | None = None
    for _ in range(7):
        try:
            tr = trace_fiber(op, y, on_fiber_point, step=s,
                             truncate_log_density=mu.log_density,
                             max_nodes=2_000_000)
            if tr.closed and tr.n_nodes < 40:
                s /= 4.0
                continue
            return tr
        except RankDeficient:
            raise
        except FiberCondError as exc:
            last_exc = exc
            s /= 4.0
    raise last_exc if last_exc is not None else FiberCondError("untraceable fiber")


def run_total_probability(mu: AmbientDensity, op: ObservationOperator,
                          predicates: dict[str, Callable[[np.ndarray], np.ndarray]],
                          n_samples: int, seed: int,
                          profile_variant: str = "disintegration",
                          step: float = MC_DEFAULT_STEP) -> list[ValidationReport]:
    """Monte-Carlo comparison of mu(A) against the mean conditional mass E_y[mu^y(A)].

    One fiber trace per sample is shared by all predicates. Samples whose fiber
    cannot be traced (non-regular observations) are discarded and counted; more
    than 0.1% of them raises TooManySingularFibers. With
    ``profile_variant="restricted"`` the conditional is replaced by the
    renormalized restricted profile, which violates the law of total
    probability for nonlinear observation operators.
    """
    t0 = time.perf_counter()
    names = list(predicates)
    rng = np.random.Generator(np.random.Philox(seed))
    X = mu.sample(rng, n_samples)
    masses = np.full((n_samples, len(names)), np.nan)
    discarded = 0
    for i in range(n_samples):
        x = X[i]
        try:
            if not is_regular_point(op, x):
                raise RankDeficient("sampled point is non-regular")
            y = op(x)
            tr = trace_sampled_fiber(op, y, x, mu, step)
            prof = normalize_on_fiber(mu, op, tr, profile_variant)
            for j, name in enumerate(names):
                masses[i, j] = prof.mass(restrict_to_set(tr, predicates[name]))
        except FiberCondError:
            discarded += 1
    if discarded > MAX_SINGULAR_FRACTION * n_samples:
        raise TooManySingularFibers(
            f"{discarded} of {n_samples} sampled fibers were untraceable")

    kept = ~np.isnan(masses[:, 0])
    m = int(np.sum(kept))
    reports = []
    for j, name in enumerate(names):
        inside = (np.asarray(predicates[name](X[kept]), float) > 0.0).astype(float)
        cond = masses[kept, j]
        diff = inside - cond
        lhs = float(np.mean(inside))
        rhs = float(np.mean(cond))
        se_lhs = float(np.std(inside, ddof=1) / math.sqrt(m))
        se_rhs = float(np.std(cond, ddof=1) / math.sqrt(m))
        se_diff = float(np.std(diff, ddof=1) / math.sqrt(m))
        verdict = "pass" if abs(lhs - rhs) <= 3.0 * se_diff else "fail"
        if se_diff == 0.0 and lhs == rhs:
            verdict = "pass"
        reports.append(ValidationReport(
            check=f"total_probability[{name}]", lhs=lhs, rhs=rhs, se_lhs=se_lhs,
            se_rhs=se_rhs, se_diff=se_diff, n_samples=m, seed=seed, verdict=verdict,
            runtime_seconds=time.perf_counter() - t0,
            details={"profile_variant": profile_variant, "discarded": discarded}))
    return reports


def check_total_probability(mu: AmbientDensity, op: ObservationOperator,
                            predicate: Callable[[np.ndarray], np.ndarray],
                            n_samples: int, seed: int,
                            profile_variant: str = "disintegration",
                            step: float = MC_DEFAULT_STEP,
                            name: str = "A") -> ValidationReport:
    """Single-predicate law-of-total-probability check; see run_total_probability."""
    return run_total_probability(mu, op, {name: predicate}, n_samples, seed,
                                 profile_variant=profile_variant, step=step)[0]


def standard_predicates() -> dict[str, Callable[[np.ndarray], np.ndarray]]:
    """Ten signed predicates on R^2 (half-planes, bands, discs) for the law check."""
    def halfplane(i, c, sign=1.0):
        return lambda x: sign * (np.asarray(x, float)[..., i] - c)

    def band(i, center, width):
        return lambda x: width - np.abs(np.asarray(x, float)[..., i] - center)

    def disc(cx, cy, r):
        c = np.array([cx, cy])
        return lambda x: r - np.linalg.norm(np.asarray(x, float) - c, axis=-1)

    return {
        "x1_pos": halfplane(0, 0.0),
        "x1_gt_0.4": halfplane(0, 0.4),
        "x1_lt_-0.3": halfplane(0, -0.3, sign=-1.0),
        "x2_pos": halfplane(1, 0.0),
        "diag": lambda x: np.asarray(x, float)[..., 0] + np.asarray(x, float)[..., 1] - 0.5,
        "band_x1": band(0, 0.0, 0.5),
        "band_x2": band(1, 0.2, 0.6),
        "band_diag": lambda x: 0.4 - np.abs(np.asarray(x, float)[..., 0]
                                            - np.asarray(x, float)[..., 1]),
        "disc_origin": disc(0.0, 0.0, 1.0),
        "disc_offset": disc(0.5, 0.0, 0.7),
    }


# ---------------------------------------------------------------------------
# Deterministic lemma checks
# ---------------------------------------------------------------------------

def check_product_slice(mu2: AmbientDensity, y: float, seed: int = 0,
                        step: float = DETERMINISTIC_STEP,
                        tolerance: float = 1e-4) -> ValidationReport:
    """Disintegration of N(0,1) x mu2 along h(x) = x1 equals delta_y x mu2.

    The normalized disintegration profile along the fiber {x1 = y} must match
    mu2's own density in the second coordinate in sup norm.
    """
    t0 = time.perf_counter()
    if mu2.dim != 1:
        raise ValueError("check_product_slice expects a 1-D second factor")
    mu = dens.product_with_standard_normal(mu2)
    op = coordinate_projection(2)
    tr = trace_fiber(op, [y], np.array([y, 0.0]), step=step,
                     truncate_log_density=mu.log_density)
    prof = normalize_on_fiber(mu, op, tr, "disintegration")
    target = np.exp(np.asarray(mu2.log_density(tr.nodes[:, 1:]), float))
    sup = float(np.max(np.abs(prof.normalized - target)))
    return _deterministic_report("product_slice", sup, tolerance, tr.n_nodes, t0,
                                 seed=seed, y=y, mu2=mu2.name)


def _unit_tangents(op: ObservationOperator, X: np.ndarray) -> np.ndarray:
    """Unit kernel vectors at a batch of points (d - n = 1)."""
    if op.dim_ambient == 2:
        J = op.jacobian(X)[..., 0, :]
        t = np.stack([-J[..., 1], J[..., 0]], axis=-1)
        return t / np.linalg.norm(t, axis=-1, keepdims=True)
    return np.array([kernel_direction(op, x) for x in X])


def check_pushforward(T: np.ndarray, mu: AmbientDensity, op: ObservationOperator,
                      y: float | np.ndarray, x0: Optional[np.ndarray] = None,
                      step: float = DETERMINISTIC_STEP,
                      tolerance: float = 1e-4) -> ValidationReport:
    """Disintegrating the pushforward T*mu along h(T^-1 .) equals pushing mu^y through T.

    Both sides are built independently: the direct profile of (mu, h, y) and the
    profile of (T*mu, h(T^-1 .), y) on the transformed fiber. The transformed
    profile is pulled back through T with the arc-length stretch |T t(x)|_2 and
    compared against the direct density in sup norm.
    """
    t0 = time.perf_counter()
    T = np.asarray(T, dtype=float)
    Tinv = np.linalg.inv(T)
    if x0 is None:
        x0 = np.ones(op.dim_ambient)
    x_seed = find_seed(op, y, x0)
    tr1 = trace_fiber(op, y, x_seed, step=step, truncate_log_density=mu.log_density)
    prof1 = normalize_on_fiber(mu, op, tr1, "disintegration")

    mu_push = dens.pushforward_density(mu, T)
    op_push = pushforward_operator(op, T)
    tr2 = trace_fiber(op_push, y, T @ x_seed, step=step,
                      truncate_log_density=mu_push.log_density)
    prof2 = normalize_on_fiber(mu_push, op_push, tr2, "disintegration")

    x_back = tr2.nodes @ Tinv.T
    stretch = np.linalg.norm(_unit_tangents(op, x_back) @ T.T, axis=-1)
    pulled_back = prof2.normalized * stretch
    direct = np.exp(np.asarray(mu.log_density(x_back), float)
                    - np.log(np.asarray(gram_det(op.jacobian(x_back)), float))
                    - prof1.log_norm_const)
    sup = float(np.max(np.abs(pulled_back - direct)))
    return _deterministic_report("pushforward", sup, tolerance, tr2.n_nodes, t0, y=float(np.atleast_1d(y)[0]))


def check_equivalent_observations(op: ObservationOperator,
                                  f: Callable[[np.ndarray], np.ndarray],
                                  y: float | np.ndarray,
                                  mu: AmbientDensity,
                                  f_prime: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                                  x0: Optional[np.ndarray] = None,
                                  step: float = DETERMINISTIC_STEP,
                                  tolerance: float = 1e-6,
                                  f_name: str = "f") -> ValidationReport:
    """Observing h or f(h) with strictly increasing smooth f gives the same conditional.

    Both normalized disintegration profiles are evaluated on the same traced
    fiber (it is the same set); the extra Jacobian factor f'(h(x)) is constant
    on the fiber and must cancel in normalization.
    """
    t0 = time.perf_counter()
    if op.dim_obs != 1:
        raise ValueError("equivalent-observations check handles scalar observations")
    if x0 is None:
        x0 = np.ones(op.dim_ambient)
    x_seed = find_seed(op, y, x0)
    tr = trace_fiber(op, y, x_seed, step=step, truncate_log_density=mu.log_density)
    prof1 = normalize_on_fiber(mu, op, tr, "disintegration")
    op_f = compose_scalar(op, f, f_prime, name=f"{f_name}(h)")
    log_unnorm = (np.asarray(mu.log_density(tr.nodes), float)
                  - np.log(np.asarray(gram_det(op_f.jacobian(tr.nodes)), float)))
    prof2 = normalize_values(tr, log_unnorm, "disintegration")
    sup = float(np.max(np.abs(prof1.normalized - prof2.normalized)))
    return _deterministic_report("equivalent_observations", sup, tolerance,
                                 tr.n_nodes, t0, f=f_name, y=float(np.atleast_1d(y)[0]))


def check_bayes_gaussian(cov: np.ndarray, z: float, step: float = DETERMINISTIC_STEP,
                         tolerance: float = 1e-4) -> ValidationReport:
    """Disintegrating N(0, cov) along the projection (t, z) -> z recovers the
    analytic Gaussian conditional N(c12/c22 * z, c11 - c12^2/c22)."""
    t0 = time.perf_counter()
    cov = np.asarray(cov, dtype=float)
    mu = dens.gaussian([0.0, 0.0], cov)
    op = linear_operator([0.0, 1.0])
    cond_mean = cov[0, 1] / cov[1, 1] * z
    cond_var = cov[0, 0] - cov[0, 1] ** 2 / cov[1, 1]
    tr = trace_fiber(op, [z], np.array([cond_mean, z]), step=step,
                     truncate_log_density=mu.log_density)
    prof = normalize_on_fiber(mu, op, tr, "disintegration")
    tvals = tr.nodes[:, 0]
    target = np.exp(-0.5 * (tvals - cond_mean) ** 2 / cond_var) / math.sqrt(2 * math.pi * cond_var)
    sup = float(np.max(np.abs(prof.normalized - target)))
    return _deterministic_report("bayes_gaussian", sup, tolerance, tr.n_nodes, t0,
                                 z=float(z), cond_mean=float(cond_mean),
                                 cond_var=float(cond_var))


def check_dominated(g: Callable[[np.ndarray], np.ndarray], mu: AmbientDensity,
                    op: ObservationOperator, y: float | np.ndarray,
                    x0: Optional[np.ndarray] = None,
                    step: float = DETERMINISTIC_STEP,
                    tolerance: float = 1e-8, g_name: str = "g") -> ValidationReport:
    """Disintegrating the reweighted measure g*mu equals reweighting mu's profile by g.

    Node-wise comparison of the two renormalized profiles on the same trace.
    """
    t0 = time.perf_counter()
    if x0 is None:
        x0 = np.ones(op.dim_ambient)
    x_seed = find_seed(op, y, x0)
    tr = trace_fiber(op, y, x_seed, step=step, truncate_log_density=mu.log_density)
    gvals = np.asarray(g(tr.nodes), dtype=float)
    if np.any(gvals <= 0):
        raise ValueError("weight g must be positive on the fiber")
    prof = normalize_on_fiber(mu, op, tr, "disintegration")
    log_unnorm = (np.asarray(mu.log_density(tr.nodes), float) + np.log(gvals)
                  - np.log(np.asarray(gram_det(op.jacobian(tr.nodes)), float)))
    lhs_profile = normalize_values(tr, log_unnorm, "disintegration").normalized
    w = tr.trapezoid_weights()
    reweighted = prof.normalized * gvals
    rhs_profile = reweighted / float(np.dot(w, reweighted))
    sup = float(np.max(np.abs(lhs_profile - rhs_profile)))
    return _deterministic_report("dominated", sup, tolerance, tr.n_nodes, t0,
                                 g=g_name, y=float(np.atleast_1d(y)[0]))


def check_restriction(predicate: Callable[[np.ndarray], np.ndarray],
                      mu: AmbientDensity, op: ObservationOperator,
                      y: float | np.ndarray, x0: Optional[np.ndarray] = None,
                      step: float = DETERMINISTIC_STEP,
                      tolerance: float = 1e-8, set_name: str = "A") -> ValidationReport:
    """Masking-and-renormalizing mu^y to A equals disintegrating mu restricted to A.

    Compared node-wise on the interior of A with the same masked quadrature on
    both sides; raises ZeroMass when the fiber does not meet A.
    """
    t0 = time.perf_counter()
    if x0 is None:
        x0 = np.ones(op.dim_ambient)
    x_seed = find_seed(op, y, x0)
    tr = trace_fiber(op, y, x_seed, step=step, truncate_log_density=mu.log_density)
    prof = normalize_on_fiber(mu, op, tr, "disintegration")
    w_masked = restrict_to_set(tr, predicate)
    mass = prof.mass(w_masked)
    if mass <= 0.0:
        raise ZeroMass(f"fiber does not intersect the set {set_name!r}")
    lhs_profile = prof.normalized / mass

    # The profile of mu|_A renormalizes the same unnormalized values against the
    # masked quadrature (node values stay unmasked: the crossing interpolation
    # needs the density's inside limit, carried by the boundary-adjacent nodes).
    inside = np.asarray(predicate(tr.nodes), float) > 0.0
    restricted_prof = normalize_values(tr, prof.log_unnorm, "disintegration",
                                       weights=w_masked)
    sup = float(np.max(np.abs(lhs_profile[inside] - restricted_prof.normalized[inside])))
    return _deterministic_report("restriction", sup, tolerance, int(np.sum(inside)), t0,
                                 set=set_name, conditional_mass=mass,
                                 y=float(np.atleast_1d(y)[0]))


# ---------------------------------------------------------------------------
# Canonical suites (used by the CLI and the acceptance tests)
# ---------------------------------------------------------------------------

def product_slice_suite(step: float = DETERMINISTIC_STEP) -> list[ValidationReport]:
    mixture = dens.gaussian_mixture([0.5, 0.5], [[-1.0], [1.0]], [[0.3], [0.3]])
    return [
        check_product_slice(dens.standard_gaussian(1), 0.7, step=step),
        check_product_slice(dens.standard_gaussian(1), 0.0, step=step),
        check_product_slice(mixture, 0.7, step=step),
    ]


def pushforward_suite(mu: AmbientDensity, op: ObservationOperator,
                      y: float = 1.01, step: float = DETERMINISTIC_STEP
                      ) -> list[ValidationReport]:
    from .geometry import sphere_operator
    c, s = math.cos(math.pi / 6), math.sin(math.pi / 6)
    rotation = np.array([[c, -s], [s, c]])
    reports = [
        check_pushforward(np.eye(2), mu, op, y, step=step),
        check_pushforward(np.diag([2.0, 0.5]), mu, op, y, step=step),
        check_pushforward(rotation, dens.standard_gaussian(2), sphere_operator(0.0), 4.0,
                          step=step),
    ]
    return reports


def equivalent_observations_suite(mu: AmbientDensity, op: ObservationOperator,
                                  y: float = 1.01, step: float = DETERMINISTIC_STEP
                                  ) -> list[ValidationReport]:
    return [
        check_equivalent_observations(op, lambda t: t, y, mu,
                                      f_prime=lambda t: np.ones_like(t),
                                      step=step, f_name="identity"),
        check_equivalent_observations(op, lambda t: t ** 3 + t, y, mu,
                                      f_prime=lambda t: 3.0 * t ** 2 + 1.0,
                                      step=step, f_name="t^3+t"),
        check_equivalent_observations(op, np.exp, y, mu, f_prime=np.exp,
                                      step=step, f_name="exp"),
    ]


def dominated_suite(mu: AmbientDensity, op: ObservationOperator, y: float = 1.01,
                    step: float = DETERMINISTIC_STEP) -> list[ValidationReport]:
    return [
        check_dominated(lambda x: np.ones(np.asarray(x).shape[:-1]), mu, op, y,
                        step=step, g_name="1"),
        check_dominated(lambda x: 1.0 + np.asarray(x, float)[..., 0] ** 2, mu, op, y,
                        step=step, g_name="1+x1^2"),
        check_dominated(lambda x: np.exp(np.asarray(x, float)[..., 1]), mu, op, y,
                        step=step, g_name="exp(x2)"),
    ]


def restriction_suite(mu: AmbientDensity, op: ObservationOperator, y: float = 1.01,
                      step: float = DETERMINISTIC_STEP) -> list[ValidationReport]:
    return [
        check_restriction(lambda x: np.ones(np.asarray(x).shape[:-1]), mu, op, y,
                          step=step, set_name="whole_plane"),
        check_restriction(lambda x: np.asarray(x, float)[..., 1], mu, op, y,
                          step=step, set_name="x2_pos"),
        check_restriction(lambda x: 0.25 - np.asarray(x, float)[..., 0], mu, op, y,
                          step=step, set_name="x1_lt_0.25"),
    ]


def bayes_suite(step: float = DETERMINISTIC_STEP) -> list[ValidationReport]:
    return [
        check_bayes_gaussian(np.eye(2), 0.7, step=step),
        check_bayes_gaussian(np.array([[1.0, 0.5], [0.5, 1.0]]), 1.0, step=step),
        check_bayes_gaussian(np.diag([2.0, 3.0]), -1.0, step=step),
    ]


def lemma_suite(mu: AmbientDensity, op: ObservationOperator,
                step: float = DETERMINISTIC_STEP) -> list[ValidationReport]:
    """All deterministic lemma checks on the builtin catalog."""
    return (product_slice_suite(step) + pushforward_suite(mu, op, step=step)
            + equivalent_observations_suite(mu, op, step=step)
            + dominated_suite(mu, op, step=step) + restriction_suite(mu, op, step=step)
            + bayes_suite(step))

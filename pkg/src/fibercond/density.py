"""Ambient, restricted, and disintegration log-densities on observation fibers.

The restricted density of a measure mu on the fiber h^-1({y}) (w.r.t. the
fiber's arc-length volume) is just the ambient Lebesgue density re-read on the
fiber. The disintegration density carries an extra 1/sqrt(det(J J^T)) factor:

    d(mu^y)/d(lambda_fiber)(x)  ~  (d mu/d lambda)(x) / gram_det(Jh(x))

Both are handled in log space throughout; normalization over a traced fiber
uses trapezoid weights and a shifted log-sum, so fibers far from the origin do
not underflow.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Optional, Sequence, TYPE_CHECKING

import numpy as np
from scipy.special import logsumexp

from .errors import ZeroMass
from .geometry import ObservationOperator, gram_det

if TYPE_CHECKING:
    from .fiber import FiberTrace

LOG_2PI = math.log(2.0 * math.pi)

PROFILE_VARIANTS = ("restricted", "disintegration")


@dataclasses.dataclass(frozen=True)
class AmbientDensity:
    """A measure on R^d given by its log Lebesgue density.

    ``log_density`` maps (..., d) arrays to (...,) values in R u {-inf}.
    ``log_density_gradient`` (optional) maps (..., d) to (..., d).
    ``sampler`` (optional) maps (rng, size) to an (size, d) array of i.i.d. draws.
    """

    dim: int
    log_density: Callable[[np.ndarray], np.ndarray]
    log_density_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    sampler: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None
    name: str = ""

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise ValueError("dim must be positive")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.sampler is None:
            raise ValueError(f"density {self.name!r} has no sampler")
        return np.asarray(self.sampler(rng, size), dtype=float).reshape(size, self.dim)


def log_restricted_unnorm(mu: AmbientDensity, x: np.ndarray) -> float | np.ndarray:
    """Unnormalized log density of the (Riemannian) restricted measure: log dmu/dlambda(x)."""
    out = np.asarray(mu.log_density(np.asarray(x, dtype=float)), dtype=float)
    return out if out.ndim else float(out)


def log_disint_unnorm(mu: AmbientDensity, op: ObservationOperator,
                      x: np.ndarray) -> float | np.ndarray:
    """Unnormalized log disintegration density: log dmu/dlambda(x) - log gram_det(Jh(x)).

    Raises RankDeficient at non-regular points.
    """
    x = np.asarray(x, dtype=float)
    lr = np.asarray(mu.log_density(x), dtype=float)
    g = gram_det(op.jacobian(x))
    out = lr - np.log(g)
    return out if np.ndim(out) else float(out)


@dataclasses.dataclass(frozen=True)
class FiberDensityProfile:
    """A normalized density sampled at the nodes of one fiber trace.

    ``normalized`` integrates to 1 against the trace's trapezoid weights;
    ``log_norm_const`` is the log of the unnormalized trapezoid mass.
    """

    trace: "FiberTrace"
    variant: str
    log_unnorm: np.ndarray
    log_norm_const: float
    normalized: np.ndarray

    def mass(self, weights: np.ndarray) -> float:
        """Mass of the profile under externally supplied (possibly masked) weights."""
        return float(np.dot(weights, self.normalized))


def _log_unnorm_values(mu: AmbientDensity, op: ObservationOperator,
                       nodes: np.ndarray, variant: str) -> np.ndarray:
    if variant == "restricted":
        return np.asarray(mu.log_density(nodes), dtype=float)
    if variant == "disintegration":
        return np.asarray(log_disint_unnorm(mu, op, nodes), dtype=float)
    raise ValueError(f"unknown profile variant {variant!r}")


def normalize_on_fiber(mu: AmbientDensity, op: ObservationOperator,
                       trace: "FiberTrace", variant: str) -> FiberDensityProfile:
    """Trapezoid-rule normalization of the restricted or disintegration density on a trace.

    Raises ZeroMass when every node density underflows to zero.
    """
    log_unnorm = _log_unnorm_values(mu, op, trace.nodes, variant)
    return normalize_values(trace, log_unnorm, variant)


def normalize_values(trace: "FiberTrace", log_unnorm: np.ndarray, variant: str,
                     weights: Optional[np.ndarray] = None) -> FiberDensityProfile:
    """Normalize given per-node log values against trapezoid (or supplied) weights."""
    log_unnorm = np.asarray(log_unnorm, dtype=float)
    w = trace.trapezoid_weights() if weights is None else np.asarray(weights, float)
    with np.errstate(divide="ignore"):
        logw = np.where(w > 0, np.log(np.maximum(w, 1e-300)), -np.inf)
    terms = logw + log_unnorm
    if np.all(np.isneginf(terms)):
        raise ZeroMass(f"all node densities underflow for variant {variant!r}")
    log_z = float(logsumexp(terms))
    normalized = np.exp(log_unnorm - log_z)
    return FiberDensityProfile(trace=trace, variant=variant, log_unnorm=log_unnorm,
                               log_norm_const=log_z, normalized=normalized)


def write_profiles_csv(path, trace: "FiberTrace", mu: AmbientDensity,
                       op: ObservationOperator) -> FiberDensityProfile:
    """Write the combined profile CSV for one fiber; returns the disintegration profile.

    Columns: s, x1..xd, log_restricted_unnorm, log_disint_unnorm,
    restricted_norm, disint_norm. Values are %.17g with LF line endings.
    """
    restricted = normalize_on_fiber(mu, op, trace, "restricted")
    disint = normalize_on_fiber(mu, op, trace, "disintegration")
    d = trace.nodes.shape[1]
    header = ["s"] + [f"x{i+1}" for i in range(d)] + [
        "log_restricted_unnorm", "log_disint_unnorm", "restricted_norm", "disint_norm"]
    cols = ([trace.arclen] + [trace.nodes[:, i] for i in range(d)]
            + [restricted.log_unnorm, disint.log_unnorm,
               restricted.normalized, disint.normalized])
    from .ioutil import write_csv_atomic
    write_csv_atomic(path, header, cols)
    return disint


# ---------------------------------------------------------------------------
# Built-in densities
# ---------------------------------------------------------------------------

def standard_gaussian(d: int) -> AmbientDensity:
    """Standard Gaussian N(0, I_d)."""
    const = -0.5 * d * LOG_2PI

    def logpdf(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        return const - 0.5 * np.sum(x * x, axis=-1)

    def grad(x: np.ndarray) -> np.ndarray:
        return -np.asarray(x, float)

    def sampler(rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.standard_normal((size, d))

    return AmbientDensity(d, logpdf, grad, sampler, name="gauss")


def diagonal_gaussian(mean: Sequence[float], stds: Sequence[float]) -> AmbientDensity:
    """Gaussian with independent coordinates, given mean and standard deviations."""
    m = np.asarray(mean, dtype=float)
    s = np.asarray(stds, dtype=float)
    if np.any(s <= 0):
        raise ValueError("standard deviations must be positive")
    d = m.size
    const = -0.5 * d * LOG_2PI - float(np.sum(np.log(s)))

    def logpdf(x: np.ndarray) -> np.ndarray:
        z = (np.asarray(x, float) - m) / s
        return const - 0.5 * np.sum(z * z, axis=-1)

    def grad(x: np.ndarray) -> np.ndarray:
        return -(np.asarray(x, float) - m) / (s * s)

    def sampler(rng: np.random.Generator, size: int) -> np.ndarray:
        return m + s * rng.standard_normal((size, d))

    return AmbientDensity(d, logpdf, grad, sampler, name="diag")


def gaussian(mean: Sequence[float], cov: np.ndarray) -> AmbientDensity:
    """Gaussian with full covariance (SPD) on R^d."""
    m = np.asarray(mean, dtype=float)
    C = np.asarray(cov, dtype=float)
    d = m.size
    L = np.linalg.cholesky(C)
    Linv = np.linalg.inv(L)
    Cinv = np.linalg.inv(C)
    const = -0.5 * d * LOG_2PI - float(np.sum(np.log(np.diag(L))))

    def logpdf(x: np.ndarray) -> np.ndarray:
        dx = np.asarray(x, float) - m
        z = dx @ Linv.T
        return const - 0.5 * np.sum(z * z, axis=-1)

    def grad(x: np.ndarray) -> np.ndarray:
        dx = np.asarray(x, float) - m
        return -np.einsum("ij,...j->...i", Cinv, dx)

    def sampler(rng: np.random.Generator, size: int) -> np.ndarray:
        return m + rng.standard_normal((size, d)) @ L.T

    return AmbientDensity(d, logpdf, grad, sampler, name="gaussian")


def gaussian_mixture(weights: Sequence[float], means: Sequence[Sequence[float]],
                     stds: Sequence[Sequence[float]]) -> AmbientDensity:
    """Mixture of diagonal Gaussians; weights need not be pre-normalized."""
    w = np.asarray(weights, dtype=float)
    M = np.atleast_2d(np.asarray(means, dtype=float))
    S = np.atleast_2d(np.asarray(stds, dtype=float))
    if np.any(w <= 0) or np.any(S <= 0):
        raise ValueError("weights and stds must be positive")
    w = w / w.sum()
    k, d = M.shape
    log_w = np.log(w)
    consts = -0.5 * d * LOG_2PI - np.sum(np.log(S), axis=1)

    def logpdf(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        z = (x[..., None, :] - M) / S
        comp = log_w + consts - 0.5 * np.sum(z * z, axis=-1)
        return logsumexp(comp, axis=-1)

    def grad(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        z = (x[..., None, :] - M) / S
        comp = log_w + consts - 0.5 * np.sum(z * z, axis=-1)
        r = np.exp(comp - logsumexp(comp, axis=-1, keepdims=True))
        return -np.sum(r[..., None] * z / S, axis=-2)

    def sampler(rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.choice(k, size=size, p=w)
        return M[idx] + S[idx] * rng.standard_normal((size, d))

    return AmbientDensity(d, logpdf, grad, sampler, name="mixture")


def product_with_standard_normal(mu2: AmbientDensity) -> AmbientDensity:
    """Product density N(0,1) x mu2 on R^(1+dim(mu2)); used by the product-slice check."""
    d2 = mu2.dim

    def logpdf(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        x1, rest = x[..., 0], x[..., 1:]
        return -0.5 * LOG_2PI - 0.5 * x1 * x1 + np.asarray(mu2.log_density(rest), float)

    grad = None
    if mu2.log_density_gradient is not None:
        def grad(x: np.ndarray) -> np.ndarray:
            x = np.asarray(x, float)
            g = np.empty_like(x)
            g[..., 0] = -x[..., 0]
            g[..., 1:] = mu2.log_density_gradient(x[..., 1:])
            return g

    sampler = None
    if mu2.sampler is not None:
        def sampler(rng: np.random.Generator, size: int) -> np.ndarray:
            first = rng.standard_normal((size, 1))
            rest = np.asarray(mu2.sampler(rng, size), float).reshape(size, d2)
            return np.concatenate([first, rest], axis=1)

    return AmbientDensity(1 + d2, logpdf, grad, sampler, name=f"N(0,1)x{mu2.name}")


def reweighted(mu: AmbientDensity, log_weight: Callable[[np.ndarray], np.ndarray],
               name: str = "") -> AmbientDensity:
    """Density proportional to exp(log_weight(x)) * dmu/dlambda(x) (not renormalized)."""
    def logpdf(x: np.ndarray) -> np.ndarray:
        return np.asarray(mu.log_density(x), float) + np.asarray(log_weight(x), float)

    return AmbientDensity(mu.dim, logpdf, name=name or f"reweighted({mu.name})")


def pushforward_density(mu: AmbientDensity, T: np.ndarray) -> AmbientDensity:
    """Density of the pushforward of mu under the linear map x -> T x."""
    T = np.asarray(T, dtype=float)
    Tinv = np.linalg.inv(T)
    log_det = float(np.log(abs(np.linalg.det(T))))

    def logpdf(z: np.ndarray) -> np.ndarray:
        return np.asarray(mu.log_density(np.asarray(z, float) @ Tinv.T), float) - log_det

    grad = None
    if mu.log_density_gradient is not None:
        def grad(z: np.ndarray) -> np.ndarray:
            g = np.asarray(mu.log_density_gradient(np.asarray(z, float) @ Tinv.T), float)
            return g @ Tinv

    sampler = None
    if mu.sampler is not None:
        def sampler(rng: np.random.Generator, size: int) -> np.ndarray:
            return np.asarray(mu.sampler(rng, size), float) @ T.T

    return AmbientDensity(mu.dim, logpdf, grad, sampler, name=f"pushforward({mu.name})")


def density_from_spec(spec: str, dim: int) -> AmbientDensity:
    """Build a catalog density from a CLI spec string.

    Recognized forms:
      - ``gauss``                              standard Gaussian N(0, I)
      - ``diag:s1,s2,...``                     centered Gaussian with given stds
      - ``mix:w@m1,..,md@s;w@m1,..,md@s;...``  mixture of isotropic Gaussians
    """
    head, _, arg = spec.partition(":")
    head = head.strip()
    try:
        if head == "gauss":
            return standard_gaussian(dim)
        if head == "diag":
            stds = [float(v) for v in arg.split(",")]
            if len(stds) != dim:
                raise ValueError(f"expected {dim} stds, got {len(stds)}")
            return diagonal_gaussian([0.0] * dim, stds)
        if head == "mix":
            weights, means, stds = [], [], []
            for comp in arg.split(";"):
                w, m, s = comp.split("@")
                weights.append(float(w))
                mean = [float(v) for v in m.split(",")]
                if len(mean) != dim:
                    raise ValueError(f"component mean must have {dim} entries")
                means.append(mean)
                stds.append([float(s)] * dim)
            return gaussian_mixture(weights, means, stds)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad density spec {spec!r}: {exc}") from exc
    raise ValueError(f"unknown density {spec!r} (expected gauss|diag|mix)")

"""Jacobians, kernel/normal splits, and Gram-determinant factors for observation maps on R^d.

An observation operator is a smooth map h: R^d -> R^n with n < d. The quantity
driving everything downstream is the Gram determinant sqrt(det(J J^T)) of its
Jacobian J, which equals |det(J restricted to the orthogonal complement of
ker J)|; its inverse is the corrective factor that turns a restricted density
into a disintegration density.

All operations accept batched points: ``x`` may have shape ``(d,)`` or
``(..., d)`` and results broadcast accordingly.
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NonFinite, RankDeficient

DEFAULT_FD_STEP = 1e-6
DEFAULT_RANK_TOL = 1e-8


@dataclasses.dataclass(frozen=True)
class ObservationOperator:
    """Map h: R^d -> R^n (n < d) with optional analytic Jacobian.

    ``eval_fn`` maps arrays of shape (..., d) to (..., n); ``jacobian_analytic``
    maps (..., d) to (..., n, d). When no analytic Jacobian is supplied,
    ``jacobian`` falls back to central finite differences with per-coordinate
    step ``fd_step * max(1, |x_i|)``.
    """

    dim_ambient: int
    dim_obs: int
    eval_fn: Callable[[np.ndarray], np.ndarray]
    jacobian_analytic: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fd_step: float = DEFAULT_FD_STEP
    name: str = ""

    def __post_init__(self) -> None:
        if self.dim_ambient <= 0 or self.dim_obs <= 0:
            raise ValueError("dimensions must be positive")
        if self.dim_obs >= self.dim_ambient:
            # n = d would make fibers 0-dimensional; rejected by design.
            raise ValueError(
                f"dim_obs must be < dim_ambient, got n={self.dim_obs}, d={self.dim_ambient}"
            )
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.asarray(self.eval_fn(x), dtype=float)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """n x d Jacobian at x (batched: (..., n, d)); analytic if available, else central FD."""
        x = np.asarray(x, dtype=float)
        if not np.isfinite(x).all():
            raise NonFinite(f"non-finite point passed to jacobian: {x!r}")
        if self.jacobian_analytic is not None:
            J = np.asarray(self.jacobian_analytic(x), dtype=float)
        else:
            J = self._fd_jacobian(x)
        if not np.isfinite(J).all():
            raise NonFinite("Jacobian evaluation produced NaN/Inf")
        return J

    def _fd_jacobian(self, x: np.ndarray) -> np.ndarray:
        d = self.dim_ambient
        steps = self.fd_step * np.maximum(1.0, np.abs(x))
        cols = []
        for i in range(d):
            e = np.zeros(d)
            e[i] = 1.0
            hi = steps[..., i][..., None]
            fp = self.eval_fn(x + hi * e)
            fm = self.eval_fn(x - hi * e)
            cols.append((np.asarray(fp, float) - np.asarray(fm, float)) / (2.0 * steps[..., i][..., None]))
        J = np.stack(cols, axis=-1)
        if not np.all(np.isfinite(J)):
            raise NonFinite("eval returned NaN/Inf near the probed point")
        return J


@dataclasses.dataclass(frozen=True)
class JacobianDecomposition:
    """SVD-based split of an n x d Jacobian into kernel and normal (row-space) bases."""

    J: np.ndarray
    singular_values: np.ndarray  # (n,), nonincreasing
    kernel_basis: np.ndarray     # (d, d-n), orthonormal columns spanning ker J
    normal_basis: np.ndarray     # (d, n), orthonormal columns spanning (ker J)^perp


def decompose(J: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> JacobianDecomposition:
    """Split J into kernel/normal orthonormal bases via SVD.

    Raises RankDeficient if sigma_min <= rank_tol * sigma_max, signalling a
    non-regular point.
    """
    J = np.atleast_2d(np.asarray(J, dtype=float))
    if not np.all(np.isfinite(J)):
        raise NonFinite("decompose requires a finite matrix")
    n, d = J.shape
    if n >= d:
        raise ValueError(f"expected a wide matrix (n < d), got shape {J.shape}")
    U, s, Vt = np.linalg.svd(J, full_matrices=True)
    if s[0] == 0.0 or s[-1] <= rank_tol * s[0]:
        raise RankDeficient(
            f"sigma_min={s[-1]:.3e} <= rank_tol*sigma_max={rank_tol * s[0]:.3e}"
        )
    return JacobianDecomposition(
        J=J,
        singular_values=s,
        kernel_basis=Vt[n:].T,
        normal_basis=Vt[:n].T,
    )


def gram_det(J: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> float | np.ndarray:
    """sqrt(det(J J^T)) = product of singular values = |det(J restricted to (ker J)^perp)|.

    Accepts a single (n, d) matrix or a batch (..., n, d); raises RankDeficient
    if any matrix in the batch fails the relative rank test. For n = 1 this is
    exactly the Euclidean norm of the gradient row.
    """
    J = np.asarray(J, dtype=float)
    if J.ndim == 1:
        J = J[None, :]
    n = J.shape[-2]
    if n == 1:
        if J.ndim == 2:  # single matrix: identical rounding to norm(row)
            out = np.linalg.norm(J[0])
        else:
            out = np.linalg.norm(J[..., 0, :], axis=-1)
        if np.any(out == 0.0):
            raise RankDeficient("zero gradient row")
        return out if np.ndim(out) else float(out)
    s = np.linalg.svd(J, compute_uv=False)
    if np.any(s[..., -1] <= rank_tol * s[..., 0]):
        raise RankDeficient("rank-deficient Jacobian in gram_det")
    out = np.prod(s, axis=-1)
    return out if out.ndim else float(out)


def corrective_factor(op: ObservationOperator, x: np.ndarray,
                      rank_tol: float = DEFAULT_RANK_TOL) -> float | np.ndarray:
    """Inverse Gram determinant 1/sqrt(det(J J^T)) at x; the restricted-to-disintegration multiplier."""
    g = gram_det(op.jacobian(x), rank_tol=rank_tol)
    return 1.0 / g


def is_regular_point(op: ObservationOperator, x: np.ndarray,
                     rank_tol: float = DEFAULT_RANK_TOL) -> bool:
    """True iff sigma_min(J(x)) > rank_tol * max(1, sigma_max(J(x))).

    Returns False (instead of raising) when the Jacobian cannot be evaluated
    finitely at x.
    """
    try:
        J = op.jacobian(np.asarray(x, dtype=float))
    except NonFinite:
        return False
    s = np.linalg.svd(np.atleast_2d(J), compute_uv=False)
    return bool(s[-1] > rank_tol * max(1.0, s[0]))


def kernel_direction(op: ObservationOperator, x: np.ndarray,
                     prev: Optional[np.ndarray] = None,
                     rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Unit vector spanning ker J(x) for the curve case d - n = 1.

    For d = 2 this is the 90-degree counterclockwise rotation of the gradient
    (deterministic seed orientation); in higher dimensions the kernel vector
    comes from the SVD with its largest-magnitude component made positive.
    When ``prev`` is given, the sign is chosen to align with it instead
    (orientation continuity along a trace).
    """
    if op.dim_ambient - op.dim_obs != 1:
        raise ValueError("kernel_direction requires d - n = 1")
    J = op.jacobian(x)
    if op.dim_ambient == 2:
        g0, g1 = float(J[0, 0]), float(J[0, 1])
        nrm = np.hypot(g0, g1)
        if nrm <= rank_tol * max(1.0, nrm):
            raise RankDeficient("zero gradient; no tangent direction")
        t = np.array([-g1 / nrm, g0 / nrm])
    else:
        dec = decompose(J, rank_tol=rank_tol)
        t = dec.kernel_basis[:, 0]
        k = int(np.argmax(np.abs(t)))
        if t[k] < 0:
            t = -t
    if prev is not None and float(np.dot(t, prev)) < 0.0:
        t = -t
    return t


# ---------------------------------------------------------------------------
# Built-in operator catalog (names consumed by the CLI)
# ---------------------------------------------------------------------------

def coordinate_projection(d: int = 2, index: int = 0) -> ObservationOperator:
    """h(x) = x_index on R^d."""
    def ev(x: np.ndarray) -> np.ndarray:
        return np.asarray(x, float)[..., index:index + 1]

    def jac(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        J = np.zeros(x.shape[:-1] + (1, d))
        J[..., 0, index] = 1.0
        return J

    return ObservationOperator(d, 1, ev, jac, name=f"coord{index + 1}")


def linear_operator(coeffs: Sequence[float]) -> ObservationOperator:
    """h(x) = a . x for a fixed coefficient row a."""
    a = np.asarray(coeffs, dtype=float)
    d = a.size

    def ev(x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, float) @ a)[..., None]

    def jac(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        return np.broadcast_to(a, x.shape[:-1] + (1, d)).copy()

    return ObservationOperator(d, 1, ev, jac, name="linear:" + ",".join(repr(c) for c in a))


def ellipse_operator(a: float, b: float) -> ObservationOperator:
    """Quadratic form h(x) = x1^2/a^2 + x2^2/b^2 on R^2; fibers are axis-aligned ellipses."""
    ia2, ib2 = 1.0 / a**2, 1.0 / b**2

    def ev(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        return (x[..., 0] ** 2 * ia2 + x[..., 1] ** 2 * ib2)[..., None]

    def jac(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        J = np.empty(x.shape[:-1] + (1, 2))
        J[..., 0, 0] = 2.0 * ia2 * x[..., 0]
        J[..., 0, 1] = 2.0 * ib2 * x[..., 1]
        return J

    return ObservationOperator(2, 1, ev, jac, name=f"ellipse:{a!r},{b!r}")


def sphere_operator(offset: float = 0.0, d: int = 2) -> ObservationOperator:
    """h(x) = |x|_2^2 - offset on R^d; fibers are centered spheres."""
    def ev(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        return (np.sum(x * x, axis=-1) - offset)[..., None]

    def jac(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        return 2.0 * x[..., None, :]

    return ObservationOperator(d, 1, ev, jac, name=f"sphere:{offset!r}")


def compose_scalar(op: ObservationOperator, f: Callable[[np.ndarray], np.ndarray],
                   f_prime: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                   name: str = "") -> ObservationOperator:
    """Composition f(h(x)) of a scalar operator with a smooth scalar map f.

    The analytic Jacobian f'(h(x)) * Jh(x) is used when both the base operator
    Jacobian and ``f_prime`` are available.
    """
    if op.dim_obs != 1:
        raise ValueError("compose_scalar requires a scalar operator (n = 1)")

    def ev(x: np.ndarray) -> np.ndarray:
        return f(op.eval_fn(x))

    jac = None
    if op.jacobian_analytic is not None and f_prime is not None:
        def jac(x: np.ndarray) -> np.ndarray:
            h = np.asarray(op.eval_fn(x), float)[..., 0]
            return np.asarray(f_prime(h), float)[..., None, None] * op.jacobian_analytic(x)

    return ObservationOperator(op.dim_ambient, 1, ev, jac, fd_step=op.fd_step,
                               name=name or f"composed({op.name})")


def pushforward_operator(op: ObservationOperator, T: np.ndarray) -> ObservationOperator:
    """Observation map z -> h(T^-1 z) seen by the pushforward of a measure under x -> T x."""
    T = np.asarray(T, dtype=float)
    Tinv = np.linalg.inv(T)

    def ev(z: np.ndarray) -> np.ndarray:
        return op.eval_fn(np.asarray(z, float) @ Tinv.T)

    jac = None
    if op.jacobian_analytic is not None:
        def jac(z: np.ndarray) -> np.ndarray:
            return op.jacobian_analytic(np.asarray(z, float) @ Tinv.T) @ Tinv

    return ObservationOperator(op.dim_ambient, op.dim_obs, ev, jac, fd_step=op.fd_step,
                               name=f"pushforward({op.name})")


def operator_from_spec(spec: str) -> ObservationOperator:
    """Build a catalog operator from a CLI spec string.

    Recognized forms:
      - ``coord1`` or ``coord1:<d>``        projection onto the first coordinate
      - ``linear:a,b,...``                  fixed linear functional
      - ``ellipse:a,b``                     quadratic form x1^2/a^2 + x2^2/b^2
      - ``sphere:<offset>`` / ``sphere:<offset>,<d>``   |x|^2 - offset
    """
    head, _, arg = spec.partition(":")
    head = head.strip()
    try:
        if head == "coord1":
            return coordinate_projection(int(arg) if arg else 2)
        if head == "linear":
            coeffs = [float(v) for v in arg.split(",") if v != ""]
            if len(coeffs) < 2:
                raise ValueError("linear operator needs at least 2 coefficients")
            return linear_operator(coeffs)
        if head == "ellipse":
            a, b = (float(v) for v in arg.split(","))
            return ellipse_operator(a, b)
        if head == "sphere":
            parts = [float(v) for v in arg.split(",")] if arg else [0.0]
            d = int(parts[1]) if len(parts) > 1 else 2
            return sphere_operator(parts[0], d)
    except RankDeficient:
        raise
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad operator spec {spec!r}: {exc}") from exc
    raise ValueError(f"unknown operator {spec!r} (expected coord1|linear|ellipse|sphere)")

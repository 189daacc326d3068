"""Velocity fields, one-step transforms, and log-determinant bookkeeping.

A :class:`VelocityField` is an immutable snapshot built from the current
leader particles: evaluating it anywhere is an average of kernel-smoothed
scores plus kernel gradients over the leaders.  Each transport step is
``y -> y + eps * phi(y)``; the density of a transported point changes by
``-log |det(I + eps * J)|`` where ``J`` is the field's Jacobian at the
pre-update position.

All determinant bookkeeping happens in the log domain: a run can take
thousands of steps and raw determinant products would under/overflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "StepSchedule",
    "VelocityField",
    "apply_step",
    "log_det_exact",
    "log_det_approx",
    "SingularMapError",
    "DeterminantApproxError",
]

# Evaluation is chunked so the (leaders x points x dim) difference tensor
# stays below ~128 MB regardless of ensemble size.  Chunking never changes
# results: each output row only reduces over leaders.
_MAX_BLOCK_ELEMS = 1 << 24


class SingularMapError(RuntimeError):
    """I + eps*J is exactly singular; the step size is too large."""

    def __init__(self, message: str, iteration: int | None = None, index: int | None = None):
        super().__init__(message)
        self.iteration = iteration
        self.index = index


class DeterminantApproxError(ValueError):
    """A diagonal factor 1 + eps*a_kk is nonpositive; use the exact path."""


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes eps_l = alpha / (1 + l)^beta.

    ``alpha=0`` gives the identity map at every step, which is occasionally
    useful in tests; real runs use alpha > 0.
    """

    alpha: float
    beta: float = 0.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")

    def step(self, iteration: int) -> float:
        return self.alpha / (1.0 + iteration) ** self.beta


def _blocks(n: int, per_point_elems: int):
    block = max(1, min(n, _MAX_BLOCK_ELEMS // max(1, per_point_elems)))
    for start in range(0, n, block):
        yield start, min(n, start + block)


@dataclass(frozen=True)
class VelocityField:
    """Snapshot of the transport field built from fixed leader particles.

    phi(y) = (1/|A|) sum_j [ s_j k(x_j, y) + grad_{x_j} k(x_j, y) ]

    where x_j are the leaders, s_j their target scores, and k the RBF kernel
    with the stored bandwidth.  Evaluation, Jacobians, and steps are pure
    functions of the snapshot.
    """

    leaders: np.ndarray
    leader_scores: np.ndarray
    bandwidth: float

    def __post_init__(self):
        leaders = np.atleast_2d(np.asarray(self.leaders, dtype=float))
        scores = np.atleast_2d(np.asarray(self.leader_scores, dtype=float))
        if scores.shape != leaders.shape:
            raise ValueError("leader_scores must match leaders in shape")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        object.__setattr__(self, "leaders", leaders)
        object.__setattr__(self, "leader_scores", scores)

    @property
    def dim(self) -> int:
        return self.leaders.shape[1]

    def _kernel(self, block: np.ndarray) -> np.ndarray:
        """Kernel matrix k(x_j, y_i) of shape (m, len(block)).

        Squared distances accumulate per coordinate from explicit
        differences, so they stay exact and nonnegative without a 3-d
        difference tensor.
        """
        m = self.leaders.shape[0]
        r2 = np.zeros((m, block.shape[0]))
        for a in range(self.leaders.shape[1]):
            diff = self.leaders[:, a][:, None] - block[:, a][None, :]
            r2 += diff * diff
        r2 /= -self.bandwidth
        return np.exp(r2, out=r2)

    def velocity(self, points: np.ndarray) -> np.ndarray:
        """Field value at each point, shape matching the input."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        m, d = self.leaders.shape
        h = self.bandwidth
        # All leader reductions are right-multiplications by k, so the sums
        # over leaders become a single matrix product.
        rhs = np.concatenate([self.leader_scores, self.leaders], axis=1)
        out = np.empty_like(pts)
        for lo, hi in _blocks(pts.shape[0], m * d):
            block = pts[lo:hi]
            k = self._kernel(block)
            red = k.T @ rhs
            ksum = k.sum(axis=0)
            out[lo:hi] = (
                red[:, :d] - (2.0 / h) * (red[:, d:] - block * ksum[:, None])
            ) / m
        return out[0] if single else out

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        """Spatial Jacobian of the field: (n, d, d), or (d, d) for one point."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        m, d = self.leaders.shape
        h = self.bandwidth
        leaders, scores = self.leaders, self.leader_scores
        outer_sx = (scores[:, :, None] * leaders[:, None, :]).reshape(m, d * d)
        outer_xx = (leaders[:, :, None] * leaders[:, None, :]).reshape(m, d * d)
        rhs = np.concatenate([scores, leaders, outer_sx, outer_xx], axis=1)
        eye = np.eye(d)
        out = np.empty((pts.shape[0], d, d))
        for lo, hi in _blocks(pts.shape[0], m * d):
            block = pts[lo:hi]
            n = block.shape[0]
            k = self._kernel(block)
            red = k.T @ rhs
            ksum = k.sum(axis=0)
            k_s = red[:, :d]
            k_x = red[:, d: 2 * d]
            k_sx = red[:, 2 * d: 2 * d + d * d].reshape(n, d, d)
            k_xx = red[:, 2 * d + d * d:].reshape(n, d, d)
            # sum_j k s_j (x_j - y)^T and sum_j k (x_j - y)(x_j - y)^T,
            # expanded around the evaluation point.
            term_score = k_sx - k_s[:, :, None] * block[:, None, :]
            term_curv = (
                k_xx
                - block[:, :, None] * k_x[:, None, :]
                - k_x[:, :, None] * block[:, None, :]
                + (block[:, :, None] * block[:, None, :]) * ksum[:, None, None]
            )
            out[lo:hi] = (
                (2.0 / h) * term_score
                + (2.0 / h) * ksum[:, None, None] * eye
                - (4.0 / (h * h)) * term_curv
            ) / m
        return out[0] if single else out

    def _diag_terms(self, block, k, k_s, k_sx, k_xx, k_x, ksum):
        h = self.bandwidth
        m = self.leaders.shape[0]
        term_score = k_sx - block * k_s
        term_curv = k_xx - 2.0 * block * k_x + block * block * ksum[:, None]
        return (
            (2.0 / h) * term_score
            + (2.0 / h) * ksum[:, None]
            - (4.0 / (h * h)) * term_curv
        ) / m

    def jacobian_diagonal(self, points: np.ndarray) -> np.ndarray:
        """Diagonal of the Jacobian only; O(d) per point instead of O(d^2)."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        m, d = self.leaders.shape
        rhs = np.concatenate(
            [
                self.leader_scores,
                self.leaders,
                self.leader_scores * self.leaders,
                self.leaders * self.leaders,
            ],
            axis=1,
        )
        out = np.empty_like(pts)
        for lo, hi in _blocks(pts.shape[0], m * d):
            block = pts[lo:hi]
            k = self._kernel(block)
            red = k.T @ rhs
            ksum = k.sum(axis=0)
            out[lo:hi] = self._diag_terms(
                block, k, red[:, :d], red[:, 2 * d: 3 * d], red[:, 3 * d:],
                red[:, d: 2 * d], ksum,
            )
        return out[0] if single else out

    def velocity_and_jacobian_diagonal(self, points: np.ndarray):
        """Both quantities from one pass over the kernel matrix."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        m, d = self.leaders.shape
        h = self.bandwidth
        rhs = np.concatenate(
            [
                self.leader_scores,
                self.leaders,
                self.leader_scores * self.leaders,
                self.leaders * self.leaders,
            ],
            axis=1,
        )
        vel = np.empty_like(pts)
        diag = np.empty_like(pts)
        for lo, hi in _blocks(pts.shape[0], m * d):
            block = pts[lo:hi]
            k = self._kernel(block)
            red = k.T @ rhs
            ksum = k.sum(axis=0)
            k_s, k_x = red[:, :d], red[:, d: 2 * d]
            vel[lo:hi] = (k_s - (2.0 / h) * (k_x - block * ksum[:, None])) / m
            diag[lo:hi] = self._diag_terms(
                block, k, k_s, red[:, 2 * d: 3 * d], red[:, 3 * d:], k_x, ksum
            )
        return vel, diag


def apply_step(points: np.ndarray, field: VelocityField, epsilon: float) -> np.ndarray:
    """Move each row through y -> y + eps * phi(y); rows are independent."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    points = np.asarray(points, dtype=float)
    if epsilon == 0.0:
        return points.copy()
    return points + epsilon * field.velocity(points)


def log_det_exact(jacobian: np.ndarray, epsilon: float) -> np.ndarray | float:
    """log |det(I + eps*J)| via pivoted factorization.

    Accepts a single (d, d) Jacobian or a stack (..., d, d).  An exactly
    singular transform raises :class:`SingularMapError`: the density
    recursion has no value there and the remedy is a smaller step.
    """
    jac = np.asarray(jacobian, dtype=float)
    d = jac.shape[-1]
    mat = np.eye(d) + epsilon * jac
    sign, logdet = np.linalg.slogdet(mat)
    if np.any(sign == 0):
        raise SingularMapError(
            "I + eps*J is singular; the step size is too large for an invertible map"
        )
    return float(logdet) if jac.ndim == 2 else logdet


def log_det_approx(jacobian_diagonal: np.ndarray, epsilon: float) -> np.ndarray | float:
    """First-order determinant surrogate sum_k log(1 + eps * a_kk).

    Exact for diagonal Jacobians and accurate to O(eps^2) otherwise.  If any
    factor 1 + eps*a_kk is nonpositive the expansion is meaningless and
    :class:`DeterminantApproxError` signals that the caller should fall back
    to the exact computation.
    """
    diag = np.asarray(jacobian_diagonal, dtype=float)
    factors = 1.0 + epsilon * diag
    if np.any(factors <= 0):
        raise DeterminantApproxError(
            "nonpositive diagonal factor; fall back to the exact determinant"
        )
    out = np.sum(np.log(factors), axis=-1)
    return float(out) if diag.ndim == 1 else out

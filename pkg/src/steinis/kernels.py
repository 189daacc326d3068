"""RBF kernel evaluations, bandwidth selection, and the score-augmented kernel.

All kernels here are squared-exponential, ``k(x, x') = exp(-||x - x'||^2 / h)``
with a single scalar bandwidth ``h``.  The score-augmented kernel combines
``k`` with the score function of an unnormalized density and is the building
block for discrepancy estimates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "KernelSpec",
    "rbf_eval",
    "rbf_grad_first",
    "rbf_matrix",
    "pairwise_diffs",
    "median_bandwidth",
    "stein_kernel",
    "stein_kernel_matrix",
    "DegenerateParticlesWarning",
]


class DegenerateParticlesWarning(UserWarning):
    """All particles coincide; the median heuristic has no pairwise distance."""


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus bandwidth policy.

    ``bandwidth=None`` selects the median heuristic (recomputed from whatever
    particle set is passed to :meth:`resolve_bandwidth`); a float fixes it.
    """

    family: str = "rbf"
    bandwidth: float | None = None

    def __post_init__(self):
        if self.family != "rbf":
            raise ValueError(f"unsupported kernel family: {self.family!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("fixed bandwidth must be positive")

    def resolve_bandwidth(self, points: np.ndarray, n_leaders: int | None = None) -> float:
        """Return the bandwidth to use for the given particle set."""
        if self.bandwidth is not None:
            return float(self.bandwidth)
        points = np.asarray(points, dtype=float)
        if n_leaders is None:
            n_leaders = points.shape[0]
        return median_bandwidth(points, n_leaders)


def _check_pair(x: np.ndarray, x_prime: np.ndarray, h: float):
    x = np.asarray(x, dtype=float)
    x_prime = np.asarray(x_prime, dtype=float)
    if x.shape != x_prime.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {x_prime.shape}")
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    return x, x_prime


def rbf_eval(x: np.ndarray, x_prime: np.ndarray, h: float) -> float:
    """Evaluate exp(-||x - x'||^2 / h) for a single pair of points."""
    x, x_prime = _check_pair(x, x_prime, h)
    diff = x - x_prime
    return float(np.exp(-np.dot(diff, diff) / h))


def rbf_grad_first(x: np.ndarray, x_prime: np.ndarray, h: float) -> np.ndarray:
    """Gradient of the RBF kernel with respect to its first argument.

    Equals ``-(2/h) (x - x') k(x, x')`` and is antisymmetric under swapping
    the arguments.
    """
    x, x_prime = _check_pair(x, x_prime, h)
    diff = x - x_prime
    return -(2.0 / h) * diff * np.exp(-np.dot(diff, diff) / h)


def pairwise_diffs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All pairwise differences a_i - b_j, shape (len(a), len(b), d)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    return a[:, None, :] - b[None, :, :]


def rbf_matrix(a: np.ndarray, b: np.ndarray, h: float) -> np.ndarray:
    """Kernel matrix k(a_i, b_j), shape (len(a), len(b))."""
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    diffs = pairwise_diffs(a, b)
    return np.exp(-np.sum(diffs * diffs, axis=-1) / h)


def median_bandwidth(points: np.ndarray, n_leaders: int) -> float:
    """Median-heuristic bandwidth med^2 / (2 log(n_leaders + 1)).

    ``med`` is the median of the n(n-1)/2 pairwise Euclidean distances of
    ``points`` (strict upper triangle; self-distances excluded).  If every
    point coincides the heuristic is undefined; we fall back to 1.0 and emit
    :class:`DegenerateParticlesWarning` so the caller can keep iterating.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    if n < 2:
        raise ValueError("median heuristic needs at least two points")
    if not n_leaders > 0:
        raise ValueError("n_leaders must be positive")
    # Squared distances accumulate per coordinate from explicit differences;
    # rounding cannot push them negative, so no clamping is needed.
    sq = np.zeros((n, n))
    for a in range(points.shape[1]):
        diff = points[:, a][:, None] - points[:, a][None, :]
        sq += diff * diff
    iu = np.triu_indices(n, k=1)
    med = float(np.median(np.sqrt(sq[iu])))
    if med == 0.0:
        warnings.warn(
            "all particles identical; falling back to bandwidth 1.0",
            DegenerateParticlesWarning,
        )
        return 1.0
    return med * med / (2.0 * np.log(n_leaders + 1.0))


def stein_kernel(
    x: np.ndarray,
    x_prime: np.ndarray,
    score_x: np.ndarray,
    score_x_prime: np.ndarray,
    h: float,
) -> float:
    """Score-augmented RBF kernel for a single pair of points.

    For scores s, s' evaluated at x, x':

        kappa(x, x') = s^T s' k + s^T grad_{x'} k + s'^T grad_x k
                       + div_x(grad_{x'} k)

    with every derivative of the RBF kernel in closed form.  Symmetric in
    (x, s) <-> (x', s').
    """
    x, x_prime = _check_pair(x, x_prime, h)
    score_x = np.asarray(score_x, dtype=float)
    score_x_prime = np.asarray(score_x_prime, dtype=float)
    if score_x.shape != x.shape or score_x_prime.shape != x.shape:
        raise ValueError("score dimensions must match the points")
    d = x.shape[-1] if x.ndim else 1
    diff = x - x_prime
    r2 = float(np.dot(diff, diff))
    k = np.exp(-r2 / h)
    cross = float(np.dot(diff, score_x - score_x_prime))
    return float(
        k
        * (
            np.dot(score_x, score_x_prime)
            + (2.0 / h) * cross
            + 2.0 * d / h
            - 4.0 * r2 / (h * h)
        )
    )


def stein_kernel_rows(
    points_a: np.ndarray,
    scores_a: np.ndarray,
    points_b: np.ndarray,
    scores_b: np.ndarray,
    h: float,
) -> np.ndarray:
    """Block of kappa(a_i, b_j) values, shape (len(a), len(b)).

    Distances come from explicit differences (full precision, never negative
    from rounding).  Memory is O(len(a) * len(b) * d); callers with very
    large point sets should pass row blocks for ``a``.
    """
    points_a = np.atleast_2d(np.asarray(points_a, dtype=float))
    points_b = np.atleast_2d(np.asarray(points_b, dtype=float))
    scores_a = np.atleast_2d(np.asarray(scores_a, dtype=float))
    scores_b = np.atleast_2d(np.asarray(scores_b, dtype=float))
    if scores_a.shape != points_a.shape or scores_b.shape != points_b.shape:
        raise ValueError("scores must have the same shape as their points")
    if points_a.shape[1] != points_b.shape[1]:
        raise ValueError("dimension mismatch between point sets")
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    d = points_a.shape[1]
    diffs = points_a[:, None, :] - points_b[None, :, :]
    r2 = np.sum(diffs * diffs, axis=-1)
    k = np.exp(-r2 / h)
    gram_ss = scores_a @ scores_b.T
    cross = np.einsum("ijd,id->ij", diffs, scores_a) - np.einsum(
        "ijd,jd->ij", diffs, scores_b
    )
    return k * (gram_ss + (2.0 / h) * cross + 2.0 * d / h - (4.0 / (h * h)) * r2)


def stein_kernel_matrix(points: np.ndarray, scores: np.ndarray, h: float) -> np.ndarray:
    """Matrix kappa(x_i, x_j) over one point set, shape (n, n)."""
    return stein_kernel_rows(points, scores, points, scores, h)

"""Unnormalized target densities with analytic scores, plus exact oracles.

Every target exposes three things: ``dim``, ``log_unnormalized(x)`` and
``score(x)``.  Both evaluation methods accept a single point of shape (d,)
or a batch of shape (n, d) and return a scalar / (n,) array or a matching
(d,) / (n, d) array.  Targets are immutable after construction and safe to
evaluate concurrently.

The closed-form oracles (mixture moments, the enumerated hidden-unit
partition function) exist so experiments can be checked against ground
truth without Monte Carlo.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "DiagonalGaussian",
    "GenericTarget",
    "GmmTarget",
    "RbmTarget",
    "TransformedGmmTarget",
    "Coordinate",
    "SquaredCoordinate",
    "CosineMoment",
    "random_gmm",
    "random_rbm",
    "rbm_from_file",
    "target_from_distribution",
    "scaled_target",
]

_LOG_2PI = np.log(2.0 * np.pi)


def _as_batch(x: np.ndarray, dim: int) -> tuple[np.ndarray, bool]:
    """Coerce (d,) or (n, d) input to (n, d); report whether it was a single point."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.shape[0] != dim:
            raise ValueError(f"expected dimension {dim}, got {x.shape[0]}")
        return x[None, :], True
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"expected shape (n, {dim}), got {x.shape}")
    return x, False


@dataclass(frozen=True)
class DiagonalGaussian:
    """Gaussian with diagonal covariance; the built-in initial distribution.

    Supports exact sampling, exact log-density, and the score, which is all
    the transport and baseline machinery needs from a starting distribution.
    """

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        std = np.broadcast_to(np.asarray(self.std, dtype=float), mean.shape).copy()
        if np.any(std <= 0):
            raise ValueError("std must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mean + self.std * rng.standard_normal((n, self.dim))

    def log_density(self, x: np.ndarray) -> np.ndarray:
        xb, single = _as_batch(x, self.dim)
        z = (xb - self.mean) / self.std
        out = -0.5 * np.sum(z * z, axis=1) - 0.5 * self.dim * _LOG_2PI - np.sum(
            np.log(self.std)
        )
        return float(out[0]) if single else out

    # Alias so a DiagonalGaussian can stand in as a (normalized) target.
    def log_unnormalized(self, x: np.ndarray) -> np.ndarray:
        return self.log_density(x)

    def score(self, x: np.ndarray) -> np.ndarray:
        xb, single = _as_batch(x, self.dim)
        out = -(xb - self.mean) / (self.std * self.std)
        return out[0] if single else out


@dataclass(frozen=True)
class GenericTarget:
    """Target defined by arbitrary log-density and score callables.

    The callables must accept (n, d) batches.  Useful for wrapping known
    distributions in tests and for rescaled variants.
    """

    dim: int
    log_unnormalized_fn: Callable[[np.ndarray], np.ndarray]
    score_fn: Callable[[np.ndarray], np.ndarray]

    def log_unnormalized(self, x: np.ndarray) -> np.ndarray:
        return self.log_unnormalized_fn(x)

    def score(self, x: np.ndarray) -> np.ndarray:
        return self.score_fn(x)


def target_from_distribution(dist) -> GenericTarget:
    """Treat a distribution with exact log-density (e.g. q0) as a target."""
    return GenericTarget(dist.dim, dist.log_density, dist.score)


def scaled_target(base, log_scale: float) -> GenericTarget:
    """Multiply an unnormalized density by exp(log_scale); score unchanged."""

    def log_unnormalized(x):
        return base.log_unnormalized(x) + log_scale

    return GenericTarget(base.dim, log_unnormalized, base.score)


# ---------------------------------------------------------------------------
# Gaussian mixtures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Coordinate:
    """Test function h(x) = x_j."""

    j: int = 0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float)[..., self.j]


@dataclass(frozen=True)
class SquaredCoordinate:
    """Test function h(x) = x_j^2."""

    j: int = 0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        xj = np.asarray(x, dtype=float)[..., self.j]
        return xj * xj


@dataclass(frozen=True)
class CosineMoment:
    """Test function h(x) = cos(w x_j + b)."""

    w: float = 1.0
    b: float = 0.0
    j: int = 0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        xj = np.asarray(x, dtype=float)[..., self.j]
        return np.cos(self.w * xj + self.b)


@dataclass(frozen=True)
class GmmTarget:
    """Gaussian mixture with full (or isotropic) covariances.

    The mixture is normalized, so ``log_unnormalized`` equals the true
    log-density and the partition function is exactly 1.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    _precisions: np.ndarray = field(init=False, repr=False, compare=False)
    _log_norms: np.ndarray = field(init=False, repr=False, compare=False)
    _chols: np.ndarray = field(init=False, repr=False, compare=False)
    _iso_vars: np.ndarray | None = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        covs = np.asarray(self.covariances, dtype=float)
        m, d = means.shape
        iso_vars = None
        if covs.ndim == 1:  # per-component isotropic variances
            iso_vars = covs.copy()
            covs = covs[:, None, None] * np.eye(d)[None, :, :]
        if covs.shape != (m, d, d):
            raise ValueError(f"covariances must have shape ({m}, {d}, {d})")
        if weights.shape != (m,):
            raise ValueError("weights must match the number of components")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        chols = np.linalg.cholesky(covs)  # raises if not SPD
        precisions = np.stack([np.linalg.inv(c) for c in covs])
        log_dets = 2.0 * np.sum(np.log(np.diagonal(chols, axis1=1, axis2=2)), axis=1)
        log_norms = np.log(weights) - 0.5 * (d * _LOG_2PI + log_dets)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)
        object.__setattr__(self, "_precisions", precisions)
        object.__setattr__(self, "_log_norms", log_norms)
        object.__setattr__(self, "_chols", chols)
        object.__setattr__(self, "_iso_vars", iso_vars)

    @classmethod
    def isotropic(cls, weights, means, variances) -> "GmmTarget":
        """Build from per-component scalar variances sigma_k^2 I."""
        return cls(weights, means, np.asarray(variances, dtype=float))

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    def _component_log_densities(self, xb: np.ndarray) -> np.ndarray:
        """Per-component log(w_k N_k(x)), shape (n, m)."""
        if self._iso_vars is not None:
            sq = np.zeros((xb.shape[0], self.n_components))
            for a in range(self.dim):
                diff = xb[:, a][:, None] - self.means[:, a][None, :]
                sq += diff * diff
            return self._log_norms - 0.5 * sq / self._iso_vars
        n = xb.shape[0]
        out = np.empty((n, self.n_components))
        for k in range(self.n_components):
            centered = xb - self.means[k]
            quad = np.sum((centered @ self._precisions[k]) * centered, axis=1)
            out[:, k] = self._log_norms[k] - 0.5 * quad
        return out

    def log_density(self, x: np.ndarray) -> np.ndarray:
        xb, single = _as_batch(x, self.dim)
        out = logsumexp(self._component_log_densities(xb), axis=1)
        return float(out) if single else out

    def log_unnormalized(self, x: np.ndarray) -> np.ndarray:
        return self.log_density(x)

    def score(self, x: np.ndarray) -> np.ndarray:
        xb, single = _as_batch(x, self.dim)
        comp = self._component_log_densities(xb)
        comp -= comp.max(axis=1, keepdims=True)
        resp = np.exp(comp)
        resp /= resp.sum(axis=1, keepdims=True)
        if self._iso_vars is not None:
            scaled = resp / self._iso_vars
            out = scaled @ self.means - xb * scaled.sum(axis=1)[:, None]
        else:
            out = np.zeros_like(xb)
            for k in range(self.n_components):
                out += resp[:, k:k + 1] * ((self.means[k] - xb) @ self._precisions[k])
        return out[0] if single else out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comps = rng.choice(self.n_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        out = np.empty((n, self.dim))
        for k in range(self.n_components):
            mask = comps == k
            if np.any(mask):
                out[mask] = self.means[k] + z[mask] @ self._chols[k].T
        return out

    def exact_expectation(self, test_fn) -> float:
        """Closed-form mixture expectation of a supported test function."""
        w = self.weights
        if isinstance(test_fn, Coordinate):
            return float(np.dot(w, self.means[:, test_fn.j]))
        if isinstance(test_fn, SquaredCoordinate):
            j = test_fn.j
            var = self.covariances[:, j, j]
            return float(np.dot(w, var + self.means[:, j] ** 2))
        if isinstance(test_fn, CosineMoment):
            j, omega, b = test_fn.j, test_fn.w, test_fn.b
            var = self.covariances[:, j, j]
            damp = np.exp(-0.5 * omega * omega * var)
            return float(np.dot(w, damp * np.cos(omega * self.means[:, j] + b)))
        raise TypeError(f"no closed form for test function {test_fn!r}")


def random_gmm(
    dim: int,
    n_components: int,
    seed: int | np.random.Generator,
    mean_scale: float = 3.0,
    var_low: float = 0.5,
    var_high: float = 1.5,
) -> GmmTarget:
    """Randomly generated isotropic mixture (our instance convention).

    Component means are drawn from N(0, mean_scale^2 I), variances uniform
    in [var_low, var_high], and weights from a flat Dirichlet.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights = rng.dirichlet(np.ones(n_components))
    means = mean_scale * rng.standard_normal((n_components, dim))
    variances = rng.uniform(var_low, var_high, size=n_components)
    return GmmTarget.isotropic(weights, means, variances)


# ---------------------------------------------------------------------------
# Gauss-Bernoulli restricted Boltzmann machine (hidden units marginalized)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RbmTarget:
    """Marginal density of a Gaussian-visible / {-1,+1}-hidden RBM.

    log pbar(x) = b^T x - ||x||^2 / 2 + sum_i log(exp(phi_i) + exp(-phi_i))
    with phi = B^T x + c.  The marginal is a mixture of 2^{d'} unit-variance
    Gaussians, which makes the exact partition function computable by
    enumeration for moderate d'.
    """

    coupling: np.ndarray  # B, shape (d, d_hidden)
    visible_bias: np.ndarray  # b, shape (d,)
    hidden_bias: np.ndarray  # c, shape (d_hidden,)

    def __post_init__(self):
        coupling = np.atleast_2d(np.asarray(self.coupling, dtype=float))
        visible = np.atleast_1d(np.asarray(self.visible_bias, dtype=float))
        hidden = np.atleast_1d(np.asarray(self.hidden_bias, dtype=float))
        if coupling.shape != (visible.shape[0], hidden.shape[0]):
            raise ValueError("coupling must have shape (len(b), len(c))")
        object.__setattr__(self, "coupling", coupling)
        object.__setattr__(self, "visible_bias", visible)
        object.__setattr__(self, "hidden_bias", hidden)

    @property
    def dim(self) -> int:
        return self.visible_bias.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.hidden_bias.shape[0]

    def log_unnormalized(self, x: np.ndarray) -> np.ndarray:
        xb, single = _as_batch(x, self.dim)
        phi = xb @ self.coupling + self.hidden_bias
        # log(exp(phi) + exp(-phi)) = |phi| + log1p(exp(-2|phi|)), stable for
        # arbitrarily large couplings.
        a = np.abs(phi)
        hidden_terms = np.sum(a + np.log1p(np.exp(-2.0 * a)), axis=1)
        out = xb @ self.visible_bias - 0.5 * np.sum(xb * xb, axis=1) + hidden_terms
        return float(out[0]) if single else out

    def score(self, x: np.ndarray) -> np.ndarray:
        xb, single = _as_batch(x, self.dim)
        phi = xb @ self.coupling + self.hidden_bias
        out = self.visible_bias - xb + np.tanh(phi) @ self.coupling.T
        return out[0] if single else out

    def exact_log_z(self, max_hidden: int = 25) -> float:
        """Exact log partition function by enumerating all hidden states.

        log Z = (d/2) log(2 pi) + logsumexp_h [c^T h + ||b + B h||^2 / 2]
        over h in {-1,+1}^{d'}.  Enumeration is chunked so memory stays flat;
        d' above ``max_hidden`` is refused.
        """
        dh = self.n_hidden
        if dh > max_hidden:
            raise ValueError(f"exact enumeration limited to {max_hidden} hidden units")
        total = 1 << dh
        chunk = min(total, 1 << 16)
        partial = []
        base = np.arange(chunk, dtype=np.uint32)
        bits = np.arange(dh, dtype=np.uint32)
        for start in range(0, total, chunk):
            idx = start + base[: min(chunk, total - start)]
            h = ((idx[:, None] >> bits[None, :]) & 1).astype(float) * 2.0 - 1.0
            mean_shift = self.visible_bias + h @ self.coupling.T
            exponent = h @ self.hidden_bias + 0.5 * np.sum(mean_shift * mean_shift, axis=1)
            partial.append(logsumexp(exponent))
        return float(0.5 * self.dim * _LOG_2PI + logsumexp(np.array(partial)))


def random_rbm(dim: int, n_hidden: int, seed: int | np.random.Generator) -> RbmTarget:
    """Random instance: biases standard Gaussian, couplings fair +/-0.5 signs."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    visible = rng.standard_normal(dim)
    hidden = rng.standard_normal(n_hidden)
    coupling = 0.5 * rng.choice([-1.0, 1.0], size=(dim, n_hidden))
    return RbmTarget(coupling, visible, hidden)


def rbm_from_file(path) -> RbmTarget:
    """Load an RBM from whitespace-delimited text.

    Layout: a header line ``d d'`` followed by the coupling matrix B
    (d rows of d' values, row-major), one row of d visible biases, and one
    row of d' hidden biases.
    """
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 2:
        raise ValueError("missing 'd d_hidden' header")
    d, dh = int(tokens[0]), int(tokens[1])
    values = np.array([float(t) for t in tokens[2:]])
    expected = d * dh + d + dh
    if values.shape[0] != expected:
        raise ValueError(f"expected {expected} values after header, got {values.shape[0]}")
    coupling = values[: d * dh].reshape(d, dh)
    visible = values[d * dh: d * dh + d]
    hidden = values[d * dh + d:]
    return RbmTarget(coupling, visible, hidden)


# ---------------------------------------------------------------------------
# Nonlinearly transformed planar mixture
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransformedGmmTarget:
    """Pushforward of a planar mixture through a shear-and-bend map.

    With z = (z1, z2) distributed as ``base``, the target is the law of
    T(z) = [a1 z1 + b1, a2 z1^2 + a3 z2 + b2].  T is globally invertible for
    a1, a3 != 0 with constant Jacobian magnitude |a1 a3|, so the density and
    score are available in closed form even though the target is strongly
    non-Gaussian.
    """

    base: GmmTarget
    a1: float
    a2: float
    a3: float
    b1: float = 0.0
    b2: float = 0.0

    def __post_init__(self):
        if self.base.dim != 2:
            raise ValueError("base mixture must be two-dimensional")
        if self.a1 == 0 or self.a3 == 0:
            raise ValueError("a1 and a3 must be nonzero")

    @property
    def dim(self) -> int:
        return 2

    def forward(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        z1, z2 = z[..., 0], z[..., 1]
        return np.stack(
            [self.a1 * z1 + self.b1, self.a2 * z1 * z1 + self.a3 * z2 + self.b2],
            axis=-1,
        )

    def inverse(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        z1 = (x[..., 0] - self.b1) / self.a1
        z2 = (x[..., 1] - self.a2 * z1 * z1 - self.b2) / self.a3
        return np.stack([z1, z2], axis=-1)

    def log_density(self, x: np.ndarray) -> np.ndarray:
        xb, single = _as_batch(x, 2)
        out = self.base.log_density(self.inverse(xb)) - np.log(abs(self.a1 * self.a3))
        return float(out[0]) if single else np.asarray(out)

    def log_unnormalized(self, x: np.ndarray) -> np.ndarray:
        return self.log_density(x)

    def score(self, x: np.ndarray) -> np.ndarray:
        xb, single = _as_batch(x, 2)
        z = self.inverse(xb)
        base_score = self.base.score(z)
        # Chain rule through the inverse map; its Jacobian is triangular with
        # constant determinant 1 / (a1 a3).
        dz1_dx1 = 1.0 / self.a1
        dz2_dx1 = -2.0 * self.a2 * z[:, 0] / (self.a1 * self.a3)
        dz2_dx2 = 1.0 / self.a3
        out = np.empty_like(xb)
        out[:, 0] = base_score[:, 0] * dz1_dx1 + base_score[:, 1] * dz2_dx1
        out[:, 1] = base_score[:, 1] * dz2_dx2
        return out[0] if single else out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.forward(self.base.sample(n, rng))

    @classmethod
    def default_instance(cls) -> "TransformedGmmTarget":
        """Bundled example target (our choice of coefficients and base mixture)."""
        base = GmmTarget.isotropic(
            weights=np.array([0.4, 0.35, 0.25]),
            means=np.array([[-2.0, 0.0], [1.5, 1.0], [0.5, -1.5]]),
            variances=np.array([0.8, 0.6, 1.0]),
        )
        return cls(base=base, a1=1.0, a2=0.5, a3=1.0, b1=0.0, b2=-1.0)

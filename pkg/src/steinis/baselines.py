"""Reference estimators: plain importance sampling and annealed variants.

Annealed runs interpolate between the initial distribution and the target
through geometric averaging, ``log pi_beta = (1 - beta) log q0 + beta log
pbar``, picking up incremental importance weights at each rung and applying
one Markov transition that leaves the rung's distribution invariant.  Two
transition kernels are provided: Metropolis-adjusted Langevin and Hamiltonian
moves with a configurable number of leapfrog steps.

Chains are mutually independent by construction: each chain consumes its own
seeded random stream, so permuting chain seeds permutes per-chain weights and
nothing else.  Within a run the chains are advanced in lockstep with
vectorized arithmetic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .results import TraceRow
from .sampler import WeightedSample, effective_sample_size

__all__ = [
    "AnnealingPath",
    "HmcParams",
    "LangevinParams",
    "AisResult",
    "plain_is",
    "ais_run",
    "leapfrog",
    "hmc_step",
    "mala_step",
]


@dataclass(frozen=True)
class AnnealingPath:
    """Inverse-temperature ladder; strictly increasing from 0 to 1."""

    betas: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=float)
        if betas.ndim != 1 or betas.shape[0] < 2:
            raise ValueError("need at least two temperatures")
        if betas[0] != 0.0 or betas[-1] != 1.0:
            raise ValueError("path must start at 0 and end at 1")
        if np.any(np.diff(betas) <= 0):
            raise ValueError("temperatures must be strictly increasing")
        object.__setattr__(self, "betas", betas)

    @classmethod
    def linear(cls, n_transitions: int) -> "AnnealingPath":
        if n_transitions < 1:
            raise ValueError("need at least one transition")
        return cls(np.linspace(0.0, 1.0, n_transitions + 1))

    @property
    def n_transitions(self) -> int:
        return self.betas.shape[0] - 1


@dataclass(frozen=True)
class HmcParams:
    """Hamiltonian transition: L leapfrog steps with isotropic mass.

    ``step_size=None`` triggers a short pilot that targets 0.6-0.9
    acceptance on the mid-path distribution.
    """

    n_leapfrog: int = 1
    step_size: float | None = None
    mass: float = 1.0

    def __post_init__(self):
        if self.n_leapfrog < 1:
            raise ValueError("n_leapfrog must be positive")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not self.mass > 0:
            raise ValueError("mass must be positive")


@dataclass(frozen=True)
class LangevinParams:
    """Langevin transition; Metropolis-adjusted unless ``adjusted=False``.

    The unadjusted mode exists for faithfulness experiments only: without the
    correction the rung distributions are not exactly invariant.
    """

    step_size: float | None = None
    adjusted: bool = True

    def __post_init__(self):
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")


@dataclass
class AisResult:
    log_z: float
    chain_log_weights: np.ndarray
    acceptance_rates: np.ndarray
    positions: np.ndarray
    step_size: float
    trace: list
    wall_time_s: float


def plain_is(q0, target, n: int, seed) -> tuple[float, WeightedSample]:
    """Importance sampling straight from q0; returns (log Z estimate, sample)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    x = q0.sample(n, rng)
    log_w = np.asarray(target.log_unnormalized(x), dtype=float) - np.asarray(
        q0.log_density(x), dtype=float
    )
    sample = WeightedSample(positions=x, log_weights=log_w)
    return float(logsumexp(log_w) - np.log(n)), sample


def _interp_log_density(q0, target, beta: float, x: np.ndarray) -> np.ndarray:
    if beta == 0.0:
        return np.asarray(q0.log_density(x), dtype=float)
    if beta == 1.0:
        return np.asarray(target.log_unnormalized(x), dtype=float)
    return (1.0 - beta) * np.asarray(q0.log_density(x), dtype=float) + beta * np.asarray(
        target.log_unnormalized(x), dtype=float
    )


def _interp_score(q0, target, beta: float, x: np.ndarray) -> np.ndarray:
    if beta == 0.0:
        return np.asarray(q0.score(x), dtype=float)
    if beta == 1.0:
        return np.asarray(target.score(x), dtype=float)
    return (1.0 - beta) * np.asarray(q0.score(x), dtype=float) + beta * np.asarray(
        target.score(x), dtype=float
    )


def leapfrog(
    positions: np.ndarray,
    momenta: np.ndarray,
    score_fn,
    step_size: float,
    n_steps: int,
    mass: float = 1.0,
):
    """Symplectic integrator for H(x, p) = -log pi(x) + ||p||^2 / (2 mass).

    Vectorized over rows.  Time-reversible: integrating, negating the
    momentum, and integrating again returns the start up to rounding.
    """
    x = np.array(positions, dtype=float)
    p = np.array(momenta, dtype=float)
    p = p + 0.5 * step_size * score_fn(x)
    for _ in range(n_steps - 1):
        x = x + step_size * p / mass
        p = p + step_size * score_fn(x)
    x = x + step_size * p / mass
    p = p + 0.5 * step_size * score_fn(x)
    return x, p


def hmc_step(x, log_density_fn, score_fn, params: HmcParams, momentum_noise, uniforms):
    """One Hamiltonian Metropolis move per row; returns (new x, accepted mask).

    ``momentum_noise`` must be standard normal draws of x's shape and
    ``uniforms`` one U(0,1) per row.  Proposals with nonfinite energy are
    rejected.
    """
    step = params.step_size
    momenta = np.sqrt(params.mass) * momentum_noise
    energy_old = -log_density_fn(x) + 0.5 * np.sum(momenta * momenta, axis=1) / params.mass
    x_new, p_new = leapfrog(x, momenta, score_fn, step, params.n_leapfrog, params.mass)
    energy_new = -log_density_fn(x_new) + 0.5 * np.sum(p_new * p_new, axis=1) / params.mass
    with np.errstate(invalid="ignore"):
        log_acc = energy_old - energy_new
        accept = np.isfinite(energy_new) & (np.log(uniforms) < log_acc)
    return np.where(accept[:, None], x_new, x), accept


def mala_step(x, log_density_fn, score_fn, params: LangevinParams, noise, uniforms):
    """One Langevin move per row; returns (new x, accepted mask).

    Proposal y = x + tau * score(x) + sqrt(2 tau) * xi.  With adjustment the
    move is accepted with the Metropolis-Hastings ratio including the
    asymmetric proposal densities; unadjusted moves always 'accept'.
    """
    tau = params.step_size
    proposal = x + tau * score_fn(x) + np.sqrt(2.0 * tau) * noise
    if not params.adjusted:
        return proposal, np.ones(x.shape[0], dtype=bool)
    log_p_old = log_density_fn(x)
    log_p_new = log_density_fn(proposal)
    fwd = proposal - x - tau * score_fn(x)
    bwd = x - proposal - tau * score_fn(proposal)
    log_q_fwd = -np.sum(fwd * fwd, axis=1) / (4.0 * tau)
    log_q_bwd = -np.sum(bwd * bwd, axis=1) / (4.0 * tau)
    with np.errstate(invalid="ignore"):
        log_acc = (log_p_new + log_q_bwd) - (log_p_old + log_q_fwd)
        accept = np.isfinite(log_p_new) & (np.log(uniforms) < log_acc)
    return np.where(accept[:, None], proposal, x), accept


def _pilot_step_size(q0, target, transition, seed, beta: float = 0.5) -> float:
    """Short deterministic pilot: scale the step until acceptance is 0.6-0.9."""
    rng = np.random.default_rng(seed)
    x = q0.sample(64, rng)
    d = x.shape[1]
    step = 0.5 * d ** (-0.25)
    log_density = lambda pts: _interp_log_density(q0, target, beta, pts)
    score = lambda pts: _interp_score(q0, target, beta, pts)
    for _ in range(16):
        acc_total = 0.0
        state = x
        for _ in range(8):
            if isinstance(transition, HmcParams):
                params = HmcParams(transition.n_leapfrog, step, transition.mass)
                state, accepted = hmc_step(
                    state,
                    log_density,
                    score,
                    params,
                    rng.standard_normal(state.shape),
                    rng.random(state.shape[0]),
                )
            else:
                params = LangevinParams(step, transition.adjusted)
                state, accepted = mala_step(
                    state,
                    log_density,
                    score,
                    params,
                    rng.standard_normal(state.shape),
                    rng.random(state.shape[0]),
                )
            acc_total += float(np.mean(accepted))
        rate = acc_total / 8.0
        if rate > 0.9:
            step *= 1.6
        elif rate < 0.6:
            step /= 1.6
        else:
            break
    return step


def ais_run(
    q0,
    target,
    path: AnnealingPath,
    transition,
    n_chains: int,
    seed=0,
    chain_seeds=None,
) -> AisResult:
    """Annealed importance sampling along the given temperature ladder.

    At rung k each chain adds ``(beta_k - beta_{k-1}) * (log pbar - log q0)``
    evaluated at its pre-transition state, then takes one Markov move
    targeting the rung distribution.  ``transition`` is an
    :class:`HmcParams` or :class:`LangevinParams`; a ``None`` step size is
    pilot-tuned once per run.

    Per-chain randomness is pre-drawn from per-chain seeds (derived from
    ``seed`` unless ``chain_seeds`` is given), so each chain's trajectory
    depends only on its own seed.
    """
    start = time.perf_counter()
    if not isinstance(transition, (HmcParams, LangevinParams)):
        raise TypeError("transition must be HmcParams or LangevinParams")
    root = np.random.SeedSequence(seed)
    spawned = root.spawn(n_chains + 1)
    if chain_seeds is None:
        chain_seeds = spawned[:n_chains]
    elif len(chain_seeds) != n_chains:
        raise ValueError("chain_seeds must have length n_chains")
    pilot_seed = spawned[n_chains]

    step_size = transition.step_size
    if step_size is None:
        step_size = _pilot_step_size(q0, target, transition, pilot_seed)
    if isinstance(transition, HmcParams):
        transition = HmcParams(transition.n_leapfrog, step_size, transition.mass)
    else:
        transition = LangevinParams(step_size, transition.adjusted)

    n_steps = path.n_transitions
    d = getattr(target, "dim")
    x = np.empty((n_chains, d))
    noises = np.empty((n_chains, n_steps, d))
    uniforms = np.empty((n_chains, n_steps))
    for i, chain_seed in enumerate(chain_seeds):
        rng = np.random.default_rng(chain_seed)
        x[i] = q0.sample(1, rng)[0]
        noises[i] = rng.standard_normal((n_steps, d))
        uniforms[i] = rng.random(n_steps)

    log_w = np.zeros(n_chains)
    log_ratio = np.asarray(target.log_unnormalized(x), dtype=float) - np.asarray(
        q0.log_density(x), dtype=float
    )
    acceptance = np.empty(n_steps)
    trace: list[TraceRow] = []
    betas = path.betas
    for k in range(1, n_steps + 1):
        beta = betas[k]
        log_w += (beta - betas[k - 1]) * log_ratio
        log_density = lambda pts: _interp_log_density(q0, target, beta, pts)
        score = lambda pts: _interp_score(q0, target, beta, pts)
        if isinstance(transition, HmcParams):
            x, accepted = hmc_step(
                x, log_density, score, transition, noises[:, k - 1], uniforms[:, k - 1]
            )
        else:
            x, accepted = mala_step(
                x, log_density, score, transition, noises[:, k - 1], uniforms[:, k - 1]
            )
        acceptance[k - 1] = float(np.mean(accepted))
        log_ratio = np.asarray(target.log_unnormalized(x), dtype=float) - np.asarray(
            q0.log_density(x), dtype=float
        )
        weighted = WeightedSample(positions=x, log_weights=log_w)
        trace.append(
            TraceRow(
                iteration=k,
                epsilon=step_size,
                ess=effective_sample_size(weighted),
                log_z_running=float(logsumexp(log_w) - np.log(n_chains)),
            )
        )
    return AisResult(
        log_z=float(logsumexp(log_w) - np.log(n_chains)),
        chain_log_weights=log_w,
        acceptance_rates=acceptance,
        positions=x,
        step_size=step_size,
        trace=trace,
        wall_time_s=time.perf_counter() - start,
    )

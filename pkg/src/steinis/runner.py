"""Experiment execution: config -> target/initial distribution -> RunResult.

One trial is a pure function of its config (trial t of a multi-trial study
runs with ``seed + t``), so trials can run in any process arrangement and
aggregation is an ordered reduction over trial index.  Worker pools therefore
never change results, only wall time.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import targets as tg
from .baselines import AnnealingPath, HmcParams, LangevinParams, ais_run, plain_is
from .config import RunConfig
from .discrepancy import path_integration
from .kernels import KernelSpec
from .results import RunResult
from .sampler import (
    WeightedSample,
    effective_sample_size,
    estimate_expectation,
    estimate_partition,
    run_steinis,
    run_svgd,
)
from .transport import StepSchedule

__all__ = [
    "build_target",
    "build_q0",
    "estimand_function",
    "oracle_value",
    "oracle_summary",
    "execute_run",
    "execute_trials",
    "run_sweep",
    "NoOracleError",
]


class NoOracleError(ValueError):
    """The configured target has no closed-form oracle."""


def build_target(config: RunConfig):
    """Construct the configured target; deterministic in target_seed."""
    if config.target == "gmm":
        base = tg.random_gmm(
            config.dim,
            config.gmm_components,
            seed=config.target_seed,
            mean_scale=config.gmm_mean_scale,
        )
    elif config.target == "rbm":
        if config.rbm_file is not None:
            base = tg.rbm_from_file(config.rbm_file)
        else:
            base = tg.random_rbm(config.dim, config.rbm_hidden, seed=config.target_seed)
    elif config.target == "transformed_gmm":
        base = tg.TransformedGmmTarget.default_instance()
    elif config.target == "gaussian":
        base = tg.DiagonalGaussian(
            mean=np.full(config.dim, config.target_mean),
            std=np.full(config.dim, config.target_std),
        )
    else:
        raise ValueError(f"unknown target {config.target!r}")
    if config.target_log_scale != 0.0:
        return tg.scaled_target(base, config.target_log_scale), base
    return base, base


def build_q0(config: RunConfig, dim: int) -> tg.DiagonalGaussian:
    return tg.DiagonalGaussian(mean=np.full(dim, config.q0_mean), std=np.full(dim, config.q0_std))


def estimand_function(config: RunConfig):
    """(name, callable) for moment estimands; None for partition estimands."""
    j = config.estimand_coord
    if config.estimand == "mean":
        return "mean", tg.Coordinate(j)
    if config.estimand == "second_moment":
        return "second_moment", tg.SquaredCoordinate(j)
    if config.estimand == "cos":
        return "cos", tg.CosineMoment(config.estimand_w, config.estimand_b, j)
    return None


def oracle_value(config: RunConfig, base_target) -> float:
    """Exact value of the configured estimand, when one exists."""
    shift = config.target_log_scale
    if config.estimand in ("log_z", "z"):
        if isinstance(base_target, tg.GmmTarget):
            log_z = shift
        elif isinstance(base_target, tg.RbmTarget):
            log_z = base_target.exact_log_z() + shift
        elif isinstance(base_target, tg.DiagonalGaussian):
            log_z = shift
        else:
            raise NoOracleError(f"no partition oracle for target {config.target!r}")
        return log_z if config.estimand == "log_z" else float(np.exp(log_z))
    named = estimand_function(config)
    assert named is not None
    _, fn = named
    if isinstance(base_target, tg.GmmTarget):
        return base_target.exact_expectation(fn)
    if isinstance(base_target, tg.DiagonalGaussian):
        j = config.estimand_coord
        mean, std = base_target.mean[j], base_target.std[j]
        if isinstance(fn, tg.Coordinate):
            return float(mean)
        if isinstance(fn, tg.SquaredCoordinate):
            return float(std * std + mean * mean)
        return float(np.exp(-0.5 * (fn.w * std) ** 2) * np.cos(fn.w * mean + fn.b))
    raise NoOracleError(f"no moment oracle for target {config.target!r}")


def oracle_summary(config: RunConfig) -> dict:
    """Everything exactly known about the configured target, as JSON-ready dict."""
    _, base = build_target(config)
    shift = config.target_log_scale
    if isinstance(base, tg.RbmTarget):
        return {"target": config.target, "log_z": base.exact_log_z() + shift}
    if isinstance(base, tg.GmmTarget):
        d = base.dim
        return {
            "target": config.target,
            "log_z": shift,
            "mean": [base.exact_expectation(tg.Coordinate(j)) for j in range(d)],
            "second_moment": [base.exact_expectation(tg.SquaredCoordinate(j)) for j in range(d)],
        }
    if isinstance(base, tg.DiagonalGaussian):
        return {
            "target": config.target,
            "log_z": shift,
            "mean": list(map(float, base.mean)),
            "second_moment": list(map(float, base.std**2 + base.mean**2)),
        }
    raise NoOracleError(f"no closed-form oracle for target {config.target!r}")


def _weighted_result(method, seed, n_iterations, sample, trace, wall, extras=None, fn_named=None):
    expectations = {}
    if fn_named is not None:
        name, fn = fn_named
        expectations[name] = estimate_expectation(sample, fn(sample.positions))
    return RunResult(
        method=method,
        seed=seed,
        n_iterations=n_iterations,
        log_z=estimate_partition(sample),
        ess=effective_sample_size(sample),
        expectations=expectations,
        extras=extras or {},
        trace=trace,
        wall_time_s=wall,
        sample=sample,
    )


def execute_run(config: RunConfig) -> RunResult:
    """Run one trial of the configured method."""
    target, _ = build_target(config)
    q0 = build_q0(config, target.dim)
    fn_named = estimand_function(config)
    kernel_spec = KernelSpec(bandwidth=config.bandwidth)
    schedule = StepSchedule(alpha=config.alpha, beta=config.beta)

    if config.method == "steinis":
        result = run_steinis(
            target,
            q0,
            n_leaders=config.n_leaders,
            n_followers=config.n_followers,
            n_iterations=config.iterations,
            schedule=schedule,
            kernel_spec=kernel_spec,
            det_mode=config.det_mode,
            seed=config.seed,
            ess_every=config.ess_every,
            ksd_every=config.ksd_every,
            early_stop_ess_frac=config.early_stop_ess,
            expectation_fns={fn_named[0]: fn_named[1]} if fn_named else None,
        )
        return result
    if config.method == "svgd":
        return run_svgd(
            target,
            q0,
            n_particles=config.n_particles,
            n_iterations=config.iterations,
            schedule=schedule,
            kernel_spec=kernel_spec,
            seed=config.seed,
            ksd_every=config.ksd_every,
            expectation_fns={fn_named[0]: fn_named[1]} if fn_named else None,
        )
    if config.method == "plain_is":
        start = time.perf_counter()
        _, sample = plain_is(q0, target, config.n_samples, config.seed)
        return _weighted_result(
            "plain_is", config.seed, 0, sample, [], time.perf_counter() - start,
            fn_named=fn_named,
        )
    if config.method in ("ais", "hais"):
        if config.method == "hais":
            transition = HmcParams(
                n_leapfrog=config.n_leapfrog, step_size=config.hmc_step, mass=config.mass
            )
        else:
            transition = LangevinParams(
                step_size=config.langevin_step, adjusted=config.langevin_adjusted
            )
        ais = ais_run(
            q0,
            target,
            AnnealingPath.linear(config.iterations),
            transition,
            n_chains=config.n_chains,
            seed=config.seed,
        )
        sample = WeightedSample(positions=ais.positions, log_weights=ais.chain_log_weights)
        extras = {
            "mean_acceptance": float(np.mean(ais.acceptance_rates)),
            "step_size": ais.step_size,
        }
        return _weighted_result(
            config.method, config.seed, config.iterations, sample, ais.trace,
            ais.wall_time_s, extras=extras, fn_named=fn_named,
        )
    if config.method == "path_integration":
        pi = path_integration(
            q0,
            target,
            n_particles=config.n_particles,
            schedule=schedule,
            n_iterations=config.iterations,
            n_crossentropy_samples=config.crossentropy_samples,
            seed=config.seed,
            kernel_spec=kernel_spec,
        )
        return RunResult(
            method="path_integration",
            seed=config.seed,
            n_iterations=config.iterations,
            log_z=pi.log_z_estimate,
            extras={
                "kl_estimate": pi.kl_estimate,
                "terminal_ksd_squared": pi.terminal_ksd_squared,
                "cross_entropy_term": pi.cross_entropy_term,
            },
            trace=pi.trace,
            wall_time_s=pi.wall_time_s,
        )
    raise ValueError(f"unknown method {config.method!r}")


def _trial(config: RunConfig) -> RunResult:
    return execute_run(config)


def execute_trials(config: RunConfig, workers: int = 1) -> list[RunResult]:
    """Run ``config.trials`` independent trials; trial t uses seed seed+t.

    Results come back in trial order whatever the worker count, so any
    reduction over them is deterministic.
    """
    trial_configs = [replace(config, seed=config.seed + t) for t in range(config.trials)]
    if workers <= 1 or config.trials == 1:
        return [_trial(c) for c in trial_configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_trial, trial_configs))


_SWEEP_AXES = {"n_followers": "n_followers", "transitions": "iterations", "dimension": "dim"}


def extract_estimate(config: RunConfig, result: RunResult) -> float:
    if config.estimand == "log_z":
        return float(result.log_z)
    if config.estimand == "z":
        return float(np.exp(result.log_z))
    name, _ = estimand_function(config)
    return float(result.expectations[name])


def run_sweep(config: RunConfig, axis: str, values, workers: int = 1) -> list[dict]:
    """Run the config at each axis value x trials seeds; aggregate per value.

    Returns one dict per axis value with mean, standard error, and (when the
    target has a closed-form oracle for the estimand) the mean squared error
    against it.
    """
    if axis not in _SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {sorted(_SWEEP_AXES)}")
    if not values:
        raise ValueError("sweep needs at least one axis value")
    rows = []
    for value in values:
        cfg = replace(config, **{_SWEEP_AXES[axis]: int(value)})
        _, base = build_target(cfg)
        try:
            oracle = oracle_value(cfg, base)
        except NoOracleError:
            oracle = None
        results = execute_trials(cfg, workers=workers)
        estimates = np.array([extract_estimate(cfg, r) for r in results])
        row = {
            "axis": axis,
            "value": int(value),
            "trials": len(estimates),
            "mean": float(np.mean(estimates)),
            "std_err": float(np.std(estimates, ddof=1) / np.sqrt(len(estimates)))
            if len(estimates) > 1
            else None,
            "mse": float(np.mean((estimates - oracle) ** 2)) if oracle is not None else None,
            "oracle": oracle,
        }
        rows.append(row)
    return rows

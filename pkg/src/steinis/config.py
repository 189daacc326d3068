"""Run configuration: a flat key-value text format and its dataclass.

The on-disk format is one ``key = value`` pair per line with ``#`` comments,
chosen over nested formats so configs diff cleanly and need no parser
dependency.  Every key corresponds to a field of :class:`RunConfig`; values
are coerced to the field's type, with ``none`` accepted for optional fields
and ``median`` as the spelling for the adaptive bandwidth policy.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

__all__ = ["RunConfig", "ConfigError", "parse_config_text", "load_config", "apply_overrides"]

METHODS = ("steinis", "svgd", "plain_is", "ais", "hais", "path_integration")
TARGETS = ("gmm", "transformed_gmm", "rbm", "gaussian")
DET_MODES = ("exact", "approx", "auto")
ESTIMANDS = ("log_z", "z", "mean", "second_moment", "cos")


class ConfigError(ValueError):
    """Malformed configuration file or override."""


@dataclass
class RunConfig:
    """Everything one experiment run needs, in plain scalar fields."""

    method: str = "steinis"
    name: str | None = None
    seed: int = 0
    trials: int = 1
    out: str | None = None

    # target selection
    target: str = "gmm"
    dim: int = 2
    target_seed: int = 0
    gmm_components: int = 10
    gmm_mean_scale: float = 3.0
    rbm_hidden: int = 10
    rbm_file: str | None = None
    target_mean: float = 0.0
    target_std: float = 1.0
    target_log_scale: float = 0.0

    # initial distribution (isotropic Gaussian)
    q0_mean: float = 0.0
    q0_std: float = 1.0

    # transport runs
    n_leaders: int = 100
    n_followers: int = 500
    iterations: int = 800
    alpha: float = 0.5
    beta: float = 0.5
    det_mode: str = "auto"
    bandwidth: float | None = None  # None = median heuristic
    ess_every: int = 1
    ksd_every: int = 0
    early_stop_ess: float | None = None

    # plain IS / interacting runs / path integration
    n_samples: int = 1000
    n_particles: int = 500
    crossentropy_samples: int = 100_000

    # annealed baselines
    n_chains: int = 100
    n_leapfrog: int = 1
    hmc_step: float | None = None
    langevin_step: float | None = None
    langevin_adjusted: bool = True
    mass: float = 1.0

    # which quantity sweeps aggregate
    estimand: str = "log_z"
    estimand_coord: int = 0
    estimand_w: float = 1.0
    estimand_b: float = 0.0

    def validate(self) -> "RunConfig":
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.target not in TARGETS:
            raise ConfigError(f"unknown target {self.target!r}; expected one of {TARGETS}")
        if self.det_mode not in DET_MODES:
            raise ConfigError(f"unknown det_mode {self.det_mode!r}")
        if self.estimand not in ESTIMANDS:
            raise ConfigError(f"unknown estimand {self.estimand!r}")
        for key in ("trials", "dim", "n_leaders", "n_followers", "n_samples",
                    "n_particles", "n_chains", "n_leapfrog", "gmm_components",
                    "rbm_hidden"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive")
        if self.iterations < 0:
            raise ConfigError("iterations must be nonnegative")
        if self.q0_std <= 0 or self.target_std <= 0:
            raise ConfigError("standard deviations must be positive")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ConfigError("bandwidth must be positive or 'median'")
        return self


_OPTIONAL_FLOATS = {"bandwidth", "early_stop_ess", "hmc_step", "langevin_step"}
_OPTIONAL_STRINGS = {"name", "out", "rbm_file"}
_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    value = raw.strip()
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    if key in _OPTIONAL_STRINGS:
        return None if value.lower() == "none" else value
    if key in _OPTIONAL_FLOATS:
        if value.lower() in ("none", "median"):
            return None
        try:
            return float(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "bool":
            if value.lower() in ("true", "1", "yes"):
                return True
            if value.lower() in ("false", "0", "no"):
                return False
            raise ValueError(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return value  # str fields


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into a raw {key: coerced value} dict."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        out[key] = _coerce(key, raw)
    return out


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply repeatable ``key=value`` override strings on top of a raw dict."""
    merged = dict(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, _, value = item.partition("=")
        merged[key.strip()] = _coerce(key.strip(), value)
    return merged


def load_config(path, overrides=None) -> RunConfig:
    with open(path) as fh:
        raw = parse_config_text(fh.read())
    raw = apply_overrides(raw, overrides)
    return RunConfig(**raw).validate()

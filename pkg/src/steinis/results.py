"""Run results and their JSON / CSV serialization.

Every method (transport sampler, plain importance sampling, annealed
baselines, path integration) reports through the same :class:`RunResult`
shape so downstream tooling can treat them uniformly.  The per-iteration
trace CSV has a fixed, documented header::

    iteration,epsilon,bandwidth,ess,ksd_squared,log_z_running

Missing values are written as empty fields.  Floats are serialized with
``repr`` so identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

FORMAT_VERSION = 1
TRACE_COLUMNS = ("iteration", "epsilon", "bandwidth", "ess", "ksd_squared", "log_z_running")

__all__ = ["TraceRow", "RunResult", "FORMAT_VERSION", "TRACE_COLUMNS"]


@dataclass(frozen=True)
class TraceRow:
    """One per-iteration diagnostic record; None marks a value not computed."""

    iteration: int
    epsilon: float | None = None
    bandwidth: float | None = None
    ess: float | None = None
    ksd_squared: float | None = None
    log_z_running: float | None = None


@dataclass
class RunResult:
    """Summary of one run: headline estimates plus the per-iteration trace.

    ``sample`` holds the final weighted particle set when the method produces
    one; it is deliberately excluded from JSON output (positions can be
    large) but available to library callers.
    """

    method: str
    seed: int
    n_iterations: int
    log_z: float | None = None
    ess: float | None = None
    expectations: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    wall_time_s: float = 0.0
    sample: object = None

    def ksd_trace(self) -> list[tuple[int, float, float]]:
        """(iteration, epsilon, ksd_squared) for rows where it was computed."""
        return [
            (row.iteration, row.epsilon, row.ksd_squared)
            for row in self.trace
            if row.ksd_squared is not None
        ]

    def to_json_dict(self) -> dict:
        # Wall time is deliberately omitted: artifacts must be byte-identical
        # across reruns of the same (config, seed); timing goes to stdout.
        return {
            "format_version": FORMAT_VERSION,
            "method": self.method,
            "seed": self.seed,
            "n_iterations": self.n_iterations,
            "log_z": self.log_z,
            "ess": self.ess,
            "expectations": dict(self.expectations),
            "extras": dict(self.extras),
        }

    def write_json(self, path, **extra_fields) -> None:
        payload = self.to_json_dict()
        payload.update(extra_fields)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_COLUMNS)
            for row in self.trace:
                writer.writerow(
                    [
                        row.iteration,
                        _fmt(row.epsilon),
                        _fmt(row.bandwidth),
                        _fmt(row.ess),
                        _fmt(row.ksd_squared),
                        _fmt(row.log_z_running),
                    ]
                )


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))

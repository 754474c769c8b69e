"""Repeated-release experiments: error tables, envelopes, and figures."""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import JoinDpError
from .hierarchy import release_uniformized_hierarchical
from .instances import error_envelope_two_table, f_upper
from .noise import PrivacyParams, RngStream
from .pipelines import (
    ReleaseResult,
    release_multi_table,
    release_two_table,
    release_uniformized_two_table,
)
from .queries import FamilyEvaluator, QueryFamily, max_error
from .relational import Instance, count
from .sensitivity import local_sensitivity

ERROR_TABLE_COLUMNS = (
    "seed", "pipeline", "epsilon", "delta", "count", "delta_tilde",
    "max_error", "envelope", "ratio", "wall_ms",
)

PIPELINES: dict[str, Callable[..., ReleaseResult]] = {
    "two_table": release_two_table,
    "multi_table": release_multi_table,
    "unif_two_table": release_uniformized_two_table,
    "unif_hierarchical": release_uniformized_hierarchical,
}


def nominal_domain_size(instance: Instance) -> int:
    """Joined domain size for error-formula purposes.

    Generators that instantiate only a reachable slice of an astronomically
    large domain record the nominal sizing in their metadata; everything
    else uses the actual joined domain.
    """
    meta = instance.meta
    if "nominal_joined_domain_size" in meta:
        return int(meta["nominal_joined_domain_size"])
    if "nominal_domain_sizes" in meta:
        out = 1
        for size in meta["nominal_domain_sizes"].values():
            out *= int(size)
        return out
    return instance.query.joined_domain_size


@dataclass(frozen=True)
class ErrorRow:
    seed: int
    pipeline: str
    epsilon: float
    delta: float
    count: int
    delta_tilde: float
    max_error: float
    envelope: float
    ratio: float
    wall_ms: float


def _report_delta_tilde(report) -> float:
    if report.delta_tilde is not None:
        return float(report.delta_tilde)
    subs = [_report_delta_tilde(r) for r in report.sub_reports]
    return max(subs, default=0.0)


def run_experiment(
    instance: Instance,
    family: QueryFamily,
    pipelines: Sequence[str] | Mapping[str, Callable[..., ReleaseResult]],
    params: PrivacyParams,
    seeds: Iterable[int],
    iterations: int | None = None,
    workers: int = 1,
) -> list[ErrorRow]:
    """Release the instance once per (seed, pipeline) and score max error.

    The envelope column is deterministic per instance and parameters, so the
    ratio column directly reads how far inside the guarantee a run landed.
    Pipelines may be given as registry names or as an explicit mapping (used
    by tests to inject oracles). Seeds are independent streams, so they may
    run on several threads; the output order never depends on workers.
    """
    if isinstance(pipelines, Mapping):
        table = dict(pipelines)
    else:
        for name in pipelines:
            if name not in PIPELINES:
                raise JoinDpError(f"unknown pipeline {name!r}; "
                                  f"choose from {sorted(PIPELINES)}")
        table = {name: PIPELINES[name] for name in pipelines}
    evaluator = FamilyEvaluator(instance.query, family)
    true_answers = evaluator.evaluate_instance(instance)
    true_count = count(instance)
    sens = local_sensitivity(instance)
    envelope = error_envelope_two_table(
        true_count, sens, params.lam,
        f_upper(nominal_domain_size(instance), len(family),
                params.epsilon, params.delta))

    def run_one(task: tuple[int, str]) -> ErrorRow:
        seed, name = task
        rng = RngStream(seed)
        start = time.perf_counter()
        result = table[name](instance, evaluator, params, rng, iterations)
        wall_ms = (time.perf_counter() - start) * 1000.0
        released = evaluator.evaluate_mass(result.distribution.mass)
        err = max_error(true_answers, released)
        return ErrorRow(
            seed=seed,
            pipeline=name,
            epsilon=params.epsilon,
            delta=params.delta,
            count=true_count,
            delta_tilde=_report_delta_tilde(result.report),
            max_error=err,
            envelope=envelope,
            ratio=err / envelope if envelope > 0 else float("inf"),
            wall_ms=wall_ms,
        )

    tasks = [(seed, name) for seed in seeds for name in table]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_one, tasks))
    return [run_one(t) for t in tasks]


def write_error_table(rows: Sequence[ErrorRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ERROR_TABLE_COLUMNS)
        for r in rows:
            writer.writerow([
                r.seed, r.pipeline, repr(r.epsilon), repr(r.delta), r.count,
                repr(r.delta_tilde), repr(r.max_error), repr(r.envelope),
                repr(r.ratio), repr(r.wall_ms),
            ])


def median(values: Sequence[float]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    if n == 0:
        raise ValueError("median of empty sequence")
    mid = n // 2
    if n % 2:
        return ordered[mid]
    return 0.5 * (ordered[mid - 1] + ordered[mid])


def summarize(rows: Sequence[ErrorRow]) -> dict:
    out: dict = {}
    for name in sorted({r.pipeline for r in rows}):
        errs = [r.max_error for r in rows if r.pipeline == name]
        ratios = [r.ratio for r in rows if r.pipeline == name]
        walls = [r.wall_ms for r in rows if r.pipeline == name]
        out[name] = {
            "runs": len(errs),
            "median_max_error": median(errs),
            "median_ratio": median(ratios),
            "median_wall_ms": median(walls),
        }
    return out


def render_figure(rows: Sequence[ErrorRow], path: str | Path) -> None:
    """Per-seed max errors by pipeline, with the shared envelope line."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    markers = ["o", "s", "^", "d", "v"]
    for k, name in enumerate(sorted({r.pipeline for r in rows})):
        sub = sorted((r for r in rows if r.pipeline == name), key=lambda r: r.seed)
        ax.plot(
            [r.seed for r in sub], [r.max_error for r in sub],
            markers[k % len(markers)], ms=5, alpha=0.8, label=name)
    if rows:
        ax.axhline(rows[0].envelope, color="gray", ls="--", lw=1, label="envelope")
    ax.set_xlabel("seed")
    ax.set_ylabel("max query error")
    ax.set_yscale("log")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

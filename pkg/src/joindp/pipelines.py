"""End-to-end private release pipelines for two-relation joins.

Three pipelines share the multiplicative-weights core and differ in how they
calibrate its sensitivity bound:

- two_table: local sensitivity plus a truncated-Laplace shift;
- multi_table: residual sensitivity inflated by a truncated-Laplace factor;
- unif_two_table: partition join values into degree buckets, release each
  sub-instance with the multi-table pipeline, and sum the masses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SchemaNotTwoTableChain, WrongArity
from .noise import PrivacyParams, RngStream, sample_tlap, tau
from .pmw import PmwResult, SyntheticDistribution, pmw
from .queries import FamilyEvaluator
from .relational import Instance, Relation, boundary_attrs
from .sensitivity import local_sensitivity, residual_sensitivity_report


@dataclass(frozen=True)
class BudgetEntry:
    stage: str
    epsilon: float
    delta: float


@dataclass(frozen=True)
class ReleaseReport:
    pipeline: str
    epsilon: float
    delta: float
    ledger: tuple[BudgetEntry, ...]
    epsilon_spent: float
    delta_spent: float
    delta_tilde: float | None = None
    nhat: float | None = None
    iterations: int = 0
    eps_prime: float | None = None
    clip_events: int = 0
    details: dict = field(default_factory=dict)
    sub_reports: tuple["ReleaseReport", ...] = ()


@dataclass(frozen=True)
class ReleaseResult:
    distribution: SyntheticDistribution
    report: ReleaseReport


def _pmw_report(pipeline: str, params: PrivacyParams, head: list[BudgetEntry],
                result: PmwResult, details: dict) -> ReleaseReport:
    half = params.halved()
    quarter = half.halved()
    ledger = tuple(head + [
        BudgetEntry("pmw_total_mass", quarter.epsilon, quarter.delta),
        BudgetEntry("pmw_rounds", quarter.epsilon, quarter.delta),
    ])
    return ReleaseReport(
        pipeline=pipeline,
        epsilon=params.epsilon,
        delta=params.delta,
        ledger=ledger,
        epsilon_spent=sum(e.epsilon for e in ledger),
        delta_spent=sum(e.delta for e in ledger),
        delta_tilde=result.delta_tilde,
        nhat=result.nhat,
        iterations=result.iterations,
        eps_prime=result.eps_prime,
        clip_events=result.clip_events,
        details=details,
    )


def release_two_table(
    instance: Instance,
    evaluator: FamilyEvaluator,
    params: PrivacyParams,
    rng: RngStream,
    iterations: int | None = None,
) -> ReleaseResult:
    """Calibrate to local sensitivity shifted up by a truncated Laplace."""
    if instance.query.num_relations != 2:
        raise WrongArity("two-table release expects exactly two relations")
    half = params.halved()
    ls = local_sensitivity(instance)
    shift = tau(half.epsilon, half.delta, 1.0)
    delta_tilde = ls + sample_tlap(2.0 / params.epsilon, shift, rng)
    result = pmw(instance, evaluator, half, delta_tilde, rng, iterations)
    head = [BudgetEntry("sensitivity_shift", half.epsilon, half.delta)]
    report = _pmw_report(
        "two_table", params, head, result,
        {"local_sensitivity": ls, "shift": shift})
    return ReleaseResult(result.distribution, report)


def release_multi_table(
    instance: Instance,
    evaluator: FamilyEvaluator,
    params: PrivacyParams,
    rng: RngStream,
    iterations: int | None = None,
) -> ReleaseResult:
    """Calibrate to residual sensitivity inflated multiplicatively."""
    half = params.halved()
    beta = 1.0 / params.lam
    rs = residual_sensitivity_report(instance, beta)
    shift = tau(half.epsilon, half.delta, beta)
    delta_tilde = rs.value * math.exp(
        sample_tlap(2.0 * beta / params.epsilon, shift, rng))
    result = pmw(instance, evaluator, half, delta_tilde, rng, iterations)
    head = [BudgetEntry("sensitivity_shift", half.epsilon, half.delta)]
    report = _pmw_report(
        "multi_table", params, head, result,
        {"beta": beta, "residual_sensitivity": rs.value,
         "residual_best_k": rs.best_k, "shift": shift})
    return ReleaseResult(result.distribution, report)


def bucket_index(noisy_degree: float, lam: float) -> int:
    """Bucket i covers noisy degrees in (lam * 2^(i-1), lam * 2^i]."""
    if lam <= 0:
        raise ValueError(f"lam must be positive, got {lam}")
    if noisy_degree <= 0:
        return 1
    return max(1, math.ceil(math.log2(noisy_degree / lam)))


@dataclass(frozen=True)
class PartitionResult:
    lam: float
    join_attrs: tuple[str, ...]
    assignment: dict[tuple[int, ...], int]
    noisy_degrees: dict[tuple[int, ...], float]
    sub_instances: dict[int, Instance]

    @property
    def num_draws(self) -> int:
        return len(self.noisy_degrees)

    @property
    def max_multiplicity(self) -> int:
        # every tuple projects to exactly one join value, hence one bucket
        return 1


def partition_two_table(
    instance: Instance,
    params: PrivacyParams,
    rng: RngStream,
) -> PartitionResult:
    """Assign each join-attribute value to a degree bucket.

    The bucketed quantity is the larger of the value's two per-relation
    degrees plus centered truncated-Laplace noise, so with no noise the
    bucket reflects the true degree. Values are processed in sorted order,
    one draw each.
    """
    query = instance.query
    if query.num_relations != 2:
        raise WrongArity("two-table partition expects exactly two relations")
    join_attrs = boundary_attrs(query, {0})
    if len(join_attrs) != 1:
        raise SchemaNotTwoTableChain(
            "the two relations must share exactly one attribute, "
            f"found {list(join_attrs)}")

    pos = []
    degs: list[dict[tuple[int, ...], int]] = [{}, {}]
    for i in range(2):
        schema = query.relations[i]
        pos.append([schema.index(a) for a in join_attrs])
        for t, f in instance.relations[i].support.items():
            key = tuple(t[p] for p in pos[i])
            degs[i][key] = degs[i].get(key, 0) + f

    shift = tau(params.epsilon, params.delta, 1.0)
    assignment: dict[tuple[int, ...], int] = {}
    noisy: dict[tuple[int, ...], float] = {}
    for b in sorted(degs[0].keys() | degs[1].keys()):
        deg = max(degs[0].get(b, 0), degs[1].get(b, 0))
        noisy_deg = deg + (sample_tlap(1.0 / params.epsilon, shift, rng) - shift)
        noisy[b] = noisy_deg
        assignment[b] = bucket_index(noisy_deg, params.lam)

    sub_instances: dict[int, Instance] = {}
    for bucket in sorted(set(assignment.values())):
        keep = {b for b, idx in assignment.items() if idx == bucket}
        relations = []
        for i in range(2):
            support = {
                t: f for t, f in instance.relations[i].support.items()
                if tuple(t[p] for p in pos[i]) in keep
            }
            relations.append(Relation(query.relations[i], support))
        sub_instances[bucket] = instance.replace_relations(relations)
    return PartitionResult(params.lam, join_attrs, assignment, noisy, sub_instances)


def release_uniformized_two_table(
    instance: Instance,
    evaluator: FamilyEvaluator,
    params: PrivacyParams,
    rng: RngStream,
    iterations: int | None = None,
) -> ReleaseResult:
    """Partition by degree bucket, release each bucket, sum the masses.

    Buckets are data-disjoint, so the release stage composes in parallel;
    each sub-release runs on its own stream keyed by the bucket index.
    """
    half = params.halved()
    part = partition_two_table(instance, half, rng.substream(0))
    combined = SyntheticDistribution(
        instance.query, np.zeros(instance.query.joined_domain_size))
    sub_reports = []
    for bucket in sorted(part.sub_instances):
        sub = part.sub_instances[bucket]
        result = release_multi_table(
            sub, evaluator, half, rng.substream(bucket), iterations)
        combined = combined.combine(result.distribution)
        sub_reports.append(replace(result.report, details={
            **result.report.details, "bucket": bucket}))
    ledger = (
        BudgetEntry("partition", half.epsilon, half.delta),
        BudgetEntry("releases", half.epsilon, half.delta),
    )
    report = ReleaseReport(
        pipeline="unif_two_table",
        epsilon=params.epsilon,
        delta=params.delta,
        ledger=ledger,
        epsilon_spent=sum(e.epsilon for e in ledger),
        delta_spent=sum(e.delta for e in ledger),
        iterations=sum(r.iterations for r in sub_reports),
        clip_events=sum(r.clip_events for r in sub_reports),
        details={
            "lam": part.lam,
            "num_values": part.num_draws,
            "buckets": {str(b): len(s) for b, s in
                        _bucket_sizes(part).items()},
        },
        sub_reports=tuple(sub_reports),
    )
    return ReleaseResult(combined, report)


def _bucket_sizes(part: PartitionResult) -> dict[int, list]:
    out: dict[int, list] = {}
    for b, idx in part.assignment.items():
        out.setdefault(idx, []).append(b)
    return out

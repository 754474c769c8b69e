"""Private multiplicative weights over the dense joined domain.

Maintains a synthetic mass vector with the noisy join size as total mass,
repeatedly selects a badly-answered query with the exponential mechanism,
measures it with Laplace noise, and reweights. The released distribution is
the average of the post-update iterates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainTooLarge
from .noise import PrivacyParams, RngStream, exp_mechanism, sample_laplace, sample_tlap, tau
from .queries import DENSE_DOMAIN_CAP, FamilyEvaluator
from .relational import Instance, JoinQuery, count

# Reweighting exponents beyond this magnitude are clipped (and counted).
EXPONENT_CLIP = 50.0


@dataclass(frozen=True)
class SyntheticDistribution:
    """Dense nonnegative mass over the joined domain."""

    query: JoinQuery
    mass: np.ndarray

    def __post_init__(self) -> None:
        if self.mass.shape != (self.query.joined_domain_size,):
            raise ValueError("mass length must equal the joined domain size")

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def combine(self, other: "SyntheticDistribution") -> "SyntheticDistribution":
        if other.query != self.query:
            raise ValueError("cannot combine distributions over different domains")
        return SyntheticDistribution(self.query, self.mass + other.mass)


@dataclass(frozen=True)
class PmwResult:
    distribution: SyntheticDistribution
    nhat: float
    delta_tilde: float
    iterations: int
    eps_prime: float
    chosen: tuple[int, ...]
    measurements: tuple[float, ...]
    clip_events: int


def default_iterations(
    nhat: float,
    epsilon: float,
    delta: float,
    domain_size: int,
    family_size: int,
    delta_tilde: float,
) -> int:
    """Iteration budget balancing per-round noise against convergence."""
    upper = 4 * family_size
    denom = delta_tilde * math.log2(max(family_size, 1)) * math.sqrt(math.log2(1 / delta))
    if denom <= 0:
        return upper
    k = round(nhat * epsilon * math.sqrt(math.log2(domain_size)) / denom)
    return min(max(k, 1), upper)


def mw_update(
    mass: np.ndarray,
    row: np.ndarray,
    measured: float,
    current_answer: float,
    nhat: float,
    renormalize: bool = True,
) -> tuple[np.ndarray, int]:
    """One multiplicative-weights step; returns the new mass and how many
    cells had their exponent clipped."""
    exponent = row * ((measured - current_answer) / (2.0 * nhat))
    clipped = int(np.count_nonzero(np.abs(exponent) > EXPONENT_CLIP))
    np.clip(exponent, -EXPONENT_CLIP, EXPONENT_CLIP, out=exponent)
    out = mass * np.exp(exponent)
    if renormalize:
        total = out.sum()
        if total > 0:
            out *= nhat / total
    return out, clipped


def pmw(
    instance: Instance,
    evaluator: FamilyEvaluator,
    params: PrivacyParams,
    delta_tilde: float,
    rng: RngStream,
    iterations: int | None = None,
) -> PmwResult:
    """Release a synthetic distribution answering the evaluator's family.

    ``delta_tilde`` is the (already noisy) sensitivity bound the noise scales
    are calibrated to. Draw order per run: total-mass shift first, then per
    round one selection draw followed by one measurement draw.
    """
    if delta_tilde <= 0:
        raise ValueError(f"delta_tilde must be positive, got {delta_tilde}")
    query = instance.query
    if query.joined_domain_size > DENSE_DOMAIN_CAP:
        raise DomainTooLarge(
            f"joined domain {query.joined_domain_size} exceeds the dense cap "
            f"{DENSE_DOMAIN_CAP}")
    half = params.halved()
    true_count = count(instance)
    shift = tau(half.epsilon, half.delta, delta_tilde)
    nhat = true_count + sample_tlap(2.0 * delta_tilde / params.epsilon, shift, rng)

    domain = query.joined_domain_size
    k = iterations if iterations is not None else default_iterations(
        nhat, params.epsilon, params.delta, domain, len(evaluator.family), delta_tilde)
    eps_prime = params.epsilon / (16.0 * math.sqrt(k * math.log(1.0 / params.delta)))

    if nhat <= 0:
        zero = SyntheticDistribution(query, np.zeros(domain))
        return PmwResult(zero, nhat, delta_tilde, 0, eps_prime, (), (), 0)

    true_answers = evaluator.evaluate_instance(instance)
    mass = np.full(domain, nhat / domain, dtype=np.float64)
    acc = np.zeros(domain, dtype=np.float64)
    chosen: list[int] = []
    measurements: list[float] = []
    clip_events = 0
    for _ in range(k):
        current = evaluator.evaluate_mass(mass)
        scores = np.abs(current - true_answers) / delta_tilde
        j = exp_mechanism(scores, eps_prime, 1.0, rng)
        measured = true_answers[j] + sample_laplace(delta_tilde / eps_prime, rng)
        mass, clipped = mw_update(mass, evaluator.row(j), measured, current[j], nhat)
        clip_events += clipped
        acc += mass
        chosen.append(j)
        measurements.append(measured)

    released = SyntheticDistribution(query, acc / k)
    return PmwResult(
        released, nhat, delta_tilde, k, eps_prime,
        tuple(chosen), tuple(measurements), clip_events)

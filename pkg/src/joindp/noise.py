"""Noise primitives: truncated/shifted Laplace, plain Laplace, exponential mechanism.

All sampling goes through an explicit RngStream; there is no hidden global
state. A stream constructed with ``zero_noise=True`` collapses every draw to
its distribution's shift (tau for the truncated Laplace, 0 for Laplace, argmax
for the exponential mechanism). That flag exists for deterministic tests only
and is not reachable from the CLI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteScore


@dataclass(frozen=True)
class PrivacyParams:
    """An (epsilon, delta) budget; delta is capped at 1/2 by standing assumption."""

    epsilon: float
    delta: float

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.delta <= 0.5:
            raise ValueError(f"delta must be in (0, 1/2], got {self.delta}")

    def halved(self) -> "PrivacyParams":
        return PrivacyParams(self.epsilon / 2, self.delta / 2)

    @property
    def lam(self) -> float:
        """The privacy scale (1/epsilon) * ln(1/delta)."""
        return math.log(1.0 / self.delta) / self.epsilon


@dataclass
class RngStream:
    """Seeded, stream-addressed randomness: identical (seed, stream_id) gives
    identical sample sequences."""

    seed: int
    stream_id: int = 0
    zero_noise: bool = False  # test hook; never set by the CLI
    _gen: np.random.Generator | None = field(default=None, repr=False, compare=False)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF,
                                         self.stream_id & 0xFFFFFFFFFFFFFFFF])
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def substream(self, stream_id: int) -> "RngStream":
        """Fresh stream under the same seed, used for parallel sub-releases."""
        return RngStream(self.seed, stream_id, zero_noise=self.zero_noise)


def tau(epsilon: float, delta: float, sensitivity: float) -> float:
    """Shift of the truncated Laplace mechanism:
    (sensitivity/epsilon) * ln(1 + (e^epsilon - 1)/delta).

    Monotone increasing in sensitivity, decreasing in delta; zero when the
    sensitivity is zero.
    """
    if sensitivity < 0:
        raise ValueError(f"sensitivity must be non-negative, got {sensitivity}")
    if sensitivity == 0:
        return 0.0
    return (sensitivity / epsilon) * math.log1p(math.expm1(epsilon) / delta)


def sample_laplace(scale: float, rng: RngStream) -> float:
    """One draw from the zero-mean Laplace distribution with the given scale."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    if rng.zero_noise:
        return 0.0
    # inverse CDF of Laplace via a symmetric uniform
    u = rng.generator.uniform(-0.5, 0.5)
    return -scale * math.copysign(1.0, u) * math.log1p(-2.0 * abs(u))


def sample_tlap(scale: float, shift: float, rng: RngStream) -> float:
    """One draw from the truncated Laplace supported on [0, 2*shift] with
    density proportional to exp(-|x - shift|/scale) there.

    Exact inverse-CDF sampling (no rejection) so replay is reproducible.
    """
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    if not shift > 0:
        raise ValueError(f"shift must be positive, got {shift}")
    if rng.zero_noise:
        return shift
    u = rng.generator.uniform(0.0, 1.0)
    # CDF at the center is 1/2 by symmetry; each half is a truncated exponential.
    # Within [0, shift]: F(x) = c * (exp((x - shift)/scale) - exp(-shift/scale))
    # with c chosen so F(shift) = 1/2.
    edge = math.exp(-shift / scale)  # density mass factor at the support edge
    half = 1.0 - edge
    if u <= 0.5:
        x = shift + scale * math.log(edge + 2.0 * u * half)
    else:
        x = shift - scale * math.log(edge + 2.0 * (1.0 - u) * half)
    # guard the support against float rounding at the edges
    return min(max(x, 0.0), 2.0 * shift)


def exp_mechanism(
    scores: "np.ndarray | list[float]",
    epsilon_prime: float,
    sensitivity: float,
    rng: RngStream,
) -> int:
    """Sample an index with probability proportional to
    exp(+0.5 * epsilon_prime * score / sensitivity).

    The positive sign selects LARGE scores (max-selection). Weights are
    stabilized by subtracting the max score before exponentiation, which
    leaves the choice distribution unchanged.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("scores must be non-empty")
    if not np.all(np.isfinite(s)):
        raise NonFiniteScore(f"non-finite score among {s.size} candidates")
    if not sensitivity > 0:
        raise ValueError(f"sensitivity must be positive, got {sensitivity}")
    if not epsilon_prime > 0:
        raise ValueError(f"epsilon_prime must be positive, got {epsilon_prime}")
    if rng.zero_noise:
        return int(np.argmax(s))
    logits = 0.5 * epsilon_prime * (s - s.max()) / sensitivity
    weights = np.exp(logits)
    probs = weights / weights.sum()
    return int(rng.generator.choice(s.size, p=probs))

"""Numeric primitives shared by every rate formula.

Units are fixed per function: entropies are in bits, KL divergence in nats
(the signature-security exponents are natural-exponential). The convention
0*log(0) = 0 applies throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .exceptions import ParameterError

__all__ = [
    "Probability",
    "ConfidenceInterval",
    "SecurityBudget",
    "validate_probability",
    "binary_entropy",
    "kl_divergence",
    "poisson_pmf",
    "hoeffding_interval",
    "finite_key_penalty",
]

# A probability is a plain float in [0, 1]; constructors of records holding
# one call validate_probability at the boundary.
Probability = float


def validate_probability(value: float, name: str = "value") -> float:
    """Return ``value`` if it lies in [0, 1], else raise ParameterError."""
    v = float(value)
    if math.isnan(v) or v < 0.0 or v > 1.0:
        raise ParameterError(f"{name} must be a probability in [0, 1], got {value!r}")
    return v


@dataclass(frozen=True)
class ConfidenceInterval:
    """Two-sided interval [lower, upper] holding with the stated confidence.

    Intervals for probability-valued quantities are clamped to [0, 1] by the
    producing estimator; construction only enforces ordering.
    """

    lower: float
    upper: float
    confidence: Probability

    def __post_init__(self) -> None:
        validate_probability(self.confidence, "confidence")
        if self.lower > self.upper:
            raise ParameterError(
                f"interval lower {self.lower} exceeds upper {self.upper}"
            )

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper


@dataclass(frozen=True)
class SecurityBudget:
    """Composable failure-probability budget; total is the plain sum."""

    eps_sec: float
    eps_cor: float
    eps_pe: float
    eps_auth: float

    def __post_init__(self) -> None:
        for name in ("eps_sec", "eps_cor", "eps_pe", "eps_auth"):
            v = getattr(self, name)
            if not (v > 0.0):
                raise ParameterError(f"{name} must be > 0, got {v!r}")

    @property
    def total(self) -> float:
        return self.eps_sec + self.eps_cor + self.eps_pe + self.eps_auth


def binary_entropy(x: Probability) -> float:
    """Binary entropy h2(x) = -x*log2(x) - (1-x)*log2(1-x), in bits."""
    x = validate_probability(x, "x")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def kl_divergence(p: Probability, q: Probability) -> float:
    """KL divergence D(p || q) between Bernoulli(p) and Bernoulli(q), in nats.

    Raises for q in {0, 1} whenever the corresponding p term is nonzero
    (the divergence is infinite there).
    """
    p = validate_probability(p, "p")
    q = validate_probability(q, "q")
    if q == 0.0 and p > 0.0:
        raise ParameterError("D(p||q) is infinite for q=0 with p>0")
    if q == 1.0 and p < 1.0:
        raise ParameterError("D(p||q) is infinite for q=1 with p<1")
    total = 0.0
    if p > 0.0:
        total += p * math.log(p / q)
    if p < 1.0:
        total += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
    # tiny negative values are floating-point noise around p == q
    return max(0.0, total)


def poisson_pmf(n: int, mu: float) -> Probability:
    """P_n(mu) = mu^n e^{-mu} / n! for a Poisson photon-number source."""
    if n < 0 or n != int(n):
        raise ParameterError(f"n must be a non-negative integer, got {n!r}")
    if mu < 0.0:
        raise ParameterError(f"mu must be >= 0, got {mu!r}")
    n = int(n)
    if mu == 0.0:
        return 1.0 if n == 0 else 0.0
    # log-space evaluation stays finite for any (n, mu) in range
    return math.exp(n * math.log(mu) - mu - math.lgamma(n + 1))


def hoeffding_interval(
    successes: int, trials: int, confidence: Probability
) -> ConfidenceInterval:
    """Two-sided Hoeffding interval around k/n, clamped to [0, 1].

    Half-width sqrt(ln(2/(1-confidence)) / (2n)); distribution-free.
    """
    if trials < 1:
        raise ParameterError(f"trials must be >= 1, got {trials!r}")
    if not 0 <= successes <= trials:
        raise ParameterError(f"successes {successes} outside [0, {trials}]")
    confidence = validate_probability(confidence, "confidence")
    if confidence >= 1.0:
        raise ParameterError("confidence must be < 1 for a finite interval")
    center = successes / trials
    half_width = math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * trials))
    return ConfidenceInterval(
        lower=max(0.0, center - half_width),
        upper=min(1.0, center + half_width),
        confidence=confidence,
    )


def finite_key_penalty(n_pulses: int, eps_sec: float) -> float:
    """Finite-block penalty sqrt(ln(2/eps_sec) / N); monotone decreasing in N."""
    if n_pulses < 1:
        raise ParameterError(f"N must be >= 1, got {n_pulses!r}")
    if not 0.0 < eps_sec < 2.0:
        raise ParameterError(f"eps_sec must be in (0, 2), got {eps_sec!r}")
    return math.sqrt(math.log(2.0 / eps_sec) / n_pulses)

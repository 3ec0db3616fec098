"""Decoy-state estimation: gain tables, Y0/Y1/e1 bounds, and the secret rate.

Three single-photon-yield estimators coexist behind one interface:

  paper-two-decoy   classic two-intensity lower bound, unmodified
  paper-alg3        three-intensity variant with an explicit max(0, .)
  lmc-reference     vacuum + weak-decoy bound; the sound reference

The classic bounds are not true lower bounds on ideal channels (their raw value
exceeds 1 on a unit-yield table), so raw and clamped values are both kept,
with a soundness flag; nothing is hidden by clamping. The lmc-reference
error bound drops the spurious e^nu factor from the denominator, which is
required for it to actually upper-bound the single-photon error.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

from .channel import LinkModel, error_yield_n, yield_n
from .exceptions import EstimationError, ParameterError
from .mathutils import Probability, binary_entropy, poisson_pmf, validate_probability

__all__ = [
    "ESTIMATOR_IDS",
    "IntensitySet",
    "GainEntry",
    "GainTable",
    "DecoyEstimate",
    "gains_from_model",
    "estimate_y0",
    "estimate_y1_paper",
    "estimate_y1_alg3",
    "estimate_y1_lmc",
    "estimate_e1",
    "estimate_e1_lmc",
    "estimate_decoy",
    "decoy_key_rate",
]

ESTIMATOR_IDS = ("paper-two-decoy", "paper-alg3", "lmc-reference")

# Poisson sums stop once the remaining tail mass is below this.
_POISSON_TAIL = 1e-15
_GAIN_CSV_COLUMNS = ("intensity", "gain", "qber", "trials")


@dataclass(frozen=True)
class IntensitySet:
    """Signal/decoy/vacuum intensities and their usage fractions."""

    signal_mu: float
    decoy_nu: float
    vacuum_omega: float = 0.0
    usage_fractions: tuple[float, float, float] = (0.8, 0.15, 0.05)

    def __post_init__(self) -> None:
        if not self.signal_mu > self.decoy_nu > self.vacuum_omega >= 0.0:
            raise ParameterError(
                "need signal_mu > decoy_nu > vacuum_omega >= 0, got "
                f"({self.signal_mu}, {self.decoy_nu}, {self.vacuum_omega})"
            )
        if len(self.usage_fractions) != 3:
            raise ParameterError("usage_fractions must have three entries")
        for f in self.usage_fractions:
            validate_probability(f, "usage fraction")
        if abs(sum(self.usage_fractions) - 1.0) > 1e-9:
            raise ParameterError("usage_fractions must sum to 1")

    @property
    def levels(self) -> tuple[float, float, float]:
        return (self.signal_mu, self.decoy_nu, self.vacuum_omega)


@dataclass(frozen=True)
class GainEntry:
    intensity: float
    gain: Probability
    qber: Probability
    trials: int = 0  # 0 marks an analytic (non-sampled) entry

    def __post_init__(self) -> None:
        if self.intensity < 0.0:
            raise ParameterError("intensity must be >= 0")
        validate_probability(self.gain, "gain")
        validate_probability(self.qber, "qber")
        if self.trials < 0:
            raise ParameterError("trials must be >= 0")


@dataclass(frozen=True)
class GainTable:
    """Per-intensity observed gain Q_lambda and error rate E_lambda."""

    entries: tuple[GainEntry, ...]

    def __post_init__(self) -> None:
        seen = set()
        for e in self.entries:
            if e.intensity in seen:
                raise ParameterError(f"duplicate intensity {e.intensity}")
            seen.add(e.intensity)

    def entry(self, intensity: float) -> GainEntry:
        for e in self.entries:
            if e.intensity == intensity:
                return e
        raise ParameterError(f"no entry for intensity {intensity}")

    def gain(self, intensity: float) -> float:
        return self.entry(intensity).gain

    def qber(self, intensity: float) -> float:
        return self.entry(intensity).qber

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(_GAIN_CSV_COLUMNS)
        for e in self.entries:
            writer.writerow([repr(e.intensity), repr(e.gain), repr(e.qber), e.trials])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "GainTable":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or tuple(header) != _GAIN_CSV_COLUMNS:
            raise ParameterError(
                f"gain table header must be {','.join(_GAIN_CSV_COLUMNS)}"
            )
        entries = []
        for row in reader:
            if not row:
                continue
            if len(row) != 4:
                raise ParameterError(f"malformed gain table row: {row!r}")
            entries.append(
                GainEntry(
                    intensity=float(row[0]),
                    gain=float(row[1]),
                    qber=float(row[2]),
                    trials=int(row[3]),
                )
            )
        return cls(entries=tuple(entries))


@dataclass(frozen=True)
class DecoyEstimate:
    """Decoy bounds with raw and clamped values.

    y1 = clamp(y1_raw, 0, 1); e1 = clamp(e1_raw, 0, 0.5); q1 = mu e^-mu y1.
    `sound` records whether every raw value was already in range, so
    clamping never silently hides an unsound bound. e1 fields are None for
    partial (yield-only) estimates and when the single-photon yield is zero.
    """

    estimator_id: str
    y0: Probability
    y1_raw: float
    y1: Probability
    q1: Probability
    e1_raw: float | None = None
    e1: Probability | None = None
    sound: bool = True

    def __post_init__(self) -> None:
        if self.estimator_id not in ESTIMATOR_IDS:
            raise ParameterError(f"unknown estimator {self.estimator_id!r}")
        validate_probability(self.y0, "y0")
        if abs(self.y1 - min(max(self.y1_raw, 0.0), 1.0)) > 1e-12:
            raise ParameterError("y1 must equal clamp(y1_raw, 0, 1)")
        if self.e1_raw is not None:
            clamped = min(max(self.e1_raw, 0.0), 0.5)
            if self.e1 is None or abs(self.e1 - clamped) > 1e-12:
                raise ParameterError("e1 must equal clamp(e1_raw, 0, 0.5)")


def _truncated_poisson_sum(mu: float, term) -> float:
    """Sum P_n(mu) * term(n) until the Poisson tail mass is < 1e-15."""
    total = 0.0
    mass = 0.0
    n = 0
    while mass < 1.0 - _POISSON_TAIL:
        p = poisson_pmf(n, mu)
        total += p * term(n)
        mass += p
        n += 1
        if n > 500:  # unreachable for mu <= ~300; guards nonsense inputs
            break
    return total


def gains_from_model(link: LinkModel, intensities: IntensitySet) -> GainTable:
    """Exact Q_lambda = sum_n P_n(lambda) Y_n and the matching E_lambda.

    Yields come from the threshold-detector model in channel.py; the Poisson
    sums are truncated with error below 1e-12.
    """
    entries = []
    for lam in intensities.levels:
        q = _truncated_poisson_sum(lam, lambda n: yield_n(n, link))
        eq = _truncated_poisson_sum(lam, lambda n: error_yield_n(n, link))
        qber = eq / q if q > 0.0 else 0.0
        entries.append(
            GainEntry(
                intensity=lam,
                gain=min(q, 1.0),
                qber=min(max(qber, 0.0), 1.0),
                trials=0,
            )
        )
    return GainTable(entries=tuple(entries))


def estimate_y0(q_omega: Probability) -> Probability:
    """Vacuum-level anchor: Y0 = Q_omega."""
    return validate_probability(q_omega, "q_omega")


def _partial(estimator_id: str, y0: float, y1_raw: float, mu: float) -> DecoyEstimate:
    y1 = min(max(y1_raw, 0.0), 1.0)
    return DecoyEstimate(
        estimator_id=estimator_id,
        y0=y0,
        y1_raw=y1_raw,
        y1=y1,
        q1=mu * math.exp(-mu) * y1,
        sound=0.0 <= y1_raw <= 1.0,
    )


def estimate_y1_paper(
    q_mu: Probability, q_nu: Probability, mu: float, nu: float, y0: Probability
) -> DecoyEstimate:
    """Two-decoy bound Y1 >= [mu e^mu Q_nu - nu e^nu Q_mu - (mu-nu) Y0] / (mu nu (mu-nu)).

    Kept in its original algebraic form; it exceeds 1 on ideal channels
    (raw 15.69 on a unit-yield table at mu=0.5, nu=0.1), hence the
    soundness flag.
    """
    if not mu > nu > 0.0:
        raise ParameterError(f"need mu > nu > 0, got mu={mu}, nu={nu}")
    raw = (
        mu * math.exp(mu) * q_nu - nu * math.exp(nu) * q_mu - (mu - nu) * y0
    ) / (mu * nu * (mu - nu))
    return _partial("paper-two-decoy", y0, raw, mu)


def estimate_y1_alg3(
    q_mu_s: Probability,
    q_mu_d: Probability,
    q_mu_0: Probability,
    mu_s: float,
    mu_d: float,
    mu_0: float,
) -> DecoyEstimate:
    """Three-intensity variant: Y1 = max(0, A/B).

    A = mu_s e^{mu_s} Q_{mu_d} - mu_d e^{mu_d} Q_{mu_s}
        - (mu_s - mu_d) e^{mu_0} Q_{mu_0};  B = mu_s mu_d (mu_s - mu_d).
    """
    if not mu_s > mu_d > mu_0 >= 0.0:
        raise ParameterError(
            f"need mu_s > mu_d > mu_0 >= 0, got ({mu_s}, {mu_d}, {mu_0})"
        )
    a = (
        mu_s * math.exp(mu_s) * q_mu_d
        - mu_d * math.exp(mu_d) * q_mu_s
        - (mu_s - mu_d) * math.exp(mu_0) * q_mu_0
    )
    b = mu_s * mu_d * (mu_s - mu_d)
    raw = a / b
    est = _partial("paper-alg3", estimate_y0(q_mu_0), max(0.0, raw), mu_s)
    # keep the pre-max raw value for audit; sound iff it was already in range
    return replace(est, y1_raw=raw, sound=0.0 <= raw <= 1.0)


def estimate_y1_lmc(
    q_mu: Probability, q_nu: Probability, mu: float, nu: float, y0: Probability
) -> DecoyEstimate:
    """Sound vacuum + weak-decoy lower bound.

    Y1 >= mu/(mu nu - nu^2) * [Q_nu e^nu - (nu/mu)^2 Q_mu e^mu
                               - (mu^2-nu^2)/mu^2 * Y0]

    Valid for any non-negative yields with nu < mu.
    """
    if not mu > nu > 0.0:
        raise ParameterError(f"need mu > nu > 0, got mu={mu}, nu={nu}")
    raw = (mu / (mu * nu - nu * nu)) * (
        q_nu * math.exp(nu)
        - (nu / mu) ** 2 * q_mu * math.exp(mu)
        - ((mu * mu - nu * nu) / (mu * mu)) * y0
    )
    return _partial("lmc-reference", y0, raw, mu)


def _e1_from_raw(est: DecoyEstimate, raw: float) -> DecoyEstimate:
    clamped = min(max(raw, 0.0), 0.5)
    return replace(
        est, e1_raw=raw, e1=clamped, sound=est.sound and 0.0 <= raw <= 0.5
    )


def estimate_e1(
    e_nu: Probability,
    q_nu: Probability,
    nu: float,
    y0: Probability,
    est: DecoyEstimate,
) -> DecoyEstimate:
    """Classic error bound e1 <= (E_nu Q_nu e^nu - e0 Y0) / (nu e^nu Y1), e0 = 1/2.

    Clamped to [0, 0.5]. Raises when the single-photon yield is zero.
    """
    if est.y1 <= 0.0:
        raise EstimationError("insufficient single-photon yield (Y1 = 0)")
    raw = (e_nu * q_nu * math.exp(nu) - 0.5 * y0) / (nu * math.exp(nu) * est.y1)
    return _e1_from_raw(est, raw)


def estimate_e1_lmc(
    e_nu: Probability,
    q_nu: Probability,
    nu: float,
    y0: Probability,
    est: DecoyEstimate,
) -> DecoyEstimate:
    """Sound error bound e1 <= (E_nu Q_nu e^nu - e0 Y0) / (nu Y1), e0 = 1/2.

    Identical to the classic form except for the denominator's e^nu, which
    must be absent for the expression to upper-bound e1.
    """
    if est.y1 <= 0.0:
        raise EstimationError("insufficient single-photon yield (Y1 = 0)")
    raw = (e_nu * q_nu * math.exp(nu) - 0.5 * y0) / (nu * est.y1)
    return _e1_from_raw(est, raw)


def estimate_decoy(
    table: GainTable, intensities: IntensitySet, estimator_id: str = "lmc-reference"
) -> DecoyEstimate:
    """Full estimation chain Y0 -> Y1 -> Q1 -> e1 for the chosen estimator.

    A zero single-photon yield degrades e1 to the maximal 0.5 instead of
    raising, so pipelines can report the (non-positive) rate.
    """
    if estimator_id not in ESTIMATOR_IDS:
        raise ParameterError(f"unknown estimator {estimator_id!r}")
    mu, nu, omega = intensities.levels
    y0 = estimate_y0(table.gain(omega))
    if estimator_id == "paper-two-decoy":
        est = estimate_y1_paper(table.gain(mu), table.gain(nu), mu, nu, y0)
    elif estimator_id == "paper-alg3":
        est = estimate_y1_alg3(
            table.gain(mu), table.gain(nu), table.gain(omega), mu, nu, omega
        )
    else:
        est = estimate_y1_lmc(table.gain(mu), table.gain(nu), mu, nu, y0)
    if est.y1 <= 0.0:
        return replace(est, e1_raw=None, e1=0.5, sound=False)
    e1_fn = estimate_e1_lmc if estimator_id == "lmc-reference" else estimate_e1
    return e1_fn(table.qber(nu), table.gain(nu), nu, y0, est)


def decoy_key_rate(
    q: Probability,
    q_mu: Probability,
    e_mu: Probability,
    q1: Probability,
    e1: Probability,
    f: float,
) -> float:
    """R >= q * [-Q_mu f(E_mu) h2(E_mu) + Q1 (1 - h2(e1))], signed.

    Callers treat R <= 0 as "insufficient key rate".
    """
    if f < 1.0:
        raise ParameterError("f must be >= 1")
    for name, v in (("q", q), ("q_mu", q_mu), ("e_mu", e_mu), ("q1", q1), ("e1", e1)):
        validate_probability(v, name)
    return q * (-q_mu * f * binary_entropy(e_mu) + q1 * (1.0 - binary_entropy(e1)))

"""Physical-layer models: fiber loss, detection probability, QBER decomposition.

All records are immutable; every function is pure. The detection model is the
standard threshold-detector one: a pulse clicks if the detector fires on any
transmitted photon or on a dark count, and dark-count errors are random
(weight exactly 0.5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .exceptions import DeadLinkError, ParameterError
from .mathutils import Probability, validate_probability

__all__ = [
    "FiberLink",
    "Detector",
    "OpticalQuality",
    "LinkModel",
    "transmissivity",
    "p_signal",
    "qber_model",
    "yield_n",
    "error_yield_n",
]


@dataclass(frozen=True)
class FiberLink:
    """Fiber span: attenuation in dB/km plus lumped extra losses in dB.

    extra_loss_db aggregates connectors/splices as a single scalar.
    """

    attenuation_db_per_km: float
    length_km: float
    extra_loss_db: float = 0.0

    def __post_init__(self) -> None:
        if not self.attenuation_db_per_km > 0.0:
            raise ParameterError("attenuation_db_per_km must be > 0")
        if self.length_km < 0.0:
            raise ParameterError("length_km must be >= 0")
        if self.extra_loss_db < 0.0:
            raise ParameterError("extra_loss_db must be >= 0")


@dataclass(frozen=True)
class Detector:
    """Threshold detector: efficiency eta_d and dark-count probability per gate."""

    efficiency: Probability
    dark_count_prob: Probability

    def __post_init__(self) -> None:
        validate_probability(self.efficiency, "efficiency")
        validate_probability(self.dark_count_prob, "dark_count_prob")


@dataclass(frozen=True)
class OpticalQuality:
    """Interference visibility V and residual misalignment error.

    The optical error contribution is Q_opt = (1 - V) / 2.
    """

    visibility: Probability
    misalignment_qber: Probability = 0.0

    def __post_init__(self) -> None:
        validate_probability(self.visibility, "visibility")
        validate_probability(self.misalignment_qber, "misalignment_qber")

    @property
    def optical_qber(self) -> float:
        return (1.0 - self.visibility) / 2.0


@dataclass(frozen=True)
class LinkModel:
    """Composite link: fiber + detector + optics + source mean photon number."""

    fiber: FiberLink
    detector: Detector
    optics: OpticalQuality
    mean_photon_number: float

    def __post_init__(self) -> None:
        if self.mean_photon_number < 0.0:
            raise ParameterError("mean_photon_number must be >= 0")

    @property
    def eta_channel(self) -> float:
        return transmissivity(self.fiber)

    @property
    def eta_total(self) -> float:
        """Channel transmissivity times detector efficiency."""
        return transmissivity(self.fiber) * self.detector.efficiency


def transmissivity(fiber: FiberLink) -> Probability:
    """eta = 10^(-(alpha*L + extra)/10), in (0, 1]."""
    total_db = fiber.attenuation_db_per_km * fiber.length_km + fiber.extra_loss_db
    return 10.0 ** (-total_db / 10.0)


def p_signal(mu: float, eta: Probability, eta_d: Probability) -> Probability:
    """Per-pulse signal detection probability 1 - exp(-mu*eta*eta_d)."""
    if mu < 0.0:
        raise ParameterError("mu must be >= 0")
    validate_probability(eta, "eta")
    validate_probability(eta_d, "eta_d")
    return -math.expm1(-mu * eta * eta_d)


def qber_model(link: LinkModel) -> tuple[Probability, Probability]:
    """Modeled (QBER, detection probability) for a DV link.

    Q = (Q_opt*p_sig + 0.5*p_d) / (p_sig + p_d) + Q_misalign, clamped to
    [0, 0.5]; p_det = p_sig + p_d. Raises DeadLinkError when no click is
    ever possible.
    """
    p_sig = p_signal(link.mean_photon_number, link.eta_channel, link.detector.efficiency)
    p_d = link.detector.dark_count_prob
    p_det = p_sig + p_d
    if p_det <= 0.0:
        raise DeadLinkError("link can never click: p_sig + p_d = 0")
    q_opt = link.optics.optical_qber
    q = (q_opt * p_sig + 0.5 * p_d) / p_det + link.optics.misalignment_qber
    return min(max(q, 0.0), 0.5), min(p_det, 1.0)


def yield_n(n: int, link: LinkModel) -> Probability:
    """Click probability given an n-photon pulse, Y_n = 1 - (1-Y0)(1-eta*eta_d)^n.

    Y0 is the dark-count probability; Y_0 = Y0 and Y_n -> 1 as n grows.
    Used to generate analytic decoy gain tables.
    """
    if n < 0:
        raise ParameterError("n must be >= 0")
    y0 = link.detector.dark_count_prob
    if n == 0:
        return y0
    eta = link.eta_total
    if eta >= 1.0:
        return 1.0
    # y0 + (1-y0)(1-(1-eta)^n), evaluated without cancellation for small y0
    return y0 + (1.0 - y0) * -math.expm1(n * math.log1p(-eta))


def error_yield_n(n: int, link: LinkModel) -> float:
    """Joint error-and-click probability e_n * Y_n for an n-photon pulse.

    e_n*Y_n = e0*Y0 + e_opt*(Y_n - Y0) with e0 = 0.5 and
    e_opt = Q_opt + Q_misalign.
    """
    y0 = link.detector.dark_count_prob
    e_opt = link.optics.optical_qber + link.optics.misalignment_qber
    return 0.5 * y0 + e_opt * (yield_n(n, link) - y0)

"""Closed-form rate calculators: MDI, TF, DPS/COW/RRDPS, DI, and QDS sizing.

Rate functions return the signed value (reports floor at zero later) except
where the formula itself is defined with a floor. The MDI bounds keep raw
and clamped copies plus a soundness flag, mirroring the decoy policy; no
independent sound variant exists because the observables carry no closed
yield model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

from .exceptions import EstimationError, ParameterError
from .mathutils import (
    Probability,
    binary_entropy,
    finite_key_penalty,
    kl_divergence,
    validate_probability,
)

__all__ = [
    "GainTable2D",
    "MdiEstimate",
    "TfSlice",
    "TfSliceData",
    "QdsParams",
    "mdi_bounds",
    "mdi_rate",
    "tf_rate",
    "dps_rate",
    "cow_rate",
    "rrdps_rate",
    "di_rate",
    "qds_security",
    "qds_required_l",
]


@dataclass(frozen=True)
class GainTable2D:
    """Two-party gain/QBER table keyed by (sender A, sender B) intensity.

    The key domain must be the full product of one intensity level set.
    """

    entries: dict[tuple[float, float], tuple[Probability, Probability]]

    def __post_init__(self) -> None:
        levels = sorted({a for a, _ in self.entries} | {b for _, b in self.entries})
        for key in product(levels, repeat=2):
            if key not in self.entries:
                raise ParameterError(f"gain table missing intensity pair {key}")
        for (a, b), (gain, qber) in self.entries.items():
            validate_probability(gain, f"gain[{a},{b}]")
            validate_probability(qber, f"qber[{a},{b}]")

    def gain(self, a: float, b: float) -> float:
        return self._get(a, b)[0]

    def qber(self, a: float, b: float) -> float:
        return self._get(a, b)[1]

    def _get(self, a: float, b: float) -> tuple[float, float]:
        try:
            return self.entries[(a, b)]
        except KeyError:
            raise ParameterError(f"no gain entry for intensities ({a}, {b})") from None


@dataclass(frozen=True)
class MdiEstimate:
    """Single-photon-pair yield/error bounds; raw values kept for audit."""

    s11_raw: float
    s11: Probability
    e11_raw: float | None
    e11: Probability | None
    sound: bool

    def __post_init__(self) -> None:
        validate_probability(self.s11, "s11")
        if self.e11 is not None:
            if not 0.0 <= self.e11 <= 0.5:
                raise ParameterError("e11 must lie in [0, 0.5]")


@dataclass(frozen=True)
class TfSlice:
    """Per-phase-slice observables for the twin-field rate."""

    n_k: int
    y11: Probability
    e11_phase: Probability
    q_mumu: Probability
    e_mumu: Probability

    def __post_init__(self) -> None:
        if self.n_k < 0:
            raise ParameterError("n_k must be >= 0")
        for name in ("y11", "e11_phase", "q_mumu", "e_mumu"):
            validate_probability(getattr(self, name), name)


@dataclass(frozen=True)
class TfSliceData:
    slices: tuple[TfSlice, ...]
    total_n: int

    def __post_init__(self) -> None:
        if self.total_n < 0:
            raise ParameterError("total_n must be >= 0")
        if sum(s.n_k for s in self.slices) > self.total_n:
            raise ParameterError("slice counts exceed total_n")

    @property
    def num_slices(self) -> int:
        return len(self.slices)


@dataclass(frozen=True)
class QdsParams:
    """Signature-scheme sizing: block length and the four threshold rates.

    Required ordering: p_err < s_auth < s_ver < 1 and p_guess < s_ver.
    """

    block_length: int
    s_auth: Probability
    s_ver: Probability
    p_err: Probability
    p_guess: Probability

    def __post_init__(self) -> None:
        if self.block_length < 0:
            raise ParameterError("block_length must be >= 0")
        for name in ("s_auth", "s_ver", "p_err", "p_guess"):
            validate_probability(getattr(self, name), name)
        if not (self.p_err < self.s_auth < self.s_ver < 1.0):
            raise ParameterError("need p_err < s_auth < s_ver < 1")
        if not self.p_guess < self.s_ver:
            raise ParameterError("need p_guess < s_ver")


def mdi_bounds(gains: GainTable2D, mu: float, nu: float, omega: float) -> MdiEstimate:
    """Three-intensity bounds on the single-photon-pair yield and error.

    S11 >= [mu^2 e^mu (Q_nn - Q_mn) - (mu^2 - nu^2) e^{mu+nu} Q_ww]
           / (mu nu (mu - nu))
    e11 <= (E_nn Q_nn - E_ww Q_ww) / S11

    e11 is unavailable (None) when the S11 bound clamps to zero.
    """
    if not mu > nu > omega >= 0.0:
        raise ParameterError(f"need mu > nu > omega >= 0, got ({mu}, {nu}, {omega})")
    q_nn = gains.gain(nu, nu)
    q_mn = gains.gain(mu, nu)
    q_ww = gains.gain(omega, omega)
    s11_raw = (
        mu * mu * math.exp(mu) * (q_nn - q_mn)
        - (mu * mu - nu * nu) * math.exp(mu + nu) * q_ww
    ) / (mu * nu * (mu - nu))
    s11 = min(max(s11_raw, 0.0), 1.0)
    sound = 0.0 <= s11_raw <= 1.0
    if s11 <= 0.0:
        return MdiEstimate(s11_raw=s11_raw, s11=s11, e11_raw=None, e11=None, sound=False)
    e11_raw = (gains.qber(nu, nu) * q_nn - gains.qber(omega, omega) * q_ww) / s11
    e11 = min(max(e11_raw, 0.0), 0.5)
    return MdiEstimate(
        s11_raw=s11_raw,
        s11=s11,
        e11_raw=e11_raw,
        e11=e11,
        sound=sound and 0.0 <= e11_raw <= 0.5,
    )


def mdi_rate(
    est: MdiEstimate,
    q_mumu: Probability,
    e_mumu: Probability,
    f: float,
    n_pulses: int | None,
    eps_sec: float,
    floor_at_zero: bool = False,
) -> float:
    """R >= S11 [1 - h2(e11)] - Q_mm f(E_mm) h2(E_mm) - Delta_FK(N, eps_sec).

    Pass n_pulses=None for the asymptotic (penalty-free) rate.
    """
    if f < 1.0:
        raise ParameterError("f must be >= 1")
    validate_probability(q_mumu, "q_mumu")
    validate_probability(e_mumu, "e_mumu")
    positive = est.s11 * (1.0 - binary_entropy(est.e11)) if est.e11 is not None else 0.0
    penalty = 0.0
    if n_pulses is not None and math.isfinite(n_pulses):
        penalty = finite_key_penalty(int(n_pulses), eps_sec)
    rate = positive - q_mumu * f * binary_entropy(e_mumu) - penalty
    return max(0.0, rate) if floor_at_zero else rate


def tf_rate(data: TfSliceData, f: float, eps_sec: float) -> float:
    """Phase-sliced twin-field rate.

    R >= sum_k (N_k/N) [Y11_k (1 - h2(e11_phase)) - Q_mm_k f(E_mm_k) h2(E_mm_k)]
         - sqrt(ln(2/eps_sec)/N)
    """
    if f < 1.0:
        raise ParameterError("f must be >= 1")
    if data.total_n <= 0:
        raise ParameterError("total_n must be > 0")
    total = 0.0
    for s in data.slices:
        bracket = s.y11 * (1.0 - binary_entropy(s.e11_phase)) - s.q_mumu * f * binary_entropy(
            s.e_mumu
        )
        total += (s.n_k / data.total_n) * bracket
    return total - finite_key_penalty(data.total_n, eps_sec)


def dps_rate(eta: Probability, mu: float, visibility: Probability, y0: Probability) -> float:
    """Differential-phase-shift rate, floored at zero.

    P_click = 1 - e^{-eta mu} - Y0, Q = (1 - V)/2,
    R >= P_click [1 - 2 h2(Q)].
    """
    validate_probability(eta, "eta")
    validate_probability(visibility, "visibility")
    validate_probability(y0, "y0")
    if mu < 0.0:
        raise ParameterError("mu must be >= 0")
    p_click = -math.expm1(-eta * mu) - y0
    if p_click < 0.0:
        raise ParameterError("P_click < 0: dark counts exceed the click probability")
    q = (1.0 - visibility) / 2.0
    return max(0.0, p_click * (1.0 - 2.0 * binary_entropy(q)))


def cow_rate(
    eta: Probability,
    mu: float,
    visibility: Probability,
    y0: Probability,
    p_monitor: Probability,
) -> float:
    """Coherent-one-way rate, signed.

    R >= P_sig [1 - h2(Q)] - p_m h2((1-V)/2), with
    P_sig = (1 - p_m)(1 - e^{-eta mu} - Y0) and Q ~= (1 - sqrt(V))/2.
    """
    validate_probability(eta, "eta")
    validate_probability(visibility, "visibility")
    validate_probability(y0, "y0")
    if mu < 0.0:
        raise ParameterError("mu must be >= 0")
    if not 0.0 <= p_monitor < 1.0:
        raise ParameterError("p_monitor must be in [0, 1)")
    p_click = -math.expm1(-eta * mu) - y0
    if p_click < 0.0:
        raise ParameterError("P_click < 0: dark counts exceed the click probability")
    p_sig = (1.0 - p_monitor) * p_click
    q = (1.0 - math.sqrt(visibility)) / 2.0
    return p_sig * (1.0 - binary_entropy(q)) - p_monitor * binary_entropy(
        (1.0 - visibility) / 2.0
    )


def rrdps_rate(
    eta: Probability, mu: float, q: Probability, y0: Probability, block_length: int
) -> tuple[float, float]:
    """Round-robin DPS rate and the adversary-information bound.

    I_AE <= 1/(L-1); R >= P_click [1 - h2(Q) - 1/(L-1)] with
    P_click = 1 - e^{-eta mu L} - Y0. The rate is floored at zero; the
    bound is returned exactly.
    """
    if block_length < 2:
        raise ParameterError("block_length must be >= 2")
    validate_probability(eta, "eta")
    validate_probability(q, "q")
    validate_probability(y0, "y0")
    if mu < 0.0:
        raise ParameterError("mu must be >= 0")
    p_click = -math.expm1(-eta * mu * block_length) - y0
    if p_click < 0.0:
        raise ParameterError("P_click < 0: dark counts exceed the click probability")
    adversary_info = 1.0 / (block_length - 1)
    bracket = 1.0 - binary_entropy(q) - adversary_info
    return max(0.0, p_click * bracket), adversary_info


def di_rate(h_a_given_e: float, h_a_given_b: float) -> float:
    """Device-independent combinator R >= H(A|E) - H(A|B), floored at zero."""
    for name, v in (("h_a_given_e", h_a_given_e), ("h_a_given_b", h_a_given_b)):
        if not 0.0 <= v <= 1.0:
            raise ParameterError(f"{name} must lie in [0, 1]")
    return max(0.0, h_a_given_e - h_a_given_b)


def qds_security(params: QdsParams) -> tuple[float, float]:
    """Forgery and repudiation bounds for a length-L signature block.

    Pr[forge] <= exp(-L D(s_ver || p_guess)),
    Pr[repud] <= exp(-L D(p_err || s_auth)), D in nats.

    Both values lie in (0, 1] mathematically; for large L*D they underflow
    to 0.0 in float64.
    """
    d_forge = kl_divergence(params.s_ver, params.p_guess)
    d_repud = kl_divergence(params.p_err, params.s_auth)
    return (
        math.exp(-params.block_length * d_forge),
        math.exp(-params.block_length * d_repud),
    )


def qds_required_l(
    target_eps: float,
    s_auth: Probability,
    s_ver: Probability,
    p_err: Probability,
    p_guess: Probability,
) -> int:
    """Smallest block length with both bounds <= target_eps.

    L = ceil(ln(1/eps) / min(D_forge, D_repud)).
    """
    if not 0.0 < target_eps <= 1.0:
        raise ParameterError("target_eps must be in (0, 1]")
    params = QdsParams(
        block_length=1, s_auth=s_auth, s_ver=s_ver, p_err=p_err, p_guess=p_guess
    )
    d_forge = kl_divergence(params.s_ver, params.p_guess)
    d_repud = kl_divergence(params.p_err, params.s_auth)
    d_min = min(d_forge, d_repud)
    if d_min <= 0.0:
        raise EstimationError("zero divergence: the target is unreachable")
    if target_eps == 1.0:
        return 0
    return math.ceil(math.log(1.0 / target_eps) / d_min)

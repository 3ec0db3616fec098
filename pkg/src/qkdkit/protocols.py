"""Discrete-variable protocol sessions: BB84, SARG04 sifting, E91 with CHSH.

Sessions run in two modes. Monte Carlo draws per-pulse events from
role-separated streams (see rng.py): each pulse clicks independently with
the modeled detection probability, and a clicked, basis-matched pulse is
erroneous with the modeled QBER. Analytic mode bypasses sampling entirely:
the QBER estimate is the model value, the sift fraction is 1/2 and the
confidence interval is degenerate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import accel
from .channel import LinkModel, qber_model
from .exceptions import ParameterError
from .mathutils import ConfidenceInterval, Probability, binary_entropy, validate_probability
from .postprocessing import estimate_qber_sample
from .rng import ROLES, derive_seed, stream

__all__ = [
    "RawSession",
    "SiftedKey",
    "ChshStats",
    "SessionResult",
    "QBER_ABORT_THRESHOLD",
    "CHSH_MAX_ANGLES_DEG",
    "bb84_raw_session",
    "run_bb84",
    "sift",
    "sarg04_sift",
    "chsh_s",
    "simulate_e91",
]

# Abort thresholds are strict inequalities: Q > 0.11 aborts BB84, S <= 2
# aborts E91.
QBER_ABORT_THRESHOLD = 0.11
CHSH_BOUND = 2.0

# Angle set achieving S = 2*sqrt(2) under E(a,b) = V*cos(2(a-b)) and the
# signed combination E(a,b) + E(a,b') + E(a',b) - E(a',b').
CHSH_MAX_ANGLES_DEG = (0.0, 45.0, 22.5, 157.5)

_SARG_STATES = ("Z0", "Z1", "X+", "X-")
_SARG_BIT = {"Z0": 0, "Z1": 1, "X+": 0, "X-": 1}
_SARG_ORTHOGONAL = {"Z0": "Z1", "Z1": "Z0", "X+": "X-", "X-": "X+"}
_SARG_PAIRS = (
    frozenset(("Z0", "X+")),
    frozenset(("Z0", "X-")),
    frozenset(("Z1", "X+")),
    frozenset(("Z1", "X-")),
)


@dataclass(frozen=True)
class RawSession:
    """Per-pulse record of one Monte Carlo BB84 session.

    Regenerating with the same (link, pulses, seed) reproduces every array
    bit-for-bit. bob_bits is -1 where the detector did not click.
    """

    pulses: int
    alice_bits: np.ndarray
    alice_bases: np.ndarray
    bob_bases: np.ndarray
    clicks: np.ndarray
    bob_bits: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        n = self.pulses
        for name in ("alice_bits", "alice_bases", "bob_bases", "clicks", "bob_bits"):
            if getattr(self, name).shape != (n,):
                raise ParameterError(f"{name} must have length {n}")


@dataclass(frozen=True)
class SiftedKey:
    kept_indices: np.ndarray
    alice_key: np.ndarray
    bob_key: np.ndarray

    def __post_init__(self) -> None:
        if self.alice_key.shape != self.bob_key.shape:
            raise ParameterError("alice_key and bob_key must have equal length")
        if self.kept_indices.shape != self.alice_key.shape:
            raise ParameterError("kept_indices must match key length")
        if self.kept_indices.size > 1 and not np.all(np.diff(self.kept_indices) > 0):
            raise ParameterError("kept_indices must be strictly increasing")

    def __len__(self) -> int:
        return int(self.alice_key.size)


@dataclass(frozen=True)
class CellStats:
    e_value: float
    count: int

    def __post_init__(self) -> None:
        if abs(self.e_value) > 1.0 + 1e-12:
            raise ParameterError(f"|E| must be <= 1, got {self.e_value}")


@dataclass(frozen=True)
class ChshStats:
    """CHSH correlations keyed by (alice setting, bob setting) in {0,1}^2.

    Setting 0 maps to the unprimed observable, 1 to the primed one.
    """

    correlations: dict[tuple[int, int], CellStats] = field(default_factory=dict)

    def e(self, a: int, b: int) -> float:
        return self.correlations[(a, b)].e_value


@dataclass(frozen=True)
class SessionResult:
    """Outcome of one protocol session."""

    sift_fraction: Probability
    qber: Probability
    qber_ci: ConfidenceInterval
    aborted: bool
    abort_reason: str | None
    asymptotic_rate: float | None  # bits/pulse before detection scaling
    raw_key_bits: int
    detection_prob: Probability
    mode: str

    def __post_init__(self) -> None:
        if self.aborted and self.asymptotic_rate is not None:
            raise ParameterError("aborted sessions carry no rate")
        if not self.aborted and (self.asymptotic_rate is None or self.asymptotic_rate < 0):
            raise ParameterError("non-aborted sessions need a rate >= 0")


def sift(
    alice_bases: np.ndarray,
    bob_bases: np.ndarray,
    alice_bits: np.ndarray,
    bob_bits: np.ndarray,
) -> SiftedKey:
    """Keep exactly the positions where the bases match, preserving order."""
    a_bases = np.asarray(alice_bases)
    b_bases = np.asarray(bob_bases)
    a_bits = np.asarray(alice_bits)
    b_bits = np.asarray(bob_bits)
    if not (a_bases.shape == b_bases.shape == a_bits.shape == b_bits.shape):
        raise ParameterError("all sequences must have identical length")
    kept = np.nonzero(a_bases == b_bases)[0]
    return SiftedKey(
        kept_indices=kept,
        alice_key=a_bits[kept].astype(np.uint8),
        bob_key=b_bits[kept].astype(np.uint8),
    )


def bb84_raw_session(link: LinkModel, pulses: int, seed: int) -> RawSession:
    """Draw one full Monte Carlo BB84 session from the link model.

    Stream layout (fixed): alice_bits, alice_bases, bob_bases each draw
    `pulses` values; the channel stream draws three blocks of `pulses`
    uniforms (clicks, matched-basis errors, mismatched-basis outcomes).
    """
    if pulses < 1:
        raise ParameterError("pulses must be >= 1")
    q_model, p_det = qber_model(link)

    alice_bits = stream(seed, "alice_bits").integers(0, 2, pulses, dtype=np.uint8)
    alice_bases = stream(seed, "alice_bases").integers(0, 2, pulses, dtype=np.uint8)
    bob_bases = stream(seed, "bob_bases").integers(0, 2, pulses, dtype=np.uint8)
    chan = stream(seed, "channel")
    click_u = chan.random(pulses)
    error_u = chan.random(pulses)
    mismatch_u = chan.random(pulses)

    clicks = click_u < p_det
    match = alice_bases == bob_bases
    flips = error_u < q_model

    bob_bits = np.full(pulses, -1, dtype=np.int8)
    matched_clicked = clicks & match
    bob_bits[matched_clicked] = (
        alice_bits[matched_clicked] ^ flips[matched_clicked]
    ).astype(np.int8)
    unmatched_clicked = clicks & ~match
    bob_bits[unmatched_clicked] = (mismatch_u[unmatched_clicked] < 0.5).astype(np.int8)

    return RawSession(
        pulses=pulses,
        alice_bits=alice_bits,
        alice_bases=alice_bases,
        bob_bases=bob_bases,
        clicks=clicks,
        bob_bits=bob_bits,
        seed=int(seed),
    )


def run_bb84(
    link: LinkModel,
    pulses: int,
    sample_fraction: Probability,
    seed: int,
    mode: str = "monte-carlo",
    confidence: Probability = 0.99,
) -> SessionResult:
    """One BB84 session: prepare, transmit, measure, sift, estimate, decide.

    The QBER test consumes a `sample_fraction` slice of the sifted key and
    aborts with reason "insecure channel" iff the estimate exceeds 0.11.
    The reported rate is q*[1 - 2*h2(Q)], floored at 0, where q is the
    sifting fraction; detection-probability scaling is left to the caller.
    """
    if mode not in ("monte-carlo", "analytic"):
        raise ParameterError(f"unknown mode {mode!r}")
    if not 0.0 < sample_fraction < 1.0:
        raise ParameterError("sample_fraction must be in (0, 1)")
    q_model, p_det = qber_model(link)

    if mode == "analytic":
        q_hat = q_model
        ci = ConfidenceInterval(lower=q_hat, upper=q_hat, confidence=confidence)
        sift_fraction = 0.5
        raw_key_bits = int(pulses * p_det * 0.5)
        det_prob = p_det
    else:
        if pulses < 100:
            raise ParameterError("monte-carlo mode needs N >= 100")
        # same stream layout as bb84_raw_session; the fused kernel consumes
        # the first two channel blocks (clicks, matched-basis errors)
        alice_bits = stream(seed, "alice_bits").integers(0, 2, pulses, dtype=np.uint8)
        alice_bases = stream(seed, "alice_bases").integers(0, 2, pulses, dtype=np.uint8)
        bob_bases = stream(seed, "bob_bases").integers(0, 2, pulses, dtype=np.uint8)
        chan = stream(seed, "channel")
        click_u = chan.random(pulses)
        error_u = chan.random(pulses)
        match = alice_bases == bob_bases
        sifted_mask, error_mask = accel.bb84_outcomes(
            match, click_u, error_u, p_det, q_model
        )
        kept = np.nonzero(sifted_mask)[0]
        if kept.size < 10:
            raise ParameterError(
                f"only {kept.size} sifted bits; N too small to sample the QBER"
            )
        alice_key = alice_bits[kept]
        bob_key = alice_key ^ error_mask[kept]
        sift_fraction = float(np.count_nonzero(match) / pulses)
        q_hat, ci, _remaining = estimate_qber_sample(
            alice_key,
            bob_key,
            sample_fraction,
            confidence,
            derive_seed(seed, ROLES["sampling"]),
        )
        raw_key_bits = int(kept.size)
        det_prob = float(np.count_nonzero(click_u < p_det) / pulses)

    if q_hat > QBER_ABORT_THRESHOLD:
        return SessionResult(
            sift_fraction=sift_fraction,
            qber=q_hat,
            qber_ci=ci,
            aborted=True,
            abort_reason="insecure channel",
            asymptotic_rate=None,
            raw_key_bits=raw_key_bits,
            detection_prob=det_prob,
            mode=mode,
        )
    rate = max(0.0, sift_fraction * (1.0 - 2.0 * binary_entropy(q_hat)))
    return SessionResult(
        sift_fraction=sift_fraction,
        qber=q_hat,
        qber_ci=ci,
        aborted=False,
        abort_reason=None,
        asymptotic_rate=rate,
        raw_key_bits=raw_key_bits,
        detection_prob=det_prob,
        mode=mode,
    )


def sarg04_sift(
    sent_state: str,
    announced_pair: frozenset[str] | set[str] | tuple[str, str],
    bob_basis: str,
    bob_outcome: int,
) -> int | None:
    """SARG04 sifting decision for one event.

    Alice announces a non-orthogonal candidate pair containing the sent
    state; Bob's measurement (basis Z or X, outcome bit 0/1, where in the X
    basis 0 is "+" and 1 is "-") excludes a candidate iff his observed state
    is orthogonal to it. The event is conclusive iff exactly one candidate
    is excluded; the inferred bit is the remaining candidate's. This
    exclusion decision table is an interpretation: the protocol fixes the
    announced pairs but leaves the receiver rule implicit.

    Returns the conclusive bit, or None when inconclusive.
    """
    pair = frozenset(announced_pair)
    if pair not in _SARG_PAIRS:
        raise ParameterError(
            f"announced pair {set(announced_pair)!r} is not one of the four "
            "non-orthogonal Z/X pairs"
        )
    if sent_state not in _SARG_STATES:
        raise ParameterError(f"unknown state {sent_state!r}")
    if sent_state not in pair:
        raise ParameterError("announced pair must contain the sent state")
    if bob_basis not in ("Z", "X"):
        raise ParameterError(f"unknown basis {bob_basis!r}")
    if bob_outcome not in (0, 1):
        raise ParameterError(f"outcome must be 0 or 1, got {bob_outcome!r}")

    observed = ("Z0", "Z1")[bob_outcome] if bob_basis == "Z" else ("X+", "X-")[bob_outcome]
    excluded = [c for c in pair if _SARG_ORTHOGONAL[observed] == c]
    if len(excluded) != 1:
        return None
    (remaining,) = pair - {excluded[0]}
    return _SARG_BIT[remaining]


def chsh_s(stats: ChshStats) -> float:
    """S = E(a,b) + E(a,b') + E(a',b) - E(a',b')."""
    try:
        return stats.e(0, 0) + stats.e(0, 1) + stats.e(1, 0) - stats.e(1, 1)
    except KeyError as exc:
        raise ParameterError(f"missing CHSH cell {exc}") from exc


def _analytic_e(theta_a_deg: float, theta_b_deg: float, visibility: float) -> float:
    """Two-photon polarization correlation E = V*cos(2(theta_a - theta_b))."""
    delta = math.radians(theta_a_deg - theta_b_deg)
    return visibility * math.cos(2.0 * delta)


def simulate_e91(
    angles_deg: tuple[float, float, float, float],
    visibility: Probability,
    n_per_cell: int,
    seed: int,
    mode: str = "analytic",
) -> tuple[ChshStats, bool]:
    """Populate the four CHSH cells and test the Bell bound.

    angles_deg is (a, a', b, b'). Returns (stats, aborted) with aborted True
    iff S <= 2. Monte Carlo draws n_per_cell outcome pairs per cell: the
    pair agrees with probability (1+E)/2.
    """
    if mode not in ("monte-carlo", "analytic"):
        raise ParameterError(f"unknown mode {mode!r}")
    validate_probability(visibility, "visibility")
    if len(angles_deg) != 4:
        raise ParameterError("angles_deg must be (a, a', b, b')")
    a, ap, b, bp = (float(x) for x in angles_deg)
    alice = (a, ap)
    bob = (b, bp)

    cells: dict[tuple[int, int], CellStats] = {}
    if mode == "analytic":
        for i in range(2):
            for j in range(2):
                cells[(i, j)] = CellStats(
                    e_value=_analytic_e(alice[i], bob[j], visibility), count=0
                )
    else:
        if n_per_cell < 1000:
            raise ParameterError("monte-carlo mode needs N >= 1000 per cell")
        gen = stream(seed, "chsh")
        for i in range(2):
            for j in range(2):
                e_true = _analytic_e(alice[i], bob[j], visibility)
                agree = int(np.count_nonzero(gen.random(n_per_cell) < (1.0 + e_true) / 2.0))
                cells[(i, j)] = CellStats(
                    e_value=2.0 * agree / n_per_cell - 1.0, count=n_per_cell
                )

    stats = ChshStats(correlations=cells)
    return stats, chsh_s(stats) <= CHSH_BOUND

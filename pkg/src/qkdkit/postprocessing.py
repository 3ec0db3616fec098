"""Classical post-processing accounting: QBER sampling, reconciliation
leakage, Toeplitz privacy amplification, and the composable epsilon budget.

Reconciliation is modeled, not executed: the leakage is the analytic
f(E) * n * h2(E) bit count. Sampled test bits are destroyed (removed from
the key); only statistics are disclosed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import accel
from .exceptions import ParameterError
from .mathutils import (
    ConfidenceInterval,
    Probability,
    SecurityBudget,
    binary_entropy,
    hoeffding_interval,
    validate_probability,
)

__all__ = [
    "DEFAULT_AUTH_TAG_BITS",
    "ReconciliationModel",
    "ToeplitzSeed",
    "KeyAccounting",
    "estimate_qber_sample",
    "reconciliation_leakage",
    "toeplitz_hash",
    "final_key_length",
    "epsilon_total",
]

# Wegman-Carter tag cost per session; configurable at the engine level.
DEFAULT_AUTH_TAG_BITS = 128


@dataclass(frozen=True)
class ReconciliationModel:
    """Error-correction inefficiency f(E) >= 1 (1 = Shannon limit)."""

    efficiency_f: float = 1.16

    def __post_init__(self) -> None:
        if not self.efficiency_f >= 1.0:
            raise ParameterError("efficiency_f must be >= 1")


@dataclass(frozen=True)
class ToeplitzSeed:
    """Seed bits defining an output_len x input_len Toeplitz matrix over GF(2).

    T[j, i] = bits[j - i + input_len - 1]; the bits array has length
    input_len + output_len - 1 exactly. Hex serialization is MSB-first:
    bits[0] is the most significant bit of the first hex digit, with zero
    padding at the tail to a whole number of digits.
    """

    bits: np.ndarray
    input_len: int
    output_len: int

    def __post_init__(self) -> None:
        expected = self.input_len + self.output_len - 1
        if self.input_len < 1 or self.output_len < 0:
            raise ParameterError("need input_len >= 1 and output_len >= 0")
        if self.bits.ndim != 1 or self.bits.size != max(expected, 0):
            raise ParameterError(
                f"seed needs exactly n+m-1 = {expected} bits, got {self.bits.size}"
            )
        if self.bits.size and not np.all((self.bits == 0) | (self.bits == 1)):
            raise ParameterError("seed bits must be 0/1")

    @classmethod
    def random(cls, input_len: int, output_len: int, rng: np.random.Generator) -> "ToeplitzSeed":
        bits = rng.integers(0, 2, max(input_len + output_len - 1, 0), dtype=np.uint8)
        return cls(bits=bits, input_len=input_len, output_len=output_len)

    def to_hex(self) -> str:
        n_bits = self.bits.size
        padded = np.zeros(-(-n_bits // 4) * 4, dtype=np.uint8)
        padded[:n_bits] = self.bits
        nibbles = padded.reshape(-1, 4) @ np.array([8, 4, 2, 1], dtype=np.uint8)
        return "".join(f"{v:x}" for v in nibbles)

    @classmethod
    def from_hex(cls, hex_str: str, input_len: int, output_len: int) -> "ToeplitzSeed":
        n_bits = input_len + output_len - 1
        if len(hex_str) != -(-n_bits // 4):
            raise ParameterError(
                f"hex string length {len(hex_str)} does not encode {n_bits} bits"
            )
        values = np.array([int(c, 16) for c in hex_str], dtype=np.uint8)
        bits = (
            (values[:, None] >> np.array([3, 2, 1, 0], dtype=np.uint8)) & 1
        ).reshape(-1)[:n_bits]
        return cls(bits=bits.astype(np.uint8), input_len=input_len, output_len=output_len)


@dataclass(frozen=True)
class KeyAccounting:
    """Inputs of the net-key computation for one session."""

    sifted_len: int
    leak_ec: int
    leak_auth: int
    phase_error: Probability
    budget: SecurityBudget
    final_len: int | None = None

    def __post_init__(self) -> None:
        if self.sifted_len < 0 or self.leak_ec < 0 or self.leak_auth < 0:
            raise ParameterError("lengths and leakages must be >= 0")
        validate_probability(self.phase_error, "phase_error")
        if self.final_len is not None and not 0 <= self.final_len <= self.sifted_len:
            raise ParameterError("final_len must lie in [0, sifted_len]")


def estimate_qber_sample(
    alice_key: np.ndarray,
    bob_key: np.ndarray,
    fraction: Probability,
    confidence: Probability,
    seed: int,
) -> tuple[Probability, ConfidenceInterval, np.ndarray]:
    """Estimate the QBER from a random key sample.

    Samples ceil(fraction * n) positions uniformly without replacement,
    discloses (and thereby consumes) them, and returns the mismatch rate,
    its two-sided Hoeffding interval, and the sorted unsampled indices.
    """
    a = np.asarray(alice_key)
    b = np.asarray(bob_key)
    if a.shape != b.shape or a.ndim != 1:
        raise ParameterError("keys must be 1-d and of equal length")
    n = a.size
    if n < 10:
        raise ParameterError(f"need at least 10 key bits to sample, got {n}")
    if not 0.0 < fraction < 1.0:
        raise ParameterError("fraction must be in (0, 1)")
    sample_size = math.ceil(fraction * n)
    if sample_size == 0:
        raise ParameterError("empty sample")
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    sample = np.sort(gen.choice(n, size=sample_size, replace=False))
    mismatches = int(np.count_nonzero(a[sample] != b[sample]))
    q_hat = mismatches / sample_size
    ci = hoeffding_interval(mismatches, sample_size, confidence)
    remaining = np.setdiff1d(np.arange(n), sample, assume_unique=True)
    return q_hat, ci, remaining


def reconciliation_leakage(n: int, q: Probability, model: ReconciliationModel) -> int:
    """Bits disclosed by error correction: ceil(f * n * h2(q))."""
    if n < 0:
        raise ParameterError("n must be >= 0")
    q = validate_probability(q, "q")
    if q == 0.0:
        return 0
    return math.ceil(model.efficiency_f * n * binary_entropy(q))


def toeplitz_hash(input_bits: np.ndarray, seed: ToeplitzSeed) -> np.ndarray:
    """Privacy amplification: y = T x over GF(2) with Toeplitz T.

    Output bit j is the XOR over i of input[i] AND seed.bits[j - i + n - 1].
    Deterministic in (input, seed); linear, so hash(x^y) = hash(x)^hash(y).
    """
    x = np.asarray(input_bits)
    if x.ndim != 1 or x.size != seed.input_len:
        raise ParameterError(
            f"input length {x.size} does not match seed input_len {seed.input_len}"
        )
    if x.size and not np.all((x == 0) | (x == 1)):
        raise ParameterError("input bits must be 0/1")
    return accel.toeplitz_gf2(x.astype(np.uint8), seed.bits, seed.output_len)


def final_key_length(acct: KeyAccounting) -> int:
    """Leftover-hash net length.

    l = max(0, floor(n*(1 - h2(phase_error)) - leak_EC - leak_auth
                     - 2*log2(1/eps_sec)))

    The composition of the named terms (n, phase-error entropy, leakages,
    2*log2(1/eps_sec) hashing penalty) is this toolkit's convention and is
    echoed in engine reports.
    """
    if acct.phase_error > 0.5:
        raise ParameterError("phase_error must be <= 0.5")
    secret = acct.sifted_len * (1.0 - binary_entropy(acct.phase_error))
    penalty = 2.0 * math.log2(1.0 / acct.budget.eps_sec)
    length = math.floor(secret - acct.leak_ec - acct.leak_auth - penalty)
    return max(0, length)


def epsilon_total(budget: SecurityBudget) -> float:
    """eps_tot = eps_sec + eps_cor + eps_PE + eps_auth."""
    return budget.total

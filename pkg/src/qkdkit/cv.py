"""Gaussian-modulated CV-QKD: mutual information, Holevo bound, key rate,
and homodyne session simulation with parameter estimation.

Everything is expressed in shot-noise units with excess noise referred to
the channel input. The mutual-information convention of the rate formula
keeps the +1 vacuum unit in the numerator ("chi-tot" convention); the
"chi-line" toggle evaluates the plain SNR form instead, and the choice is
surfaced in the report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ParameterError
from .mathutils import Probability, validate_probability
from .rng import stream

__all__ = [
    "I_AB_CONVENTIONS",
    "CvParams",
    "CvSession",
    "CvRateReport",
    "cv_mutual_info",
    "cv_holevo",
    "cv_key_rate",
    "simulate_cv_session",
]

I_AB_CONVENTIONS = ("chi-tot", "chi-line")

_DISCRIMINANT_TOL = 1e-9


@dataclass(frozen=True)
class CvParams:
    """Gaussian-protocol parameters in shot-noise units.

    modulation_variance is V_A (the modulated variance; total V = V_A + 1),
    transmittance is the channel T, excess_noise the input-referred xi, and
    reconciliation_efficiency the beta of reverse reconciliation.
    """

    modulation_variance: float
    transmittance: Probability
    excess_noise: float
    reconciliation_efficiency: float

    def __post_init__(self) -> None:
        if self.modulation_variance < 0.0:
            raise ParameterError("modulation_variance must be >= 0")
        validate_probability(self.transmittance, "transmittance")
        if self.transmittance <= 0.0:
            raise ParameterError("transmittance must be > 0")
        if self.excess_noise < 0.0:
            raise ParameterError("excess_noise must be >= 0")
        if not 0.0 < self.reconciliation_efficiency <= 1.0:
            raise ParameterError("reconciliation_efficiency must be in (0, 1]")

    @property
    def v(self) -> float:
        """Total quadrature variance V = V_A + 1."""
        return self.modulation_variance + 1.0

    @property
    def chi_line(self) -> float:
        """Channel-referred noise xi + (1-T)/T."""
        t = self.transmittance
        return self.excess_noise + (1.0 - t) / t

    @property
    def chi_tot(self) -> float:
        """Effective noise seen by Bob, 1 + xi + (1-T)/T."""
        return 1.0 + self.chi_line


@dataclass(frozen=True)
class CvSession:
    """One simulated Gaussian-modulation session (reproducible from seed)."""

    n: int
    alice_quadratures: np.ndarray  # shape (n, 2): x and p
    bob_measurements: np.ndarray  # shape (n,)
    bases: np.ndarray  # shape (n,): 0 = x, 1 = p
    seed: int

    def __post_init__(self) -> None:
        if self.alice_quadratures.shape != (self.n, 2):
            raise ParameterError("alice_quadratures must have shape (n, 2)")
        if self.bob_measurements.shape != (self.n,):
            raise ParameterError("bob_measurements must have length n")
        if self.bases.shape != (self.n,):
            raise ParameterError("bases must have length n")


@dataclass(frozen=True)
class CvRateReport:
    i_ab: float
    chi_be: float
    k: float
    estimated_t: float
    estimated_xi: float
    aborted: bool
    i_ab_convention: str = "chi-tot"


def cv_mutual_info(params: CvParams, convention: str = "chi-tot") -> float:
    """Alice-Bob mutual information per channel use, in bits.

    chi-tot (default): I_AB = (1/2) log2[(V + chi_tot)/chi_tot] with
    V = V_A + 1, keeping the vacuum unit in the numerator. chi-line: the
    consistent SNR form (1/2) log2(1 + V_A/chi_tot).
    """
    if convention not in I_AB_CONVENTIONS:
        raise ParameterError(f"unknown convention {convention!r}")
    chi_tot = params.chi_tot
    if convention == "chi-tot":
        return 0.5 * math.log2((params.v + chi_tot) / chi_tot)
    return 0.5 * math.log2(1.0 + params.modulation_variance / chi_tot)


def _g(x: float) -> float:
    """Bosonic entropy g(x) = (x+1) log2(x+1) - x log2 x, g(0) = 0."""
    if x <= 0.0:
        return 0.0
    return (x + 1.0) * math.log2(x + 1.0) - x * math.log2(x)


def cv_holevo(params: CvParams) -> float:
    """Holevo bound chi_BE for collective attacks, homodyne detection,
    reverse reconciliation.

    Covariance parameters: a = V, b = T(V + chi_line), c = sqrt(T(V^2-1)).
    Symplectic eigenvalues: lambda_{1,2}^2 = (A +- sqrt(A^2 - 4B))/2 with
    A = V^2 (1-2T) + 2T + T^2 (V + chi_line)^2, B = T^2 (V chi_line + 1)^2;
    conditional eigenvalue lambda_3 = sqrt(V (V - c^2/b)).

    chi_BE = g((l1-1)/2) + g((l2-1)/2) - g((l3-1)/2) >= 0.
    """
    v = params.v
    t = params.transmittance
    chi_line = params.chi_line
    b = t * (v + chi_line)
    c_sq = t * (v * v - 1.0)

    a_term = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + chi_line) ** 2
    b_term = (t * (v * chi_line + 1.0)) ** 2
    disc = a_term * a_term - 4.0 * b_term
    if disc < -_DISCRIMINANT_TOL:
        raise ParameterError(f"non-physical covariance: discriminant {disc}")
    disc = max(disc, 0.0)
    root = math.sqrt(disc)
    lam1 = math.sqrt(max((a_term + root) / 2.0, 1.0))
    lam2 = math.sqrt(max((a_term - root) / 2.0, 1.0))
    lam3 = math.sqrt(max(v * (v - c_sq / b), 1.0))

    chi = _g((lam1 - 1.0) / 2.0) + _g((lam2 - 1.0) / 2.0) - _g((lam3 - 1.0) / 2.0)
    return max(0.0, chi)


def cv_key_rate(params: CvParams, i_ab_convention: str = "chi-tot") -> CvRateReport:
    """K = beta * I_AB - chi_BE; aborted iff K <= 0.

    With no session attached the estimated parameters echo the model values.
    """
    i_ab = cv_mutual_info(params, i_ab_convention)
    chi_be = cv_holevo(params)
    k = params.reconciliation_efficiency * i_ab - chi_be
    return CvRateReport(
        i_ab=i_ab,
        chi_be=chi_be,
        k=k,
        estimated_t=params.transmittance,
        estimated_xi=params.excess_noise,
        aborted=k <= 0.0,
        i_ab_convention=i_ab_convention,
    )


def simulate_cv_session(
    params: CvParams, n: int, seed: int
) -> tuple[CvSession, float, float]:
    """Simulate preparation, the Gaussian channel, and homodyne detection.

    Alice draws (x, p) from N(0, V_A); the channel maps the measured
    quadrature a to b = sqrt(T) a + z with noise variance 1 + T xi (output
    shot noise plus channel excess noise); Bob homodynes a uniformly random
    quadrature. Returns the session plus the regression estimates: T_hat is
    the squared slope, xi_hat comes from the residual variance 1 + T xi.
    """
    if n < 10_000:
        raise ParameterError("need at least 1e4 uses for parameter estimation")
    if params.modulation_variance <= 0.0:
        raise ParameterError("slope undefined: modulation variance is zero")

    sigma_a = math.sqrt(params.modulation_variance)
    alice = stream(seed, "cv_alice").normal(0.0, sigma_a, size=(n, 2))
    bases = stream(seed, "cv_basis").integers(0, 2, n, dtype=np.int8)
    noise_sigma = math.sqrt(1.0 + params.transmittance * params.excess_noise)
    noise = stream(seed, "cv_noise").normal(0.0, noise_sigma, size=n)

    a_meas = alice[np.arange(n), bases]
    b_meas = math.sqrt(params.transmittance) * a_meas + noise

    slope = float(np.dot(a_meas, b_meas) / np.dot(a_meas, a_meas))
    t_hat = slope * slope
    residual = b_meas - slope * a_meas
    s2 = float(np.mean(residual * residual))
    xi_hat = (s2 - 1.0) / t_hat

    session = CvSession(
        n=n,
        alice_quadratures=alice,
        bob_measurements=b_meas,
        bases=bases,
        seed=int(seed),
    )
    return session, t_hat, xi_hat

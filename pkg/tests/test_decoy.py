import math

import numpy as np
import pytest

from qkdkit.channel import Detector, FiberLink, LinkModel, OpticalQuality
from qkdkit.decoy import (
    ESTIMATOR_IDS,
    GainEntry,
    GainTable,
    IntensitySet,
    decoy_key_rate,
    estimate_decoy,
    estimate_e1,
    estimate_e1_lmc,
    estimate_y0,
    estimate_y1_alg3,
    estimate_y1_lmc,
    estimate_y1_paper,
    gains_from_model,
)
from qkdkit.exceptions import EstimationError, ParameterError
from qkdkit.mathutils import hoeffding_interval

INTENSITIES = IntensitySet(signal_mu=0.5, decoy_nu=0.1, vacuum_omega=0.0)


def closed_form_gain(lam, eta_tot, y0):
    """Oracle: Q_lambda = 1 - (1-Y0) e^{-lambda eta} for the threshold model."""
    return 1.0 - (1.0 - y0) * math.exp(-lam * eta_tot)


def closed_form_error_gain(lam, eta_tot, y0, e_opt):
    q = closed_form_gain(lam, eta_tot, y0)
    return 0.5 * y0 + e_opt * (q - y0)


def link_from(eta_tot, y0, e_opt, mu):
    # fold all transmission into the detector efficiency; visibility carries e_opt
    return LinkModel(
        fiber=FiberLink(attenuation_db_per_km=1e-9, length_km=0.0),
        detector=Detector(efficiency=eta_tot, dark_count_prob=y0),
        optics=OpticalQuality(visibility=1.0 - 2.0 * e_opt, misalignment_qber=0.0),
        mean_photon_number=mu,
    )


class TestGainsFromModel:
    def test_vacuum_gain_is_y0(self, decoy_link):
        table = gains_from_model(decoy_link, INTENSITIES)
        assert table.gain(0.0) == pytest.approx(1e-5, rel=1e-9)

    def test_unit_yields_give_unit_gains(self):
        link = link_from(eta_tot=1.0, y0=1.0, e_opt=0.0, mu=0.5)
        table = gains_from_model(link, INTENSITIES)
        for entry in table.entries:
            assert entry.gain == pytest.approx(1.0, abs=1e-12)

    def test_signal_gain_fixture(self, decoy_link):
        # eta*eta_d = 0.02, Y0 = 1e-5: Q_mu = 1 - (1-Y0) e^{-0.01} ~= 0.009960
        table = gains_from_model(decoy_link, INTENSITIES)
        assert table.gain(0.5) == pytest.approx(0.009960, abs=1e-6)

    def test_matches_closed_form_oracle(self, decoy_link):
        table = gains_from_model(decoy_link, INTENSITIES)
        eta_tot = decoy_link.eta_total
        y0 = decoy_link.detector.dark_count_prob
        e_opt = decoy_link.optics.optical_qber
        for lam in INTENSITIES.levels:
            q_exact = closed_form_gain(lam, eta_tot, y0)
            assert table.gain(lam) == pytest.approx(q_exact, abs=1e-12)
            eq_exact = closed_form_error_gain(lam, eta_tot, y0, e_opt)
            assert table.qber(lam) * table.gain(lam) == pytest.approx(eq_exact, abs=1e-12)

    def test_gains_increase_with_intensity(self, decoy_link):
        table = gains_from_model(decoy_link, INTENSITIES)
        gains = [table.gain(lam) for lam in sorted(INTENSITIES.levels)]
        assert gains[0] < gains[1] < gains[2]


class TestEstimateY0:
    def test_identity(self):
        assert estimate_y0(0.0) == 0.0
        assert estimate_y0(1e-5) == 1e-5

    def test_sampled_vacuum_within_interval(self):
        rng = np.random.default_rng(314)
        n = 10**6
        true_y0 = 1e-5
        clicks = int(np.count_nonzero(rng.random(n) < true_y0))
        estimate = estimate_y0(clicks / n)
        ci = hoeffding_interval(clicks, n, 0.99)
        assert ci.lower <= estimate <= ci.upper
        assert ci.lower <= true_y0 <= ci.upper


class TestY1Estimators:
    def test_paper_ideal_table_exceeds_one(self):
        est = estimate_y1_paper(1.0, 1.0, 0.5, 0.1, 1.0)
        assert est.y1_raw == pytest.approx(15.6921772, abs=1e-4)
        assert est.y1 == 1.0
        assert not est.sound

    def test_paper_degenerate_intensities(self):
        with pytest.raises(ParameterError):
            estimate_y1_paper(0.1, 0.1, 0.5, 0.5, 0.0)

    def test_paper_zero_table(self):
        est = estimate_y1_paper(0.0, 0.0, 0.5, 0.1, 0.0)
        assert est.y1 == 0.0

    def test_alg3_matches_paper_on_ideal_table(self):
        p = estimate_y1_paper(1.0, 1.0, 0.5, 0.1, 1.0)
        a = estimate_y1_alg3(1.0, 1.0, 1.0, 0.5, 0.1, 0.0)
        assert a.y1_raw == pytest.approx(p.y1_raw, abs=1e-12)

    def test_alg3_negative_numerator_clamps(self):
        est = estimate_y1_alg3(0.9, 0.0, 0.0, 0.5, 0.1, 0.0)
        assert est.y1 == 0.0
        assert est.y1_raw < 0.0
        assert not est.sound

    def test_alg3_degenerate(self):
        with pytest.raises(ParameterError):
            estimate_y1_alg3(0.1, 0.1, 0.0, 0.5, 0.5, 0.0)

    def test_lmc_ideal_table_stays_sound(self):
        est = estimate_y1_lmc(1.0, 1.0, 0.5, 0.1, 1.0)
        assert est.y1_raw == pytest.approx(0.9902758, abs=1e-6)
        assert est.y1 <= 1.0
        assert est.sound

    def test_lmc_realistic_bound_below_truth(self, decoy_link):
        table = gains_from_model(decoy_link, INTENSITIES)
        est = estimate_y1_lmc(table.gain(0.5), table.gain(0.1), 0.5, 0.1, table.gain(0.0))
        true_y1 = 1.0 - (1.0 - 1e-5) * (1.0 - 0.02)
        assert true_y1 == pytest.approx(0.0200098, abs=1e-7)
        assert est.y1_raw == pytest.approx(0.0194088, abs=1e-6)
        assert est.y1 <= true_y1 + 1e-12

    def test_lmc_zero_table(self):
        est = estimate_y1_lmc(0.0, 0.0, 0.5, 0.1, 0.0)
        assert est.y1 == 0.0

    def test_q1_identity(self, decoy_link):
        table = gains_from_model(decoy_link, INTENSITIES)
        for estimator in ESTIMATOR_IDS:
            est = estimate_decoy(table, INTENSITIES, estimator)
            assert est.q1 == pytest.approx(0.5 * math.exp(-0.5) * est.y1, rel=1e-12)


class TestE1Estimators:
    def test_noiseless_error_near_zero(self):
        link = link_from(eta_tot=0.02, y0=0.0, e_opt=0.0, mu=0.5)
        table = gains_from_model(link, INTENSITIES)
        est = estimate_decoy(table, INTENSITIES, "lmc-reference")
        assert est.e1 == pytest.approx(0.0, abs=1e-12)

    def test_clamp_at_half(self):
        base = estimate_y1_lmc(0.5, 0.2, 0.5, 0.1, 0.01)
        est = estimate_e1(0.5, 0.9, 0.1, 0.0, base)
        assert est.e1 == 0.5
        assert est.e1_raw > 0.5
        assert not est.sound

    def test_zero_yield_raises(self):
        base = estimate_y1_lmc(0.0, 0.0, 0.5, 0.1, 0.0)
        with pytest.raises(EstimationError):
            estimate_e1(0.1, 0.1, 0.1, 0.0, base)
        with pytest.raises(EstimationError):
            estimate_e1_lmc(0.1, 0.1, 0.1, 0.0, base)

    def test_lmc_denominator_drops_exp_factor(self):
        base = estimate_y1_lmc(0.3, 0.1, 0.5, 0.1, 0.001)
        paper = estimate_e1(0.02, 0.1, 0.1, 0.001, base)
        sound = estimate_e1_lmc(0.02, 0.1, 0.1, 0.001, base)
        assert sound.e1_raw == pytest.approx(paper.e1_raw * math.exp(0.1), rel=1e-12)


class TestSoundness:
    def test_lmc_bounds_are_sound_over_random_links(self):
        rng = np.random.default_rng(777)
        for _ in range(200):
            eta_tot = float(10 ** rng.uniform(-4, 0))
            y0 = float(rng.uniform(0.0, 1e-3))
            e_opt = float(rng.uniform(0.0, 0.05))
            mu = float(rng.uniform(0.3, 0.7))
            nu = float(rng.uniform(0.05, min(0.2, mu * 0.99)))
            intensities = IntensitySet(signal_mu=mu, decoy_nu=nu, vacuum_omega=0.0)
            link = link_from(eta_tot, y0, e_opt, mu)
            table = gains_from_model(link, intensities)
            est = estimate_decoy(table, intensities, "lmc-reference")

            true_y1 = 1.0 - (1.0 - y0) * (1.0 - eta_tot)
            assert est.y1 <= true_y1 + 1e-12
            true_e1 = (0.5 * y0 + e_opt * (true_y1 - y0)) / true_y1
            assert est.e1 >= true_e1 - 1e-12

    def test_estimator_overlap_set(self, decoy_link):
        # paper-two-decoy and paper-alg3 coincide identically when omega=0
        table = gains_from_model(decoy_link, INTENSITIES)
        paper = estimate_decoy(table, INTENSITIES, "paper-two-decoy")
        alg3 = estimate_decoy(table, INTENSITIES, "paper-alg3")
        assert paper.y1_raw == pytest.approx(alg3.y1_raw, abs=1e-12)
        assert paper.e1_raw == pytest.approx(alg3.e1_raw, abs=1e-12)
        # all three agree (at zero) on the degenerate zero table
        zero = GainTable(
            entries=tuple(
                GainEntry(intensity=lam, gain=0.0, qber=0.0) for lam in INTENSITIES.levels
            )
        )
        for estimator in ESTIMATOR_IDS:
            assert estimate_decoy(zero, INTENSITIES, estimator).y1 == 0.0


class TestDecoyKeyRate:
    def test_e1_half_kills_single_photon_term(self):
        rate = decoy_key_rate(0.5, 0.01, 0.02, 0.005, 0.5, 1.16)
        assert rate < 0.0

    def test_reduces_to_bb84_form(self):
        # Q1 = Q_mu, e1 = E_mu, f = 1: R = q Q_mu (1 - 2 h2(E_mu))
        from qkdkit.mathutils import binary_entropy

        q, q_mu, e_mu = 0.5, 0.02, 0.03
        rate = decoy_key_rate(q, q_mu, e_mu, q_mu, e_mu, 1.0)
        expected = q * q_mu * (1.0 - 2.0 * binary_entropy(e_mu))
        assert rate == pytest.approx(expected, rel=1e-12)

    def test_fixture_link_rate_positive(self, decoy_link):
        table = gains_from_model(decoy_link, INTENSITIES)
        est = estimate_decoy(table, INTENSITIES, "lmc-reference")
        rate = decoy_key_rate(0.5, table.gain(0.5), table.qber(0.5), est.q1, est.e1, 1.16)
        assert rate > 0.0
        assert rate == pytest.approx(0.0021881749, abs=1e-9)  # golden fixture

    def test_monotone_decreasing_in_error(self, decoy_link):
        table = gains_from_model(decoy_link, INTENSITIES)
        est = estimate_decoy(table, INTENSITIES, "lmc-reference")
        rates = [
            decoy_key_rate(0.5, table.gain(0.5), e_mu, est.q1, est.e1, 1.16)
            for e_mu in np.linspace(0.0, 0.2, 21)
        ]
        assert all(a > b for a, b in zip(rates, rates[1:]))


class TestGainTableCsv:
    def test_round_trip(self, decoy_link):
        table = gains_from_model(decoy_link, INTENSITIES)
        text = table.to_csv()
        assert text.splitlines()[0] == "intensity,gain,qber,trials"
        parsed = GainTable.from_csv(text)
        assert parsed == table

    def test_rejects_wrong_header(self):
        with pytest.raises(ParameterError):
            GainTable.from_csv("a,b,c,d\n1,2,3,4\n")

    def test_intensity_set_validation(self):
        with pytest.raises(ParameterError):
            IntensitySet(signal_mu=0.1, decoy_nu=0.5)
        with pytest.raises(ParameterError):
            IntensitySet(signal_mu=0.5, decoy_nu=0.1, usage_fractions=(0.5, 0.5, 0.5))

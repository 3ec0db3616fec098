import math

import numpy as np
import pytest

from qkdkit.channel import (
    Detector,
    FiberLink,
    LinkModel,
    OpticalQuality,
    error_yield_n,
    p_signal,
    qber_model,
    transmissivity,
    yield_n,
)
from qkdkit.exceptions import DeadLinkError, ParameterError


def make_link(length_km=50.0, eta_d=0.2, p_d=1e-5, v=0.98, q_mis=0.005, mu=0.5):
    return LinkModel(
        fiber=FiberLink(attenuation_db_per_km=0.2, length_km=length_km),
        detector=Detector(efficiency=eta_d, dark_count_prob=p_d),
        optics=OpticalQuality(visibility=v, misalignment_qber=q_mis),
        mean_photon_number=mu,
    )


class TestTransmissivity:
    @pytest.mark.parametrize(
        "alpha,length,extra,expected",
        [(0.2, 50.0, 0.0, 0.1), (0.2, 0.0, 0.0, 1.0), (0.2, 100.0, 0.0, 0.01)],
    )
    def test_values(self, alpha, length, extra, expected):
        fiber = FiberLink(alpha, length, extra)
        assert transmissivity(fiber) == pytest.approx(expected, rel=1e-12)

    def test_strictly_decreasing(self):
        lengths = np.linspace(0.0, 200.0, 41)
        etas = [transmissivity(FiberLink(0.2, l)) for l in lengths]
        assert all(a > b for a, b in zip(etas, etas[1:]))
        extras = np.linspace(0.0, 10.0, 21)
        etas = [transmissivity(FiberLink(0.2, 50.0, x)) for x in extras]
        assert all(a > b for a, b in zip(etas, etas[1:]))

    def test_validation(self):
        with pytest.raises(ParameterError):
            FiberLink(0.0, 50.0)
        with pytest.raises(ParameterError):
            FiberLink(0.2, -1.0)


class TestPSignal:
    def test_no_photons(self):
        assert p_signal(0.0, 0.5, 0.5) == 0.0

    def test_direct_evaluation(self):
        assert p_signal(0.5, 0.1, 0.2) == pytest.approx(1.0 - math.exp(-0.01), abs=1e-9)

    def test_first_order_regime(self):
        # mu*eta*eta_d << 1 implies p_sig ~= mu*eta*eta_d within 1%
        for mu, eta, eta_d in [(0.01, 0.1, 0.1), (0.1, 0.01, 0.5), (0.001, 1.0, 1.0)]:
            linear = mu * eta * eta_d
            assert p_signal(mu, eta, eta_d) == pytest.approx(linear, rel=1e-2)

    def test_monotone(self):
        base = p_signal(0.5, 0.1, 0.2)
        assert p_signal(0.6, 0.1, 0.2) > base
        assert p_signal(0.5, 0.2, 0.2) > base
        assert p_signal(0.5, 0.1, 0.3) > base


class TestQberModel:
    def test_pure_optical_error(self):
        link = make_link(p_d=0.0, q_mis=0.0, v=0.9)
        q, _ = qber_model(link)
        assert q == pytest.approx((1.0 - 0.9) / 2.0, abs=1e-12)

    def test_dark_counts_random(self):
        # p_sig -> 0 with p_d > 0: errors are coin flips
        link = make_link(mu=0.0, v=1.0, q_mis=0.0, p_d=1e-5)
        q, p_det = qber_model(link)
        assert q == pytest.approx(0.5, abs=1e-12)
        assert p_det == pytest.approx(1e-5, rel=1e-9)

    def test_fixture_decomposition(self, fixture_link):
        # direct evaluation of Q = (Q_opt p_sig + 0.5 p_d)/(p_sig + p_d) + Q_mis
        q, p_det = qber_model(fixture_link)
        assert q == pytest.approx(0.0154919597, abs=1e-9)
        assert p_det == pytest.approx(0.0099601663, abs=1e-9)

    def test_optical_limit(self):
        # as p_d -> 0 and Q_mis -> 0, Q approaches (1-V)/2
        link = make_link(p_d=1e-12, q_mis=0.0, v=0.97)
        q, _ = qber_model(link)
        assert abs(q - (1.0 - 0.97) / 2.0) < 1e-9
        exact = make_link(p_d=0.0, q_mis=0.0, v=0.97)
        q_exact, _ = qber_model(exact)
        assert q_exact == (1.0 - 0.97) / 2.0

    def test_q_in_range_over_random_links(self):
        rng = np.random.default_rng(20250810)
        for _ in range(300):
            link = make_link(
                length_km=float(rng.uniform(0.0, 250.0)),
                eta_d=float(rng.uniform(0.01, 1.0)),
                p_d=float(10 ** rng.uniform(-8, -3)),
                v=float(rng.uniform(0.5, 1.0)),
                q_mis=float(rng.uniform(0.0, 0.05)),
                mu=float(rng.uniform(0.05, 1.0)),
            )
            q, p_det = qber_model(link)
            assert 0.0 <= q <= 0.5
            p_sig = p_signal(link.mean_photon_number, link.eta_channel, link.detector.efficiency)
            assert p_det >= p_sig
            assert p_det >= link.detector.dark_count_prob * (1.0 - p_sig)

    def test_dead_link(self):
        link = make_link(mu=0.0, p_d=0.0)
        with pytest.raises(DeadLinkError):
            qber_model(link)


class TestYieldModel:
    def test_vacuum_yield_is_dark_count(self, fixture_link):
        assert yield_n(0, fixture_link) == fixture_link.detector.dark_count_prob

    def test_monotone_saturating(self, fixture_link):
        ys = [yield_n(n, fixture_link) for n in range(0, 40)]
        assert all(a <= b for a, b in zip(ys, ys[1:]))
        assert ys[-1] <= 1.0

    def test_error_yield_identity(self, fixture_link):
        e_opt = (
            fixture_link.optics.optical_qber + fixture_link.optics.misalignment_qber
        )
        y0 = fixture_link.detector.dark_count_prob
        for n in range(0, 10):
            expected = 0.5 * y0 + e_opt * (yield_n(n, fixture_link) - y0)
            assert error_yield_n(n, fixture_link) == pytest.approx(expected, abs=1e-15)

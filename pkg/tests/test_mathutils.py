import math

import numpy as np
import pytest

from qkdkit.exceptions import ParameterError
from qkdkit.mathutils import (
    ConfidenceInterval,
    SecurityBudget,
    binary_entropy,
    finite_key_penalty,
    hoeffding_interval,
    kl_divergence,
    poisson_pmf,
)


class TestBinaryEntropy:
    @pytest.mark.parametrize(
        "x,expected",
        [
            (0.5, 1.0),
            (0.0, 0.0),
            (1.0, 0.0),
            # high-precision direct evaluation (mpmath, 30 dps)
            (0.11, 0.4999159581645280),
            (0.03, 0.1943918578315762),
        ],
    )
    def test_values(self, x, expected):
        assert binary_entropy(x) == pytest.approx(expected, abs=1e-12)

    def test_symmetry_and_concavity(self):
        xs = np.linspace(0.0, 1.0, 101)
        for x in xs:
            assert binary_entropy(x) == pytest.approx(binary_entropy(1.0 - x), abs=1e-12)
            assert 0.0 <= binary_entropy(x) <= 1.0
        # unique maximum at 1/2
        interior = xs[1:-1]
        values = [binary_entropy(x) for x in interior]
        assert max(values) == pytest.approx(1.0)
        assert interior[int(np.argmax(values))] == pytest.approx(0.5)

    @pytest.mark.parametrize("bad", [-0.1, 1.1, float("nan")])
    def test_domain(self, bad):
        with pytest.raises(ParameterError):
            binary_entropy(bad)


class TestKlDivergence:
    def test_identical(self):
        assert kl_divergence(0.3, 0.3) == 0.0

    def test_reduces_to_minus_log_q(self):
        assert kl_divergence(1.0, 0.5) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_direct_evaluation(self):
        # 0.2*ln(2) + 0.8*ln(8/9)
        assert kl_divergence(0.2, 0.1) == pytest.approx(0.0444030076, abs=1e-8)

    def test_nonnegative_with_equality_iff_equal(self):
        grid = np.linspace(0.05, 0.95, 19)
        for p in grid:
            for q in grid:
                d = kl_divergence(p, q)
                assert d >= 0.0
                if abs(p - q) > 1e-12:
                    assert d > 0.0
                else:
                    assert d == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_q(self):
        with pytest.raises(ParameterError):
            kl_divergence(0.5, 0.0)
        with pytest.raises(ParameterError):
            kl_divergence(0.5, 1.0)
        # allowed when the corresponding p term vanishes
        assert kl_divergence(0.0, 0.0) == 0.0
        assert kl_divergence(1.0, 1.0) == 0.0


class TestPoissonPmf:
    @pytest.mark.parametrize(
        "n,mu,expected",
        [
            (0, 0.5, 0.6065306597),
            (1, 0.5, 0.3032653299),
            (0, 0.0, 1.0),
            (3, 0.0, 0.0),
        ],
    )
    def test_values(self, n, mu, expected):
        assert poisson_pmf(n, mu) == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize("mu", [0.1, 0.5, 1.0, 2.5, 5.0])
    def test_normalization(self, mu):
        total = sum(poisson_pmf(n, mu) for n in range(61))
        assert 1.0 - 1e-12 <= total <= 1.0 + 1e-12

    def test_domain(self):
        with pytest.raises(ParameterError):
            poisson_pmf(0, -1.0)
        with pytest.raises(ParameterError):
            poisson_pmf(-1, 1.0)


class TestHoeffdingInterval:
    def test_clamp_at_zero(self):
        ci = hoeffding_interval(0, 100, 0.95)
        assert ci.lower == 0.0

    def test_clamp_at_one(self):
        ci = hoeffding_interval(100, 100, 0.9)
        assert ci.upper == 1.0

    def test_half_width(self):
        ci = hoeffding_interval(50, 10_000, 0.99)
        # sqrt(ln(200)/20000); the lower side clamps at zero here
        assert ci.upper - 0.005 == pytest.approx(0.0162762363, abs=1e-9)
        assert ci.lower == 0.0
        ci2 = hoeffding_interval(5_000, 10_000, 0.99)
        assert ci2.upper - 0.5 == pytest.approx(0.0162762363, abs=1e-9)
        assert 0.5 - ci2.lower == pytest.approx(0.0162762363, abs=1e-9)

    def test_contains_center_and_shrinks(self):
        widths = []
        for n in (100, 10_000, 1_000_000):
            ci = hoeffding_interval(n // 2, n, 0.95)
            assert ci.contains(0.5)
            widths.append(ci.width)
        assert widths[0] / widths[1] == pytest.approx(10.0, rel=1e-9)
        assert widths[1] / widths[2] == pytest.approx(10.0, rel=1e-9)

    def test_errors(self):
        with pytest.raises(ParameterError):
            hoeffding_interval(0, 0, 0.95)
        with pytest.raises(ParameterError):
            hoeffding_interval(5, 4, 0.95)
        with pytest.raises(ParameterError):
            hoeffding_interval(1, 10, 1.0)


class TestFiniteKeyPenalty:
    def test_direct_evaluation(self):
        # sqrt(ln(2e9)/1e6) = sqrt(21.416.../1e6)
        assert finite_key_penalty(10**6, 1e-9) == pytest.approx(4.62778705e-3, abs=1e-5)

    def test_eps_two_gives_zero(self):
        assert finite_key_penalty(10**6, 2.0 - 1e-15) == pytest.approx(0.0, abs=1e-7)

    def test_quadrupling_n_halves(self):
        p1 = finite_key_penalty(10**6, 1e-9)
        p4 = finite_key_penalty(4 * 10**6, 1e-9)
        assert p1 / p4 == pytest.approx(2.0, rel=1e-12)

    def test_sqrt_n_scaling_constant(self):
        values = {
            finite_key_penalty(n, 1e-9) * math.sqrt(n)
            for n in (10**3, 10**5, 10**7)
        }
        assert max(values) - min(values) < 1e-12

    def test_domain(self):
        with pytest.raises(ParameterError):
            finite_key_penalty(0, 1e-9)
        with pytest.raises(ParameterError):
            finite_key_penalty(10, 2.5)


class TestRecords:
    def test_interval_ordering(self):
        with pytest.raises(ParameterError):
            ConfidenceInterval(lower=0.6, upper=0.4, confidence=0.9)

    def test_budget_requires_positive(self):
        with pytest.raises(ParameterError):
            SecurityBudget(eps_sec=0.0, eps_cor=1e-15, eps_pe=1e-10, eps_auth=1e-10)

    def test_budget_total(self):
        b = SecurityBudget(eps_sec=1e-10, eps_cor=1e-10, eps_pe=1e-10, eps_auth=1e-10)
        assert b.total == pytest.approx(4e-10, rel=1e-12)

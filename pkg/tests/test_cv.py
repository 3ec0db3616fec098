import math

import numpy as np
import pytest

from qkdkit.cv import (
    CvParams,
    cv_holevo,
    cv_key_rate,
    cv_mutual_info,
    simulate_cv_session,
)
from qkdkit.exceptions import ParameterError

GRID_VA = (1.0, 2.0, 4.0, 8.0, 16.0)
GRID_T = (0.1, 0.3, 0.5, 0.8, 1.0)
GRID_XI = (0.0, 0.01, 0.02, 0.05, 0.1)


def holevo_eigen_oracle(params: CvParams) -> float:
    """Independent route: assemble the 4x4 covariance matrix, extract the
    symplectic spectrum numerically, condition on a homodyne outcome."""
    v = params.modulation_variance + 1.0
    t = params.transmittance
    chi_line = params.excess_noise + (1.0 - t) / t
    b = t * (v + chi_line)
    c = math.sqrt(t * (v * v - 1.0))
    gamma = np.array(
        [[v, 0, c, 0], [0, v, 0, -c], [c, 0, b, 0], [0, -c, 0, b]], dtype=float
    )
    omega = np.array(
        [[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]], dtype=float
    )
    eigen = np.abs(np.linalg.eigvals(1j * omega @ gamma).real)
    sympl = np.sort(eigen)[::2][::-1]  # doubly degenerate spectrum
    gamma_a = np.array([[v, 0.0], [0.0, v]])
    sigma_ab = np.array([[c, 0.0], [0.0, -c]])
    x_pinv = np.array([[1.0 / b, 0.0], [0.0, 0.0]])  # homodyne on x_B
    conditional = gamma_a - sigma_ab @ x_pinv @ sigma_ab.T
    lam3 = math.sqrt(np.linalg.det(conditional))

    def g(x: float) -> float:
        if x <= 0.0:
            return 0.0
        return (x + 1.0) * math.log2(x + 1.0) - x * math.log2(x)

    return (
        g((sympl[0] - 1.0) / 2.0)
        + g((sympl[1] - 1.0) / 2.0)
        - g((lam3 - 1.0) / 2.0)
    )


class TestMutualInfo:
    def test_vacuum_input(self):
        p = CvParams(0.0, 0.5, 0.02, 0.95)
        expected = 0.5 * math.log2((1.0 + p.chi_tot) / p.chi_tot)
        assert cv_mutual_info(p) == pytest.approx(expected, rel=1e-12)

    def test_opaque_channel_limit(self):
        values = [
            cv_mutual_info(CvParams(4.0, t, 0.0, 0.95)) for t in (1e-3, 1e-5, 1e-7)
        ]
        assert values[0] > values[1] > values[2]
        assert values[-1] < 1e-6

    def test_direct_evaluation(self):
        p = CvParams(4.0, 1.0, 0.0, 1.0)
        assert cv_mutual_info(p) == pytest.approx(0.5 * math.log2(6.0), rel=1e-12)

    def test_strictly_increasing_in_modulation(self):
        infos = [cv_mutual_info(CvParams(va, 0.5, 0.02, 0.95)) for va in GRID_VA]
        assert all(a < b for a, b in zip(infos, infos[1:]))

    def test_chi_line_convention(self):
        p = CvParams(4.0, 0.5, 0.02, 0.95)
        consistent = cv_mutual_info(p, convention="chi-line")
        assert consistent == pytest.approx(
            0.5 * math.log2(1.0 + 4.0 / p.chi_tot), rel=1e-12
        )
        assert consistent < cv_mutual_info(p, convention="chi-tot")

    def test_t_zero_rejected(self):
        with pytest.raises(ParameterError):
            CvParams(4.0, 0.0, 0.0, 0.95)


class TestHolevo:
    def test_lossless_noiseless_leaks_nothing(self):
        assert cv_holevo(CvParams(4.0, 1.0, 0.0, 1.0)) == pytest.approx(0.0, abs=1e-9)

    def test_matches_eigenvalue_oracle_on_grid(self):
        for va in GRID_VA:
            for t in GRID_T:
                for xi in GRID_XI:
                    p = CvParams(va, t, xi, 0.95)
                    assert cv_holevo(p) == pytest.approx(
                        holevo_eigen_oracle(p), abs=1e-9
                    )

    def test_monotone_in_excess_noise(self):
        for va in (2.0, 4.0):
            for t in (0.3, 0.8):
                chis = [cv_holevo(CvParams(va, t, xi, 0.95)) for xi in GRID_XI]
                assert all(a <= b + 1e-12 for a, b in zip(chis, chis[1:]))


class TestKeyRate:
    def test_lossless_rate_is_mutual_info(self):
        p = CvParams(4.0, 1.0, 0.0, 1.0)
        report = cv_key_rate(p)
        assert not report.aborted
        assert report.k == pytest.approx(report.i_ab, rel=1e-12)
        assert report.chi_be == pytest.approx(0.0, abs=1e-9)

    def test_zero_beta_aborts(self):
        p = CvParams(4.0, 0.5, 0.05, 1e-9)
        report = cv_key_rate(p)
        assert report.aborted
        assert report.k <= 0.0

    def test_golden_fixture(self):
        report = cv_key_rate(CvParams(4.0, 0.1, 0.1, 0.95))
        assert report.i_ab == pytest.approx(0.2900966283, abs=1e-9)
        assert report.chi_be == pytest.approx(0.2316165836, abs=1e-9)
        assert report.k == pytest.approx(0.0439752133, abs=1e-9)
        assert not report.aborted

    def test_k_bounded_by_beta_i_ab(self):
        rng = np.random.default_rng(123)
        for _ in range(100):
            p = CvParams(
                float(rng.uniform(0.5, 20.0)),
                float(rng.uniform(0.05, 1.0)),
                float(rng.uniform(0.0, 0.2)),
                float(rng.uniform(0.5, 1.0)),
            )
            report = cv_key_rate(p)
            assert report.k <= p.reconciliation_efficiency * report.i_ab + 1e-12

    def test_k_non_increasing_in_xi(self):
        for va in GRID_VA:
            for t in GRID_T:
                ks = [cv_key_rate(CvParams(va, t, xi, 0.95)).k for xi in GRID_XI]
                assert all(a >= b - 1e-12 for a, b in zip(ks, ks[1:]))


class TestSession:
    def test_identity_channel_estimates(self):
        _, t_hat, xi_hat = simulate_cv_session(CvParams(4.0, 1.0, 0.0, 1.0), 10**5, seed=11)
        assert t_hat == pytest.approx(1.0, abs=0.02)
        assert xi_hat == pytest.approx(0.0, abs=0.02)

    def test_noisy_channel_estimates(self):
        _, t_hat, xi_hat = simulate_cv_session(
            CvParams(4.0, 0.5, 0.05, 0.95), 10**5, seed=11
        )
        assert t_hat == pytest.approx(0.5, abs=0.02)
        assert xi_hat == pytest.approx(0.05, abs=0.02)

    def test_estimation_error_shrinks_with_n(self):
        params = CvParams(4.0, 0.5, 0.05, 0.95)
        errors = []
        for n in (10**4, 10**6):
            t_err = []
            for seed in (1, 2, 3, 4, 5):
                _, t_hat, _ = simulate_cv_session(params, n, seed=seed)
                t_err.append(abs(t_hat - 0.5))
            errors.append(float(np.mean(t_err)))
        assert errors[1] < errors[0] / 3.0  # ~1/sqrt(100) = 10x expected

    def test_zero_modulation_rejected(self):
        with pytest.raises(ParameterError):
            simulate_cv_session(CvParams(0.0, 0.5, 0.0, 0.95), 10**5, seed=1)

    def test_small_n_rejected(self):
        with pytest.raises(ParameterError):
            simulate_cv_session(CvParams(4.0, 0.5, 0.0, 0.95), 100, seed=1)

    def test_determinism(self):
        s1, t1, x1 = simulate_cv_session(CvParams(4.0, 0.5, 0.05, 0.95), 10**4, seed=4)
        s2, t2, x2 = simulate_cv_session(CvParams(4.0, 0.5, 0.05, 0.95), 10**4, seed=4)
        assert (t1, x1) == (t2, x2)
        np.testing.assert_array_equal(s1.alice_quadratures, s2.alice_quadratures)
        np.testing.assert_array_equal(s1.bob_measurements, s2.bob_measurements)
        np.testing.assert_array_equal(s1.bases, s2.bases)

import math

import numpy as np
import pytest

from hwmimo.config import (Dimensions, HardwareProfile, NetworkStats, PilotBook,
                           build_pilot_book)
from hwmimo.estimation import (EstimatorContext, error_coeffs, estimate_all,
                               estimation_weights, lmmse_estimate, phase_decay,
                               pilot_block_covariance, pilot_gram)

from conftest import make_config, sample_model


def textbook_mmse(pilot_block, stats, book, bs, target):
    """Conventional-model MMSE channel estimate, written from scratch.

    For the model without impairments the observation covariance in the
    pilot-use domain is sum_lm lam_lm x_lm x_lm^H + sigma^2 I, and the
    estimate of h_{lk} is lam_lk x_lk^H Cov^-1 applied to the pilot
    block.  Used as the oracle for the kappa=0, xi=1, delta=0 reduction.
    """
    l, k = target
    B = stats.dims.pilot_len
    cov = stats.noise_var * np.eye(B, dtype=complex)
    for ll in range(stats.dims.num_cells):
        for mm in range(stats.dims.users_per_cell):
            x = book.sequences[ll, mm]
            cov += stats.attenuation[bs, ll, mm] * np.outer(x, x.conj())
    row = stats.attenuation[bs, l, k] * np.linalg.solve(cov.T.conj(),
                                                        book.sequences[l, k]).conj()
    hhat = row @ pilot_block
    c = stats.attenuation[bs, l, k] * (1.0 - (row @ book.sequences[l, k]).real)
    return hhat, c


class TestPhaseDecay:
    def test_zero_drift_is_all_ones(self):
        assert np.array_equal(phase_decay(7, 4, 0.0), np.ones(4))

    def test_two_symbol_example(self):
        d = phase_decay(2, 2, 0.2)
        assert d[0] == pytest.approx(math.exp(-0.1), rel=1e-12)
        assert d[1] == 1.0

    def test_long_lag_example(self):
        d = phase_decay(11, 1, 0.1)
        assert d.shape == (1,)
        assert d[0] == pytest.approx(math.exp(-0.5), rel=1e-12)

    def test_domain(self):
        with pytest.raises(ValueError):
            phase_decay(1, 2, 0.1)
        with pytest.raises(ValueError):
            phase_decay(3, 2, -0.1)


class TestPilotGram:
    def test_reduces_to_outer_product(self):
        x = np.array([1 + 1j, 2.0, -1j])
        assert np.allclose(pilot_gram(x, 0.0, 0.0), np.outer(x, x.conj()))

    def test_distortion_boosts_diagonal(self):
        g = pilot_gram(np.array([1.0, 1.0]), 0.1, 0.0)
        assert np.allclose(g, [[1.01, 1.0], [1.0, 1.01]])

    def test_drift_damps_off_diagonal(self):
        g = pilot_gram(np.array([1.0, 1.0]), 0.0, 0.2)
        e = math.exp(-0.1)
        assert np.allclose(g, [[1.0, e], [e, 1.0]])

    def test_hermitian_positive_semidefinite(self, rng):
        for _ in range(20):
            x = rng.standard_normal(5) + 1j * rng.standard_normal(5)
            g = pilot_gram(x, rng.uniform(0, 0.5), rng.uniform(0, 0.3))
            assert np.allclose(g, g.conj().T)
            assert np.linalg.eigvalsh(g).min() > -1e-12


class TestPilotBlockCovariance:
    def test_scalar_case(self):
        g = pilot_gram(np.array([1.0]), 0.0, 0.0)
        cov = pilot_block_covariance(np.ones((1, 1)), g[None, None], 1.0, 1.0)
        assert np.allclose(cov, [[2.0]])

    def test_vanishing_gains_leave_amplified_noise(self):
        stats, book = make_config(seed=1)
        grams = np.stack([[pilot_gram(book.sequences[l, k], 0.1, 0.1)
                           for k in range(2)] for l in range(2)])
        cov = pilot_block_covariance(np.full((2, 2), 1e-30), grams, 0.7, 3.0)
        assert np.allclose(cov, 0.7 * 3.0 * np.eye(2))

    def test_distortion_shift_is_diagonal(self):
        stats, book = make_config(seed=1)
        att = stats.attenuation[0]

        def psi(kappa):
            grams = np.stack([[pilot_gram(book.sequences[l, k], kappa, 0.0)
                               for k in range(2)] for l in range(2)])
            return pilot_block_covariance(att, grams, 1.0, 1.0)

        diff = psi(0.05) - psi(0.0)
        expected = 0.05 ** 2 * np.einsum(
            "lk,lkb->b", att, np.abs(book.sequences) ** 2)
        assert np.allclose(diff, np.diag(expected))

    def test_dominates_amplified_noise(self, rng):
        # Psi >= sigma^2 xi I in the positive semidefinite order
        stats, book = make_config(seed=8, noise_var=0.3)
        hw = HardwareProfile(delta=0.05, kappa=0.2, xi=2.0)
        ctx = EstimatorContext.build(stats, book, hw)
        for j in range(2):
            floor = np.linalg.eigvalsh(ctx.pilot_cov[j]).min()
            assert floor >= 0.3 * 2.0 * (1 - 1e-10)


class TestLmmseEstimate:
    def test_scalar_hand_example(self):
        # L=K=B=N=1, lam=p=sigma2=1, ideal hardware: hhat = psi/2, c = 1/2
        dims = Dimensions(num_cells=1, users_per_cell=1, num_antennas=1,
                          pilot_len=1, block_len=4)
        stats = NetworkStats(dims=dims, attenuation=np.ones((1, 1, 1)),
                             power=np.ones((1, 1)), noise_var=1.0)
        book = build_pilot_book("spatial_dft", dims, stats.power)
        ctx = EstimatorContext.build(stats, book, HardwareProfile())
        est = lmmse_estimate(np.array([[0.6 - 0.2j]]), ctx, 0, (0, 0), 1)
        assert est.hhat[0] == pytest.approx(0.3 - 0.1j, rel=1e-12)
        assert est.error_coeff == pytest.approx(0.5, rel=1e-12)
        assert est.mse == pytest.approx(0.5, rel=1e-12)

    def test_zero_pilot_returns_prior(self):
        stats, book = make_config(seed=4)
        silent = PilotBook(kind="custom",
                           sequences=np.zeros_like(book.sequences),
                           reuse_id=book.reuse_id)
        ctx = EstimatorContext.build(stats, silent, HardwareProfile())
        est = lmmse_estimate(np.ones((2, 4)), ctx, 0, (1, 1), 5)
        assert np.all(est.hhat == 0.0)
        assert est.error_coeff == pytest.approx(stats.attenuation[0, 1, 1])

    def test_extreme_drift_collapses_to_prior(self):
        stats, book = make_config(seed=4)
        hw = HardwareProfile(delta=500.0)
        ctx = EstimatorContext.build(stats, book, hw)
        est = lmmse_estimate(np.ones((2, 4)), ctx, 0, (0, 0), 9)
        assert np.linalg.norm(est.hhat) < 1e-30
        assert est.error_coeff == pytest.approx(stats.attenuation[0, 0, 0], rel=1e-9)

    def test_stacked_and_matrix_blocks_agree(self):
        stats, book = make_config(seed=6)
        ctx = EstimatorContext.build(stats, book, HardwareProfile(delta=0.01))
        y = np.arange(8, dtype=complex).reshape(2, 4) + 1j
        a = lmmse_estimate(y, ctx, 1, (0, 1), 4)
        b = lmmse_estimate(y.reshape(-1), ctx, 1, (0, 1), 4)
        assert np.array_equal(a.hhat, b.hhat)

    def test_batch_interface_matches_single(self):
        stats, book = make_config(seed=6)
        ctx = EstimatorContext.build(stats, book, HardwareProfile(delta=0.01, kappa=0.2, xi=1.3))
        y = np.random.default_rng(0).standard_normal((2, 4)) * (1 + 0.5j)
        hhat, coeffs = estimate_all(y, ctx, 0, 6)
        for l in range(2):
            for k in range(2):
                single = lmmse_estimate(y, ctx, 0, (l, k), 6)
                assert np.allclose(hhat[l, k], single.hhat)
                assert coeffs[l, k] == pytest.approx(single.error_coeff, abs=1e-15)

    def test_error_coeff_monotone_in_pilot_power(self):
        # stronger pilots can only improve the estimate
        dims = Dimensions(num_cells=1, users_per_cell=1, num_antennas=2,
                          pilot_len=2, block_len=6)
        hw = HardwareProfile(delta=0.01, kappa=0.1, xi=1.5)
        last = np.inf
        for p in np.linspace(0.1, 5.0, 10):
            stats = NetworkStats(dims=dims, attenuation=np.ones((1, 1, 1)),
                                 power=np.array([[p]]), noise_var=1.0)
            book = build_pilot_book("spatial_dft", dims, stats.power)
            ctx = EstimatorContext.build(stats, book, hw)
            c = error_coeffs(ctx, 0, 4)[0, 0]
            assert c <= last + 1e-15
            last = c

    def test_matches_textbook_mmse_without_impairments(self, rng):
        # kappa=0, xi=1, delta=0 reduces to the conventional estimator
        for trial in range(10):
            stats, book = make_config(num_cells=2, users_per_cell=2,
                                      num_antennas=3, pilot_len=3,
                                      noise_var=float(rng.uniform(0.3, 2.0)),
                                      seed=100 + trial)
            ctx = EstimatorContext.build(stats, book, HardwareProfile())
            y = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
            for target in ((0, 0), (1, 1)):
                mine = lmmse_estimate(y, ctx, 0, target, 5)
                want_h, want_c = textbook_mmse(y, stats, book, 0, target)
                assert np.allclose(mine.hhat, want_h, rtol=1e-12, atol=1e-14)
                assert mine.error_coeff == pytest.approx(want_c, rel=1e-12)


@pytest.fixture(scope="module")
def estimator_samples():
    stats, book = make_config(num_cells=2, users_per_cell=2, num_antennas=4,
                              pilot_len=2, block_len=10, seed=9)
    hw = HardwareProfile(delta=0.02, kappa=0.15, xi=1.4)
    ctx = EstimatorContext.build(stats, book, hw)
    t = 6
    model = sample_model(stats, book, hw, 0, [t], 40_000, seed=77)
    w = estimation_weights(ctx, 0, t)
    hhat = np.einsum("lkb,nbq->nlkq", w, model["y"])
    heff = model["phasors"][:, 0][:, None, None, :] * model["h"]
    return stats, ctx, t, hhat, heff


class TestEstimatorStatistics:
    """Monte Carlo checks of the estimator against independently drawn data."""

    def test_unbiased(self, estimator_samples):
        stats, ctx, t, hhat, heff = estimator_samples
        err = (heff - hhat)[:, 0, 0]
        mean = err.mean(axis=0)
        se = np.sqrt(np.var(err, axis=0).sum() / err.shape[0])
        assert np.linalg.norm(mean) < 3 * se

    def test_error_variance_matches_coefficient(self, estimator_samples):
        stats, ctx, t, hhat, heff = estimator_samples
        coeffs = error_coeffs(ctx, 0, t)
        for l in range(2):
            for k in range(2):
                err = heff[:, l, k] - hhat[:, l, k]
                per_antenna = np.mean(np.abs(err) ** 2, axis=0)
                assert np.allclose(per_antenna, coeffs[l, k], rtol=0.03)
                cov = (err.conj().T @ err) / err.shape[0]
                off = cov - np.diag(np.diag(cov))
                assert np.max(np.abs(off)) < 0.05 * coeffs[l, k]

    def test_orthogonality_principle(self, estimator_samples):
        stats, ctx, t, hhat, heff = estimator_samples
        err = heff[:, 0, 0] - hhat[:, 0, 0]
        inner = np.sum(hhat[:, 0, 0].conj() * err, axis=1)
        se = np.std(inner) / math.sqrt(inner.size)
        assert abs(inner.mean()) < 3 * se

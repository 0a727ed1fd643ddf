import numpy as np
import pytest

from hwmimo.config import (ConfigError, Dimensions, HardwareProfile,
                           NetworkStats, PilotBook, build_pilot_book, validate)
from hwmimo.estimation import EstimatorContext
from hwmimo.rates import mrc_sinr

from conftest import make_config


def dims_of(L=1, K=2, N=4, B=2, T=10):
    return Dimensions(num_cells=L, users_per_cell=K, num_antennas=N,
                      pilot_len=B, block_len=T)


class TestDimensions:
    def test_ordering_invariant(self):
        with pytest.raises(ConfigError):
            dims_of(K=3, B=2)
        with pytest.raises(ConfigError):
            dims_of(B=11, T=10)

    def test_positivity(self):
        with pytest.raises(ConfigError):
            dims_of(N=0)


class TestHardwareProfile:
    def test_bounds(self):
        HardwareProfile(delta=0.0, kappa=0.0, xi=1.0)
        with pytest.raises(ConfigError):
            HardwareProfile(delta=-0.1)
        with pytest.raises(ConfigError):
            HardwareProfile(kappa=-0.1)
        with pytest.raises(ConfigError):
            HardwareProfile(xi=0.0)

    def test_sub_unity_xi_allowed_for_analysis(self):
        # constructable; the strict physical check lives in validate()
        assert HardwareProfile(xi=0.5).xi == 0.5


class TestSpatialDftBook:
    def test_two_user_orthogonality_and_power(self):
        dims = dims_of(K=2, B=2)
        book = build_pilot_book("spatial_dft", dims, np.ones((1, 2)))
        s = book.sequences[0]
        assert abs(np.vdot(s[0], s[1])) < 1e-12 * np.linalg.norm(s[0]) * np.linalg.norm(s[1])
        assert np.allclose(np.abs(s) ** 2, 1.0)

    def test_full_reuse_across_sixteen_cells(self):
        dims = Dimensions(num_cells=16, users_per_cell=8, num_antennas=4,
                          pilot_len=8, block_len=500)
        book = build_pilot_book("spatial_dft", dims, np.ones((16, 8)))
        s = book.sequences
        for k in range(8):
            for m in range(k + 1, 8):
                assert abs(np.vdot(s[0, k], s[0, m])) < 1e-12 * 8
        # the same sequence serves sector k of every cell
        for l in range(1, 16):
            assert np.array_equal(s[l], s[0])
        assert np.array_equal(book.reuse_id[3], book.reuse_id[0])

    def test_per_symbol_power_matches_cap(self):
        dims = dims_of(K=2, B=4)
        pwr = np.array([[0.5, 2.0]])
        book = build_pilot_book("spatial_dft", dims, pwr)
        assert np.allclose(np.abs(book.sequences[0, 0]) ** 2, 0.5)
        assert np.allclose(np.abs(book.sequences[0, 1]) ** 2, 2.0)


class TestTemporalBook:
    def test_single_spike_at_own_index(self):
        dims = dims_of(K=2, B=2)
        book = build_pilot_book("temporal", dims, np.ones((1, 2)))
        s = book.sequences[0]
        assert np.allclose(np.abs(s[0]), [1.0, 0.0])
        assert np.allclose(np.abs(s[1]), [0.0, 1.0])

    def test_distinct_indices_and_energy_ratio(self):
        dims = dims_of(K=4, B=4)
        p = np.full((1, 4), 1.3)
        temporal = build_pilot_book("temporal", dims, p)
        spatial = build_pilot_book("spatial_dft", dims, p)
        supports = [np.flatnonzero(temporal.sequences[0, k]) for k in range(4)]
        assert all(s.size == 1 for s in supports)
        assert len({int(s[0]) for s in supports}) == 4
        # temporal pilots carry 1/K of the spatial pilot energy when B == K
        e_t = np.linalg.norm(temporal.sequences[0, 0]) ** 2
        e_s = np.linalg.norm(spatial.sequences[0, 0]) ** 2
        assert e_t == pytest.approx(e_s / 4)


def test_build_errors():
    # a pilot shorter than the user count is rejected at the dimension level
    with pytest.raises(ConfigError):
        Dimensions(num_cells=1, users_per_cell=3, num_antennas=1,
                   pilot_len=2, block_len=10)
    with pytest.raises(ConfigError):
        build_pilot_book("fancy", dims_of(), np.ones((1, 2)))
    with pytest.raises(ConfigError):
        build_pilot_book("spatial_dft", dims_of(), -np.ones((1, 2)))


class TestValidate:
    def test_normalizes_noise_to_unity(self):
        stats, book = make_config(noise_var=0.8)
        hw = HardwareProfile(xi=1.5)
        nstats, nbook, nhw = validate(stats, book, hw)
        assert nstats.noise_var == 1.0
        assert np.allclose(nstats.power, stats.power / 0.8)
        assert np.allclose(np.abs(nbook.sequences) ** 2,
                           np.abs(book.sequences) ** 2 / 0.8)

    def test_rejects_zero_attenuation(self):
        stats, book = make_config()
        bad = NetworkStats(dims=stats.dims,
                           attenuation=np.where(stats.attenuation > 0.3,
                                                stats.attenuation, 0.0),
                           power=stats.power, noise_var=1.0)
        with pytest.raises(ConfigError, match="attenuation"):
            validate(bad, book, HardwareProfile())

    def test_strict_rejects_sub_unity_xi(self):
        stats, book = make_config()
        with pytest.raises(ConfigError, match="xi"):
            validate(stats, book, HardwareProfile(xi=0.5))
        validate(stats, book, HardwareProfile(xi=0.5), strict=False)

    def test_rejects_pilot_power_above_cap(self):
        stats, book = make_config()
        hot = PilotBook(kind="custom", sequences=book.sequences * 3.0,
                        reuse_id=book.reuse_id)
        with pytest.raises(ConfigError, match="power cap"):
            validate(stats, hot, HardwareProfile())

    def test_rejects_colliding_temporal_pilots(self):
        stats, book = make_config(pilot_kind="temporal")
        seq = np.array(book.sequences)
        seq[0, 1] = seq[0, 0]  # both users of cell 0 now spike at use 0
        clash = PilotBook(kind="temporal", sequences=seq, reuse_id=book.reuse_id)
        with pytest.raises(ConfigError, match="collide"):
            validate(stats, clash, HardwareProfile())

    def test_normalization_leaves_sinr_unchanged(self):
        stats, book = make_config(noise_var=2.7, seed=5)
        hw = HardwareProfile(delta=0.02, kappa=0.1, xi=2.0)
        raw = mrc_sinr(EstimatorContext.build(stats, book, hw), 0, 1, 7)
        nstats, nbook, nhw = validate(stats, book, hw)
        norm = mrc_sinr(EstimatorContext.build(nstats, nbook, nhw), 0, 1, 7)
        assert norm == pytest.approx(raw, rel=1e-12)

"""Layout placement, pathloss and channel sampling."""

import math

import numpy as np
import pytest

from simcf import channel


class TestPlaceNetwork:
    def test_four_aps_tile_centers(self):
        layout = channel.place_network(seed=0, ap_count=4, ue_count=3, area_m=100.0)
        np.testing.assert_allclose(
            layout.ap_positions[:, :2],
            [(25, 25), (75, 25), (25, 75), (75, 75)])
        assert np.all(layout.ap_positions[:, 2] == 10.0)
        assert np.all(layout.ue_positions[:, 2] == 1.7)

    def test_seed_determinism(self):
        a = channel.place_network(seed=42, ap_count=2, ue_count=5, area_m=100.0)
        b = channel.place_network(seed=42, ap_count=2, ue_count=5, area_m=100.0)
        np.testing.assert_array_equal(a.ue_positions, b.ue_positions)
        np.testing.assert_array_equal(a.ap_positions, b.ap_positions)

    def test_eight_aps_on_3x3_tiling(self):
        layout = channel.place_network(seed=1, ap_count=8, ue_count=6, area_m=100.0)
        side = 100.0 / 3
        expected = [((i % 3 + 0.5) * side, (i // 3 + 0.5) * side) for i in range(8)]
        np.testing.assert_allclose(layout.ap_positions[:, :2], expected)

    def test_ues_inside_area(self):
        layout = channel.place_network(seed=3, ap_count=2, ue_count=200, area_m=60.0)
        assert np.all(layout.ue_positions[:, :2] >= 0.0)
        assert np.all(layout.ue_positions[:, :2] <= 60.0)

    def test_zero_area_rejected(self):
        with pytest.raises(ValueError, match="area"):
            channel.place_network(seed=0, ap_count=1, ue_count=1, area_m=0.0)


class TestLargeScale:
    def _beta_db_at(self, d3):
        # one AP and one UE exactly d3 apart (same height, pure horizontal
        # separation, so d_3D = d3 exactly)
        layout = channel.Layout(
            area_m=200.0,
            ap_positions=np.array([[0.0, 0.0, 5.0]]),
            ue_positions=np.array([[d3, 0.0, 5.0]]),
            seed=0)
        beta = channel.large_scale(layout).beta[0, 0]
        return 10.0 * math.log10(beta)

    def test_reference_distance_one_meter(self):
        assert self._beta_db_at(1.0) == pytest.approx(-30.5, abs=1e-9)

    def test_ten_meters(self):
        assert self._beta_db_at(10.0) == pytest.approx(-67.2, abs=1e-9)

    def test_arbitrary_distance_scalar_check(self):
        d = 54.23
        assert self._beta_db_at(d) == pytest.approx(-30.5 - 36.7 * math.log10(d), abs=1e-9)

    def test_monotone_decreasing_along_ray(self):
        dists = np.linspace(1.0, 120.0, 100)
        betas = [self._beta_db_at(d3) for d3 in dists]
        assert np.all(np.diff(betas) < 0)

    def test_coincident_positions_rejected(self):
        layout = channel.Layout(
            area_m=10.0,
            ap_positions=np.array([[1.0, 1.0, 5.0]]),
            ue_positions=np.array([[1.0, 1.0, 5.0]]),
            seed=0)
        with pytest.raises(ValueError, match="coincide"):
            channel.large_scale(layout)


class TestSampleChannel:
    def _ls(self, beta):
        return channel.LargeScale(beta=np.asarray(beta, dtype=np.float64))

    def test_seed_determinism(self):
        ls = self._ls([[1e-8, 2e-8]])
        a = channel.sample_channel(ls, 9, seed=7)
        b = channel.sample_channel(ls, 9, seed=7)
        np.testing.assert_array_equal(a.h_hat, b.h_hat)

    def test_rayleigh_mode_reconstruction(self):
        # regenerate the same small-scale draw and apply the definition by hand
        ls = self._ls([[0.25]])
        got = channel.sample_channel(ls, 4, seed=11, mode="rayleigh")
        rng = np.random.default_rng(11)
        h = (rng.standard_normal((1, 1, 4)) + 1j * rng.standard_normal((1, 1, 4))) / math.sqrt(2)
        np.testing.assert_array_equal(got.h_hat, 0.5 * h)

    def test_as_written_mode_reconstruction(self):
        ls = self._ls([[0.25, 1.0], [2.0, 0.5]])
        got = channel.sample_channel(ls, 3, seed=13, mode="as-written")
        rng = np.random.default_rng(13)
        h = (rng.standard_normal((2, 2, 3)) + 1j * rng.standard_normal((2, 2, 3))) / math.sqrt(2)
        np.testing.assert_allclose(got.h_hat, ls.beta[:, :, None] * np.abs(h) ** 2, rtol=1e-15)

    def test_as_written_real_nonnegative(self):
        ls = self._ls(np.full((3, 4), 1e-9))
        got = channel.sample_channel(ls, 9, seed=17, mode="as-written")
        assert np.all(got.h_hat.imag == 0.0)
        assert np.all(got.h_hat.real >= 0.0)

    def test_rayleigh_unit_variance_monte_carlo(self):
        # 1e5 draws per entry; mean |h_hat|^2 / beta within 0.02 of 1
        # (and within 3 standard errors, se ~= 1/sqrt(1e5))
        ls = self._ls([[4.0]])
        got = channel.sample_channel(ls, 100_000, seed=19, mode="rayleigh")
        mean = float(np.mean(np.abs(got.h_hat) ** 2) / 4.0)
        assert mean == pytest.approx(1.0, abs=0.02)
        assert abs(mean - 1.0) <= 3.0 / math.sqrt(100_000)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError, match="mode"):
            channel.sample_channel(self._ls([[1.0]]), 4, seed=0, mode="rician")

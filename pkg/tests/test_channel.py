"""Channel tests: noise calibration, fading statistics, tap profiles."""

import numpy as np
import pytest
from scipy import special, stats

from ajscclink.channel import (
    ChannelSpec,
    FlatRayleighChannel,
    MultipathChannel,
    TapProfile,
    apply_awgn,
    apply_flat_rayleigh,
    apply_multipath,
    builtin_profile,
    jakes_gains,
    load_profile,
    make_channel,
    make_jakes,
)
from ajscclink.errors import ConfigError
from ajscclink.modem import fast_profile


def unit_blocks(n_blocks, n, seed=0):
    rng = np.random.default_rng(seed)
    return np.exp(1j * rng.uniform(0, 2 * np.pi, (n_blocks, n)))


class TestAwgn:
    def test_infinite_csnr_passthrough(self):
        x = unit_blocks(4, 64)
        y = apply_awgn(x, float("inf"), 3)
        np.testing.assert_array_equal(y, x)

    def test_zero_db_noise_variance(self):
        x = unit_blocks(1000, 1024)  # ~1e6 samples at unit power
        y = apply_awgn(x, 0.0, 7)
        noise = y - x
        assert np.mean(np.abs(noise) ** 2) == pytest.approx(1.0, abs=0.02)

    def test_seed_determinism(self):
        x = unit_blocks(10, 128)
        np.testing.assert_array_equal(apply_awgn(x, 5.0, 11), apply_awgn(x, 5.0, 11))
        assert not np.array_equal(apply_awgn(x, 5.0, 11), apply_awgn(x, 5.0, 12))

    def test_noise_is_white(self):
        x = np.ones((1000, 1024), dtype=complex)
        noise = (apply_awgn(x, 0.0, 5) - x).ravel()
        n = noise.size
        for lag in (1, 2, 5):
            r = np.abs(np.vdot(noise[:-lag], noise[lag:])) / n
            assert r < 0.01

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            apply_awgn(np.empty((0, 8)), 0.0, 1)


class TestFlatRayleigh:
    def test_unity_override_reduces_to_pure_noise(self):
        x = unit_blocks(200, 64)
        y = apply_flat_rayleigh(x, float("inf"), 3, h_override=np.ones(200))
        np.testing.assert_array_equal(y, x)
        y = apply_flat_rayleigh(x, 0.0, 3, h_override=np.ones(200))
        assert np.mean(np.abs(y - x) ** 2) == pytest.approx(1.0, abs=0.05)

    def test_magnitude_is_rayleigh(self):
        x = np.ones((100_000, 2), dtype=complex)
        y = apply_flat_rayleigh(x, float("inf"), 17)
        h = y[:, 0]
        assert np.mean(np.abs(h) ** 2) == pytest.approx(1.0, abs=0.01)
        result = stats.kstest(np.abs(h), stats.rayleigh(scale=1 / np.sqrt(2)).cdf)
        assert result.pvalue > 0.01

    def test_block_fading_is_constant_within_block(self):
        x = unit_blocks(50, 256)
        y = apply_flat_rayleigh(x, float("inf"), 2)
        ratio = y / x
        assert np.abs(ratio - ratio[:, :1]).max() < 1e-12
        assert np.unique(np.round(ratio[:, 0], 12)).size == 50

    def test_energy_accounting(self):
        x = unit_blocks(2000, 512, seed=1)  # ~1e6 samples
        y = apply_flat_rayleigh(x, 0.0, 23)
        # E[|h|^2] * P_sig + sigma^2 with both terms at 1.
        assert np.mean(np.abs(y) ** 2) == pytest.approx(2.0, rel=0.02)

    def test_seed_determinism(self):
        x = unit_blocks(16, 64)
        np.testing.assert_array_equal(
            apply_flat_rayleigh(x, 3.0, 5), apply_flat_rayleigh(x, 3.0, 5)
        )


class TestJakes:
    @pytest.mark.parametrize("doppler", [5.0, 20.0])
    def test_autocorrelation_tracks_bessel(self, doppler):
        dt = 1e-3
        lags = np.arange(51)
        acs = []
        for seed in range(6):
            g = jakes_gains(doppler, np.arange(100_000) * dt, seed)
            ac = [np.vdot(g[: g.size - lag], g[lag:]).real / (g.size - lag) for lag in lags]
            acs.append(np.asarray(ac) / ac[0])
        mean_ac = np.mean(acs, axis=0)
        want = special.j0(2 * np.pi * doppler * lags * dt)
        assert np.abs(mean_ac - want).max() < 0.05

    def test_magnitude_rayleigh_at_fixed_time(self):
        t = np.array([0.321])
        vals = np.array([jakes_gains(7.0, t, seed)[0] for seed in range(20_000)])
        assert np.mean(np.abs(vals) ** 2) == pytest.approx(1.0, abs=0.02)
        result = stats.kstest(np.abs(vals), stats.rayleigh(scale=1 / np.sqrt(2)).cdf)
        assert result.pvalue > 0.01

    def test_zero_doppler_is_time_constant(self):
        g = jakes_gains(0.0, np.linspace(0, 10, 1000), seed=3)
        assert np.abs(g - g[0]).max() < 1e-12

    def test_minimum_oscillators_enforced(self):
        with pytest.raises(ConfigError):
            make_jakes(5.0, np.random.default_rng(0), n_oscillators=8)


class TestTapProfile:
    def test_single_tap_line(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("0,0\n")
        profile = load_profile(path)
        np.testing.assert_array_equal(profile.delays, [0.0])
        np.testing.assert_allclose(profile.powers, [1.0])

    def test_two_taps_normalize(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("# comment line\n0,0\n100e-9,-3\n")
        profile = load_profile(path)
        lin = np.array([1.0, 10 ** (-0.3)])
        np.testing.assert_allclose(profile.powers, lin / lin.sum(), rtol=1e-12)
        assert profile.powers[0] == pytest.approx(0.666, abs=2e-3)
        assert profile.powers[1] == pytest.approx(0.333, abs=2e-3)

    def test_unsorted_delays_rejected(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("0,0\n200e-9,-3\n100e-9,-6\n")
        with pytest.raises(ConfigError):
            load_profile(path)

    def test_first_delay_must_be_zero(self):
        with pytest.raises(ConfigError):
            TapProfile.from_db([10e-9, 20e-9], [0.0, -3.0])

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("0,0\nnot-a-number,-3\n")
        with pytest.raises(ConfigError):
            load_profile(path)

    def test_builtin_profiles_load_normalized(self):
        for family in ("jtc_indoor_a", "jtc_outdoor_low_a"):
            profile = builtin_profile(family)
            assert profile.delays[0] == 0.0
            assert profile.powers.sum() == pytest.approx(1.0)


class TestChannelSpec:
    def test_doppler_defaults_per_family(self):
        assert ChannelSpec("awgn").doppler_hz == 0.0
        assert ChannelSpec("jtc_indoor_a").doppler_hz == 5.0
        assert ChannelSpec("jtc_outdoor_low_a").doppler_hz == 20.0

    def test_no_doppler_families_reject_doppler(self):
        with pytest.raises(ConfigError):
            ChannelSpec("awgn", doppler_hz=5.0)
        with pytest.raises(ConfigError):
            ChannelSpec("flat_rayleigh", doppler_hz=1.0)

    def test_unknown_family_rejected(self):
        with pytest.raises(ConfigError):
            ChannelSpec("rician")

    def test_resolved_fills_builtin_profile(self):
        spec = ChannelSpec("jtc_indoor_a").resolved()
        assert spec.tap_profile is not None


class TestMultipath:
    def test_missing_profile_is_config_error(self):
        x = unit_blocks(4, 512)
        with pytest.raises(ConfigError):
            apply_multipath(x, ChannelSpec("awgn"), 8.192e6)

    def test_single_tap_no_doppler_reduces_to_flat_coefficient(self):
        single = TapProfile(np.array([0.0]), np.array([1.0]), "single")
        spec = ChannelSpec("jtc_indoor_a", tap_profile=single, doppler_hz=0.0, seed=11)
        x = unit_blocks(50, 256)
        y = apply_multipath(x, spec, 8.192e6)
        h = y / x
        assert np.abs(h - h[0, 0]).max() < 1e-12
        # Across seeds the constant coefficient is Rayleigh with unit power.
        hs = []
        one = np.ones((1, 256), dtype=complex)
        for seed in range(4000):
            spec_i = ChannelSpec("jtc_indoor_a", tap_profile=single, doppler_hz=0.0, seed=seed)
            hs.append(apply_multipath(one, spec_i, 8.192e6)[0, 0])
        hs = np.asarray(hs)
        assert np.mean(np.abs(hs) ** 2) == pytest.approx(1.0, abs=0.05)
        result = stats.kstest(np.abs(hs), stats.rayleigh(scale=1 / np.sqrt(2)).cdf)
        assert result.pvalue > 0.01

    def test_ensemble_tap_power_is_unit(self):
        total = []
        for seed in range(48):
            ch = MultipathChannel(
                ChannelSpec("jtc_outdoor_low_a", csnr_db=float("inf"), seed=seed), 512e3, 512
            )
            gains = ch.tap_gain_series(np.arange(4000))
            total.append(np.mean(np.sum(ch.tap_scales[:, None] ** 2 * np.abs(gains) ** 2, axis=0)))
        assert np.mean(total) == pytest.approx(1.0, abs=0.02)

    def test_indoor_profile_almost_flat_at_fast_bandwidth(self):
        cfg = fast_profile()
        ch = MultipathChannel(
            ChannelSpec("jtc_indoor_a", csnr_db=float("inf"), seed=5), cfg.sample_rate, cfg.fft_size
        )
        gains = ch.tap_gain_series(np.arange(400))
        f = np.linspace(cfg.f_min, cfg.f_max, 257)
        phase = np.exp(-2j * np.pi * np.outer(ch.delay_samples / cfg.sample_rate, f))
        ripples = []
        for b in range(gains.shape[1]):
            h = (ch.tap_scales[:, None] * gains[:, b : b + 1] * phase).sum(axis=0)
            mag_db = 20 * np.log10(np.abs(h))
            ripples.append(mag_db.max() - mag_db.min())
        assert np.median(ripples) < 1.0

    def test_delay_exceeding_quarter_block_rejected(self):
        late = TapProfile(np.array([0.0, 40e-6]), np.array([0.5, 0.5]), "late")
        spec = ChannelSpec("jtc_indoor_a", tap_profile=late, seed=0)
        with pytest.raises(ConfigError):
            MultipathChannel(spec, 8.192e6, 512)

    def test_seed_determinism_and_chunking(self):
        x = unit_blocks(60, 512, seed=4)
        spec = ChannelSpec("jtc_outdoor_low_a", csnr_db=10.0, seed=9)
        whole = apply_multipath(x, spec, 8.192e6)
        np.testing.assert_array_equal(whole, apply_multipath(x, spec, 8.192e6))
        ch = MultipathChannel(spec, 8.192e6, 512)
        chunked = np.vstack([ch.process(x[:25], 0), ch.process(x[25:], 25)])
        np.testing.assert_array_equal(whole, chunked)

    def test_energy_accounting_full_path(self):
        x = unit_blocks(3000, 512, seed=2)
        outs = []
        for seed in range(12):
            spec = ChannelSpec("jtc_outdoor_low_a", csnr_db=0.0, seed=seed)
            y = apply_multipath(x, spec, 512e3)
            outs.append(np.mean(np.abs(y) ** 2))
        assert np.mean(outs) == pytest.approx(2.0, rel=0.05)


class TestStreamingWrappers:
    def test_flat_chunked_matches_one_shot(self):
        x = unit_blocks(40, 128, seed=6)
        spec = ChannelSpec("flat_rayleigh", csnr_db=5.0, seed=3)
        whole = apply_flat_rayleigh(x, 5.0, 3)
        ch = FlatRayleighChannel(spec, 1e6, 128)
        chunked = np.vstack([ch.process(x[:13]), ch.process(x[13:31]), ch.process(x[31:])])
        np.testing.assert_array_equal(whole, chunked)

    def test_awgn_chunked_matches_one_shot(self):
        x = unit_blocks(40, 128, seed=6)
        spec = ChannelSpec("awgn", csnr_db=0.0, seed=13)
        whole = apply_awgn(x, 0.0, 13)
        ch = make_channel(spec, 1e6, 128)
        chunked = np.vstack([ch.process(x[:9]), ch.process(x[9:])])
        np.testing.assert_array_equal(whole, chunked)

    def test_make_channel_dispatch(self):
        assert isinstance(make_channel(ChannelSpec("flat_rayleigh"), 1e6, 64), FlatRayleighChannel)
        assert isinstance(
            make_channel(ChannelSpec("jtc_indoor_a"), 8.192e6, 8192), MultipathChannel
        )

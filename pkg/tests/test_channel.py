import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldreuse.channel import (AmplifierModel, NoiseModel, TimeVaryingChannel, amplifier_apply,
                                channel_matrix, propagate, read_taps_csv, snr_to_variance,
                                synth_channel, write_taps_csv)
from fieldreuse.errors import NumericError, ParamError, RangeError

PAPER = [1, 0.9472, 0.4586, 0.4315, 0.1497]


class TestPropagate:
    def test_identity(self):
        x = np.array([1, -1j, 0.5])
        np.testing.assert_array_equal(propagate(x, TimeVaryingChannel.static([1.0]))[0], x)

    def test_hand_convolution(self):
        y = propagate([1, -1, 1], TimeVaryingChannel.static([1, 0.5]))
        np.testing.assert_allclose(y[0], [1, -0.5, 0.5, 0.5])

    def test_impulse_gives_taps(self):
        y = propagate([1.0], TimeVaryingChannel.static(PAPER))
        np.testing.assert_allclose(y[0], PAPER)

    def test_time_varying_matches_loop(self):
        rng = np.random.default_rng(0)
        ch = synth_channel({"kind": "random_walk", "taps": [1, 0.3, 0.1], "sigma": 0.05,
                            "seed": 2}, 40, K=2)
        x = rng.standard_normal(38) + 1j * rng.standard_normal(38)
        y = propagate(x, ch)
        ref = np.zeros((2, 40), dtype=complex)
        for k in range(2):
            for n in range(40):
                for l in range(3):
                    if 0 <= n - l < x.size:
                        ref[k, n] += ch.taps[k, n, l] * x[n - l]
        np.testing.assert_allclose(y, ref, atol=1e-13)

    def test_same_seed_same_noise(self):
        ch = TimeVaryingChannel.static(PAPER)
        nm = NoiseModel(0.1)
        a = propagate(np.ones(50), ch, nm, np.random.default_rng(7))
        b = propagate(np.ones(50), ch, nm, np.random.default_rng(7))
        np.testing.assert_array_equal(a, b)

    def test_noise_requires_rng(self):
        with pytest.raises(ParamError):
            propagate([1.0], TimeVaryingChannel.static([1.0]), NoiseModel(1.0))

    def test_non_finite_taps(self):
        with pytest.raises(NumericError):
            TimeVaryingChannel.static([1.0, np.inf])

    @given(st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=30)
    def test_linearity(self, a, b):
        rng = np.random.default_rng(1)
        ch = synth_channel({"kind": "sinusoidal_fade", "taps": [1, 0.5], "doppler": 0.01,
                            "seed": 3}, 30, K=2)
        x1 = rng.standard_normal(29) + 0j
        x2 = rng.standard_normal(29) * 1j
        lhs = propagate(a * x1 + b * x2, ch)
        rhs = a * propagate(x1, ch) + b * propagate(x2, ch)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


class TestNoise:
    def test_variance(self):
        w = NoiseModel(0.5).sample(200_000, np.random.default_rng(0))
        np.testing.assert_allclose(np.mean(np.abs(w) ** 2), 0.5, rtol=0.01)

    def test_bernoulli_gaussian(self):
        nm = NoiseModel(1.0, "bernoulli_gaussian", 0.1, 10.0)
        w = nm.sample(200_000, np.random.default_rng(0))
        np.testing.assert_allclose(np.mean(np.abs(w) ** 2), 0.9 + 0.1 * 10, rtol=0.03)

    def test_validation(self):
        with pytest.raises(ParamError):
            NoiseModel(-1)
        with pytest.raises(ParamError):
            NoiseModel(1, impulse_prob=2)

    def test_snr(self):
        assert snr_to_variance(10) == pytest.approx(0.1)


class TestChannelMatrix:
    def test_identity(self):
        H = channel_matrix(TimeVaryingChannel.static([1.0]), 0, 5)
        np.testing.assert_array_equal(H.entries, np.eye(5))

    def test_two_tap(self):
        H = channel_matrix(TimeVaryingChannel.static([2.0, 3.0]), 0, 2)
        np.testing.assert_array_equal(H.entries, [[2, 3, 0], [0, 2, 3]])

    def _tv(self):
        taps = np.zeros((1, 4, 2), dtype=complex)
        for n in range(4):
            taps[0, n] = [10 * n + 1, 10 * n + 2]
        return TimeVaryingChannel(taps)

    def test_column_layout(self):
        # entry (0,1) is h_{n-1}[1], entry (1,1) is h_{n-1}[0]
        ch = self._tv()
        H = channel_matrix(ch, 3, 2, layout="column").entries
        assert H[0, 1] == ch.taps[0, 2, 1]
        assert H[1, 1] == ch.taps[0, 2, 0]

    def test_row_layout_matches_propagation(self):
        ch = self._tv()
        x = np.array([1.0, -2.0, 0.5, 3.0])
        y = propagate(x, ch, n_out=4)[0]
        H = channel_matrix(ch, 3, 2).entries
        xv = np.array([x[3], x[2], x[1]])
        np.testing.assert_allclose(H @ xv, [y[3], y[2]])

    def test_banded(self):
        ch = synth_channel({"kind": "random_walk", "taps": PAPER, "sigma": 0.1, "seed": 1}, 50)
        H = channel_matrix(ch, 40, 8).entries
        i, j = np.nonzero(H)
        assert np.all((j - i >= 0) & (j - i < 5))

    def test_stacked_receivers(self):
        ch = TimeVaryingChannel.static([[1, 2], [3, 4]])
        H = channel_matrix(ch, 0, 2)
        assert H.entries.shape == (4, 3)
        np.testing.assert_array_equal(H.entries[2:], [[3, 4, 0], [0, 3, 4]])

    def test_insufficient_history(self):
        with pytest.raises(RangeError):
            channel_matrix(self._tv(), 0, 2)


class TestAmplifier:
    def test_large_alpha_identity(self):
        x = np.linspace(-1, 1, 101) * (1 + 0.5j)
        np.testing.assert_allclose(amplifier_apply(x, AmplifierModel(1e6)), x, rtol=1e-9)

    def test_boundary(self):
        with pytest.raises(ParamError):
            AmplifierModel(1.0)

    def test_peak_gain_value(self):
        amp = AmplifierModel(1.0001, reference_peak=2.0, gain="peak")
        np.testing.assert_allclose(amplifier_apply(np.array([2.0]), amp),
                                   [2.0 * np.tanh(1 / 1.0001)], rtol=1e-14)

    def test_odd_and_bounded(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(500) + 1j * rng.standard_normal(500)
        for gain in ("unit", "peak"):
            amp = AmplifierModel(1.5, gain=gain)
            np.testing.assert_allclose(amplifier_apply(-x, amp), -amplifier_apply(x, amp))
        out = amplifier_apply(x, AmplifierModel(1.5, gain="peak"))
        peak = max(np.abs(x.real).max(), np.abs(x.imag).max())
        assert np.abs(out.real).max() <= peak and np.abs(out.imag).max() <= peak


class TestSynth:
    def test_static(self):
        ch = synth_channel({"kind": "static", "taps": PAPER}, 100)
        assert ch.is_static
        np.testing.assert_array_equal(ch.at(57)[0], PAPER)

    def test_walk_zero_sigma(self):
        ch = synth_channel({"kind": "random_walk", "taps": PAPER, "sigma": 0.0}, 100)
        np.testing.assert_array_equal(ch.taps[0], np.tile(PAPER, (100, 1)))

    def test_walk_increment_variance(self):
        ch = synth_channel({"kind": "random_walk", "taps": [1, 0], "sigma": 0.01, "seed": 0},
                           10_000)
        inc = np.diff(ch.taps[0], axis=0)
        np.testing.assert_allclose(np.mean(np.abs(inc) ** 2, axis=0), 1e-4, rtol=0.05)

    def test_fade_unit_power_deterministic(self):
        spec = {"kind": "sinusoidal_fade", "taps": [1.0], "doppler": 0.01, "seed": 4}
        a = synth_channel(spec, 50_000)
        np.testing.assert_array_equal(a.taps, synth_channel(spec, 50_000).taps)
        np.testing.assert_allclose(np.mean(np.abs(a.taps) ** 2), 1.0, rtol=0.2)

    def test_unknown(self):
        with pytest.raises(ParamError):
            synth_channel({"kind": "ray"}, 10)

    def test_csv_roundtrip(self, tmp_path):
        ch = synth_channel({"kind": "random_walk", "taps": [1, 0.5j], "sigma": 0.1, "seed": 0},
                           6, K=2)
        p = tmp_path / "taps.csv"
        write_taps_csv(p, ch)
        np.testing.assert_array_equal(read_taps_csv(p).taps, ch.taps)

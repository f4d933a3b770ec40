import numpy as np
import pytest

from fieldreuse.environment import (SpectralObservation, WotanParams, average_ssl, colored_noise,
                                    wotan_u10)
from fieldreuse.errors import FrequencyError, ParamError


class TestWotan:
    def test_reference_value(self):
        res = wotan_u10(SpectralObservation(40.0, 8.0))
        np.testing.assert_allclose(res.u10, (100 + 80.94) / 52.8)
        assert round(res.u10, 4) == 3.4269
        assert res.valid

    def test_reference_frequency_unshifted(self):
        res = wotan_u10(SpectralObservation(55.5, 8.0), WotanParams(Q=-19, beta=0))
        assert res.ssl0 == 55.5

    def test_slope_and_offset(self):
        res = wotan_u10(SpectralObservation(50.0, 16.0), WotanParams(Q=-20, beta=1.5))
        np.testing.assert_allclose(res.ssl0, 50 - 20 * np.log10(0.5) + 1.5)

    def test_out_of_band(self):
        with pytest.raises(FrequencyError):
            wotan_u10(SpectralObservation(40.0, 80.0))

    def test_monotone_in_level(self):
        u = [wotan_u10(SpectralObservation(s, 8.0)).u10 for s in np.linspace(20, 70, 26)]
        assert np.all(np.diff(u) > 0)

    def test_validity_flag(self):
        assert not wotan_u10(SpectralObservation(60.0, 8.0)).valid

    def test_bad_params(self):
        with pytest.raises(ParamError):
            WotanParams(f0=0)
        with pytest.raises(ParamError):
            SpectralObservation(40.0, -1.0)


class TestSpectralLevel:
    def test_white_density(self):
        fs = 50_000.0
        x = np.random.default_rng(0).standard_normal(400_000)
        obs = average_ssl(x, fs, 8.0)
        np.testing.assert_allclose(obs.ssl, 10 * np.log10(2 / fs), atol=0.5)
        assert obs.averaging_duration == pytest.approx(8.0)

    def test_calibration_offset(self):
        x = np.random.default_rng(1).standard_normal(50_000)
        a = average_ssl(x, 50_000.0, 5.0)
        b = average_ssl(x, 50_000.0, 5.0, calibration_db=120.0)
        np.testing.assert_allclose(b.ssl - a.ssl, 120.0)

    def test_zero_signal_floor(self):
        assert average_ssl(np.zeros(4096), 50_000.0, 5.0).ssl == -300.0

    def test_above_nyquist(self):
        with pytest.raises(FrequencyError):
            average_ssl(np.zeros(4096), 10_000.0, 8.0)

    def test_window_too_long(self):
        with pytest.raises(ParamError):
            average_ssl(np.zeros(1000), 1000.0, 0.1, window=2.0)


class TestColoredNoise:
    def test_same_ssl0_across_frequencies(self):
        fs = 60_000.0
        x = colored_noise(600_000, fs, 30.0, rng=np.random.default_rng(2))
        ssl0 = [wotan_u10(average_ssl(x, fs, f, nperseg=4096)).ssl0 for f in (4.0, 8.0, 16.0)]
        np.testing.assert_allclose(ssl0, 30.0, atol=0.5)

    def test_requires_rng(self):
        with pytest.raises(ParamError):
            colored_noise(10, 1000.0, 0.0)

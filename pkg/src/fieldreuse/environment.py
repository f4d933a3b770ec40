"""Wind speed from ambient-noise spectral level (WOTAN).

The spectral level observed at frequency ``f`` is referred to ``f0`` along a
constant slope, converted to pressure and mapped linearly to the 10 m wind
speed::

    SSL0 = SSL + Q log10(f0 / f) + beta
    p0   = 10 ** (SSL0 / 20)
    U10  = (p0 + 80.94) / 52.8

The constants are applied verbatim; their units are not stated by the source
method, so ``SSL`` is taken in dB with ``p0`` in the corresponding linear
pressure unit.
"""

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import FrequencyError, ParamError

__all__ = [
    "SpectralObservation",
    "WotanParams",
    "WotanResult",
    "average_ssl",
    "wotan_u10",
    "colored_noise",
    "MAX_FREQ_KHZ",
    "VALID_U10",
]

MAX_FREQ_KHZ = 25.0
VALID_U10 = 16.0


@dataclass(frozen=True)
class SpectralObservation:
    ssl: float
    frequency: float  # kHz
    averaging_duration: float = 0.0

    def __post_init__(self):
        if not self.frequency > 0:
            raise ParamError("frequency must be positive")


@dataclass(frozen=True)
class WotanParams:
    Q: float = -19.0
    beta: float = 0.0
    f0: float = 8.0

    def __post_init__(self):
        if not self.f0 > 0:
            raise ParamError("reference frequency must be positive")


@dataclass(frozen=True)
class WotanResult:
    ssl: float
    ssl0: float
    p0: float
    u10: float
    valid: bool

    def to_dict(self):
        return {"ssl": self.ssl, "ssl0": self.ssl0, "p0": self.p0,
                "u10": self.u10, "valid": self.valid}


def average_ssl(noise, fs, f_target, window=None, calibration_db=0.0,
                nperseg=1024, floor_db=-300.0):
    """Welch-averaged spectral level at the bin nearest ``f_target``.

    Parameters
    ----------
    noise : array_like
        Real or complex samples. Complex (baseband) input uses the two-sided
        density; real input uses the one-sided density.
    fs : float
        Sample rate in Hz.
    f_target : float
        Frequency in kHz. For complex input, negative frequencies are valid.
    window : float, optional
        Seconds of data to average, from the start; default all.
    calibration_db : float
        Offset added to convert sample units to the reference pressure.
    """
    x = np.asarray(noise)
    f_hz = f_target * 1e3
    if fs <= 2 * abs(f_hz):
        raise FrequencyError(f"{f_target} kHz is above Nyquist for fs={fs} Hz")
    if window is not None:
        n = int(round(window * fs))
        if n > x.size:
            raise ParamError("averaging window longer than the recording")
        x = x[:n]
    seg = min(nperseg, x.size)
    freqs, pxx = signal.welch(x, fs=fs, nperseg=seg, return_onesided=not np.iscomplexobj(x),
                              detrend=False)
    i = int(np.argmin(np.abs(freqs - f_hz)))
    val = pxx[i]
    ssl = 10 * np.log10(val) + calibration_db if val > 0 else floor_db
    return SpectralObservation(float(max(ssl, floor_db)), float(f_target), x.size / fs)


def wotan_u10(obs, params=None):
    """Wind speed (m/s) from a spectral observation.

    Examples
    --------
    >>> round(wotan_u10(SpectralObservation(40.0, 8.0)).u10, 4)
    3.4269
    """
    params = params or WotanParams()
    if obs.frequency > MAX_FREQ_KHZ:
        raise FrequencyError(f"{obs.frequency} kHz outside the validated band (<= {MAX_FREQ_KHZ} kHz)")
    ssl0 = obs.ssl + params.Q * np.log10(params.f0 / obs.frequency) + params.beta
    p0 = 10 ** (ssl0 / 20)
    u10 = (p0 + 80.94) / 52.8
    return WotanResult(float(obs.ssl), float(ssl0), float(p0), float(u10), bool(u10 <= VALID_U10))


def colored_noise(n, fs, level_db, f0_khz=8.0, Q=-19.0, rng=None):
    """Real noise whose one-sided density follows ``level_db + Q log10(f/f0)``.

    Useful for checking that observations at different frequencies refer to
    the same ``SSL0``.
    """
    if rng is None:
        raise ParamError("an explicit rng is required")
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1 / fs)
    shape = np.zeros_like(f)
    nz = f > 0
    dens = 10 ** ((level_db + Q * np.log10(f[nz] / (f0_khz * 1e3))) / 10)
    # white unit-variance noise has one-sided density 2/fs
    shape[nz] = np.sqrt(dens * fs / 2)
    return np.fft.irfft(spec * shape, n)

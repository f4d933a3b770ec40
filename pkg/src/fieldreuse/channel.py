"""Time-varying FIR channels, noise and amplifier distortion.

Propagation model for receiver ``k``::

    y_k[n] = sum_l h_{k,n}[l] x[n - l] + w_k[n]

with ``x`` zero before the first sample.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParamError, RangeError

__all__ = [
    "TimeVaryingChannel",
    "NoiseModel",
    "AmplifierModel",
    "ChannelMatrix",
    "propagate",
    "channel_matrix",
    "amplifier_apply",
    "synth_channel",
    "snr_to_variance",
    "write_taps_csv",
    "read_taps_csv",
    "PAPER_TAPS",
]

#: Five-tap minimum-phase test channel used by the synthetic experiments.
PAPER_TAPS = np.array([1, 0.9472, 0.4586, 0.4315, 0.1497], dtype=np.complex128)


class TimeVaryingChannel:
    """Tap trajectories ``taps[k, n, l]``.

    A trajectory with a single time index is time-invariant and valid for all
    ``n``.
    """

    def __init__(self, taps):
        taps = np.asarray(taps, dtype=np.complex128)
        if taps.ndim == 1:
            taps = taps[None, None, :]
        elif taps.ndim == 2:
            taps = taps[None, :, :]
        if taps.ndim != 3 or taps.shape[2] < 1:
            raise ParamError("taps must have shape (K, N, L) with L >= 1")
        if not np.all(np.isfinite(taps)):
            raise NumericError("channel taps must be finite")
        self.taps = taps

    @classmethod
    def static(cls, h, K=1):
        h = np.atleast_2d(np.asarray(h, dtype=np.complex128))
        if h.shape[0] == 1 and K > 1:
            h = np.repeat(h, K, axis=0)
        return cls(h[:, None, :])

    @property
    def K(self):
        return self.taps.shape[0]

    @property
    def L(self):
        return self.taps.shape[2]

    @property
    def n_times(self):
        return self.taps.shape[1]

    @property
    def is_static(self):
        return self.taps.shape[1] == 1

    def at(self, n):
        """Tap vectors ``(K, L)`` at time ``n``."""
        if self.is_static:
            return self.taps[:, 0, :]
        if not 0 <= n < self.n_times:
            raise RangeError(f"time {n} outside channel span [0, {self.n_times})")
        return self.taps[:, n, :]

    def window(self, n_out):
        """Taps for times ``0..n_out-1`` as ``(K, n_out, L)``."""
        if self.is_static:
            return np.broadcast_to(self.taps, (self.K, n_out, self.L))
        if n_out > self.n_times:
            raise RangeError(f"channel spans {self.n_times} samples, {n_out} needed")
        return self.taps[:, :n_out, :]


@dataclass(frozen=True)
class NoiseModel:
    """Circular complex noise.

    ``kind="bernoulli_gaussian"`` scales the variance of each sample by
    ``impulse_variance_ratio`` with probability ``impulse_prob``.
    """

    variance: float = 0.0
    kind: str = "awgn"
    impulse_prob: float = 0.0
    impulse_variance_ratio: float = 1.0

    def __post_init__(self):
        if self.variance < 0:
            raise ParamError("noise variance must be nonnegative")
        if not 0 <= self.impulse_prob <= 1:
            raise ParamError("impulse probability must lie in [0, 1]")
        if self.kind not in ("awgn", "bernoulli_gaussian"):
            raise ParamError(f"unknown noise kind {self.kind!r}")
        if self.impulse_variance_ratio <= 0:
            raise ParamError("impulse variance ratio must be positive")

    def sample(self, shape, rng):
        if self.variance == 0:
            return np.zeros(shape, dtype=np.complex128)
        w = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        w *= np.sqrt(self.variance / 2)
        if self.kind == "bernoulli_gaussian":
            hit = rng.random(shape) < self.impulse_prob
            w[hit] *= np.sqrt(self.impulse_variance_ratio)
        return w


def snr_to_variance(snr_db, signal_power=1.0):
    """Noise variance giving ``snr_db`` for the stated signal power."""
    return signal_power * 10.0 ** (-snr_db / 10.0)


def propagate(x, ch, noise=None, rng=None, n_out=None):
    """Pass ``x`` through ``ch`` and add noise.

    Parameters
    ----------
    x : array_like
        Transmitted samples.
    ch : TimeVaryingChannel
    noise : NoiseModel, optional
    rng : numpy.random.Generator, optional
        Required when the noise variance is nonzero.
    n_out : int, optional
        Output length; defaults to the full convolution ``len(x) + L - 1``.
        Samples past that are noise only.

    Returns
    -------
    ndarray, shape (K, n_out)
    """
    x = np.asarray(x, dtype=np.complex128).ravel()
    if x.size < 1:
        raise ParamError("cannot propagate an empty sequence")
    L = ch.L
    if n_out is None:
        n_out = x.size + L - 1
    if ch.is_static:
        y = np.empty((ch.K, n_out), dtype=np.complex128)
        for k in range(ch.K):
            full = np.convolve(x, ch.taps[k, 0])
            m = min(n_out, full.size)
            y[k, :m] = full[:m]
            y[k, m:] = 0
    else:
        xp = np.concatenate([np.zeros(L - 1, dtype=np.complex128), x,
                             np.zeros(max(0, n_out - x.size), dtype=np.complex128)])
        # shifted[n, l] = x[n - l]
        idx = np.arange(n_out)[:, None] + (L - 1) - np.arange(L)[None, :]
        shifted = xp[idx]
        y = np.einsum("knl,nl->kn", ch.window(n_out), shifted)
    if noise is not None and noise.variance > 0:
        if rng is None:
            raise ParamError("a seeded rng is required for noisy propagation")
        y = y + noise.sample(y.shape, rng)
    return y


@dataclass
class ChannelMatrix:
    """Stacked convolution matrix, ``K*L_f`` rows by ``L_f + L - 1`` columns.

    Row ``k*L_f + i`` produces ``y_k[n - i]`` from the column vector
    ``[x[n], x[n-1], ..., x[n - L_f - L + 2]]``.
    """

    entries: np.ndarray
    n: int
    L_f: int
    L: int
    K: int = 1

    def column(self, j):
        return self.entries[:, j]


def channel_matrix(ch, n, L_f, layout="row"):
    """Convolution matrix of ``ch`` anchored at time ``n``.

    ``layout="row"`` (default) puts ``h_{n-i}[j-i]`` at entry ``(i, j)``, which
    is what the propagation model produces: the row for output ``y[n-i]`` uses
    the taps in force at time ``n-i``. ``layout="column"`` puts
    ``h_{n-j}[j-i]`` at ``(i, j)``, indexing time by the column. Both coincide
    on static channels.
    """
    if L_f < 1:
        raise ParamError("L_f must be at least 1")
    if layout not in ("row", "column"):
        raise ParamError(f"unknown layout {layout!r}")
    L = ch.L
    width = L_f + L - 1
    oldest = n - (L_f - 1) if layout == "row" else n - (width - 1)
    if not ch.is_static and (oldest < 0 or n >= ch.n_times):
        raise RangeError(f"taps needed for times {oldest}..{n}, "
                         f"channel spans 0..{ch.n_times - 1}")
    H = np.zeros((ch.K * L_f, width), dtype=np.complex128)
    for i in range(L_f):
        for j in range(i, i + L):
            t = n - i if layout == "row" else n - j
            H[i::L_f, j][:ch.K] = ch.at(t)[:, j - i]
    return ChannelMatrix(H, n, L_f, L, ch.K)


@dataclass(frozen=True)
class AmplifierModel:
    """Soft-clipping amplifier.

    ``gain="unit"`` gives ``alpha*P*tanh(x/(alpha*P))``, whose small-signal
    gain is one so that large ``alpha`` is distortion free. ``gain="peak"``
    gives ``P*tanh(x/(alpha*P))``, bounded by ``P``. ``P`` is
    ``reference_peak`` or, when None, the largest component magnitude of the
    input.
    """

    alpha: float
    reference_peak: float = None
    gain: str = "unit"

    def __post_init__(self):
        if not self.alpha > 1:
            raise ParamError(f"alpha must exceed 1, got {self.alpha}")
        if self.gain not in ("unit", "peak"):
            raise ParamError(f"unknown gain mode {self.gain!r}")


def amplifier_apply(x, amp):
    """Apply the tanh nonlinearity separately to real and imaginary parts."""
    if not isinstance(amp, AmplifierModel):
        amp = AmplifierModel(float(amp))
    x = np.asarray(x)
    peak = amp.reference_peak
    if peak is None:
        peak = max(np.max(np.abs(x.real)), np.max(np.abs(np.imag(x)))) if x.size else 1.0
    if peak <= 0:
        return np.array(x, dtype=np.result_type(x, np.float64), copy=True)
    s = amp.alpha * peak
    out_scale = s if amp.gain == "unit" else peak
    re = out_scale * np.tanh(x.real / s)
    if np.iscomplexobj(x):
        return re + 1j * out_scale * np.tanh(x.imag / s)
    return re


def _fade_process(n, doppler, n_paths, rng):
    """Unit-power sum-of-sinusoids fading process of length ``n``."""
    theta = rng.uniform(0, 2 * np.pi, n_paths)
    phi = rng.uniform(0, 2 * np.pi, n_paths)
    freqs = doppler * np.cos(theta)
    t = np.arange(n)
    return np.exp(1j * (2 * np.pi * np.outer(t, freqs) + phi)).sum(axis=1) / np.sqrt(n_paths)


def synth_channel(spec, length, K=1):
    """Synthesize a channel from a small dict description.

    Parameters
    ----------
    spec : dict
        ``{"kind": "static", "taps": [...]}``,
        ``{"kind": "random_walk", "taps": [...], "sigma": s, "seed": i}`` or
        ``{"kind": "sinusoidal_fade", "taps": [...], "doppler": fd,
        "n_paths": 16, "seed": i}``. ``doppler`` is in cycles per sample
        and may be a scalar or one value per tap. ``taps`` may be one vector
        or one vector per receiver.
    length : int
        Number of time indices.
    K : int
        Number of receivers.
    """
    kind = spec.get("kind", "static")
    taps = np.atleast_2d(np.asarray(spec.get("taps", [1.0]), dtype=np.complex128))
    if taps.shape[0] == 1:
        taps = np.repeat(taps, K, axis=0)
    if taps.shape[0] != K:
        raise ParamError("taps rows must be 1 or K")
    L = taps.shape[1]
    if kind == "static":
        return TimeVaryingChannel(taps[:, None, :])
    rng = np.random.default_rng(spec.get("seed", 0))
    if kind == "random_walk":
        sigma = float(spec.get("sigma", 0.0))
        xi = (rng.standard_normal((K, length, L))
              + 1j * rng.standard_normal((K, length, L))) * np.sqrt(0.5)
        xi[:, 0, :] = 0
        h = taps[:, None, :] + sigma * np.cumsum(xi, axis=1)
        return TimeVaryingChannel(h)
    if kind == "sinusoidal_fade":
        fd = np.broadcast_to(np.asarray(spec.get("doppler", 1e-3), dtype=float), (L,))
        n_paths = int(spec.get("n_paths", 16))
        h = np.empty((K, length, L), dtype=np.complex128)
        for k in range(K):
            for l in range(L):
                h[k, :, l] = taps[k, l] * _fade_process(length, fd[l], n_paths, rng)
        return TimeVaryingChannel(h)
    raise ParamError(f"unknown channel kind {kind!r}")


def write_taps_csv(path, taps):
    """Write a ``(K, N, L)`` tap array as rows ``n,k,l,re,im``."""
    taps = taps.taps if isinstance(taps, TimeVaryingChannel) else np.asarray(taps)
    K, N, L = taps.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "k", "l", "re", "im"])
        for n in range(N):
            for k in range(K):
                for l in range(L):
                    v = taps[k, n, l]
                    w.writerow([n, k, l, repr(float(v.real)), repr(float(v.imag))])


def read_taps_csv(path):
    """Read a tap CSV back into a :class:`TimeVaryingChannel`."""
    rows = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding=None)
    rows = np.atleast_1d(rows)
    n = rows["n"].astype(int)
    k = rows["k"].astype(int)
    l = rows["l"].astype(int)
    taps = np.zeros((k.max() + 1, n.max() + 1, l.max() + 1), dtype=np.complex128)
    taps[k, n, l] = rows["re"] + 1j * rows["im"]
    return TimeVaryingChannel(taps)

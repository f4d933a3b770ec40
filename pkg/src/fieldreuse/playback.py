"""Direct channel playback with residual prediction error (RPE) augmentation.

A probe ``g`` with known symbols is used to track the channel. The a-priori
prediction ``y_hat[n|n-1]`` uses the taps estimated up to ``n-1``, and the
residual ``e[n|n-1] = y[n] - y_hat[n|n-1]`` captures both ambient noise and
the part of the channel the estimator could not follow. Replaying a new
signal through the estimated taps alone misses that second part; adding
synthetic noise with the RPE's space-time correlation restores it.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import core
from .channel import NoiseModel
from .errors import (InsufficientSamples, LengthError, ModelError, ParamError,
                     RangeError, SingularFit)

__all__ = [
    "TvirEstimate",
    "RpeModel",
    "PlaybackConfig",
    "estimate_tvir",
    "decompose",
    "compute_rpe",
    "fit_rpe_model",
    "gen_rpe_noise",
    "replay",
    "power_trace",
    "write_rpe_csv",
    "read_rpe_csv",
]


@dataclass
class TvirEstimate:
    """Tracked taps ``taps[k, n, l]`` (estimate after observing ``y[n]``).

    Taps follow the propagation convention ``y[n] = sum_l h[n, l] g[n-l]``.
    """

    taps: np.ndarray
    L: int
    window: tuple

    @property
    def K(self):
        return self.taps.shape[0]

    @property
    def n_times(self):
        return self.taps.shape[1]

    def prior_taps(self):
        """Taps available when predicting time ``n``: the estimate at ``n-1``."""
        prior = np.zeros_like(self.taps)
        prior[:, 1:] = self.taps[:, :-1]
        return prior


def _regressor(g, L):
    g = np.asarray(g, dtype=np.complex128)
    gp = np.concatenate([np.zeros(L - 1, dtype=np.complex128), g])
    idx = np.arange(g.size)[:, None] + (L - 1) - np.arange(L)[None, :]
    return gp[idx]  # U[n, l] = g[n - l]


def _check_exciting(U, L, tol=1e-10):
    steady = U[L - 1:]
    if steady.shape[0] < L:
        raise InsufficientSamples("probe shorter than the delay spread")
    s = np.linalg.svd(steady, compute_uv=False)
    if s[-1] <= tol * s[0]:
        raise SingularFit("probe is not persistently exciting for this delay spread")


def _apriori(U, taps):
    prior = np.zeros_like(taps)
    prior[:, 1:] = taps[:, :-1]
    return np.einsum("knl,nl->kn", prior, U)


def estimate_tvir(y, g, L, window=("exponential", 0.999), delta=1e-2):
    """Least-squares tracking of a FIR channel from a known probe.

    Parameters
    ----------
    y : array_like, shape (K, N) or (N,)
        Received samples aligned with the probe.
    g : array_like, shape (N,)
        Probe symbols.
    L : int
        Delay spread in samples.
    window : tuple
        ``("exponential", lam)`` for recursive least squares with forgetting
        factor ``lam``, or ``("sliding", M)`` for a rectangular window of the
        last ``M`` samples.
    delta : float
        Initial diagonal loading of the recursive form.
    """
    y = np.asarray(y, dtype=np.complex128)
    if y.ndim == 1:
        y = y[None, :]
    g = np.asarray(g, dtype=np.complex128).ravel()
    if y.shape[1] != g.size:
        raise LengthError(f"y has {y.shape[1]} samples, probe has {g.size}")
    if y.shape[1] <= L:
        raise InsufficientSamples("record too short for the delay spread")
    U = _regressor(g, L)
    _check_exciting(U, L)
    kind, par = window
    if kind == "exponential":
        if not 0 < par <= 1:
            raise ParamError("forgetting factor must lie in (0, 1]")
        taps, _ = core.rls_track(y, g, L, float(par), float(delta))
    elif kind == "sliding":
        M = int(par)
        if M < L:
            raise ParamError("sliding window must be at least L samples")
        taps = _sliding_ls(y, U, M)
    else:
        raise ParamError(f"unknown window {kind!r}")
    return TvirEstimate(taps, L, (kind, par))


def _sliding_ls(y, U, M):
    N, L = U.shape
    outer = U.conj()[:, :, None] * U[:, None, :]  # conj(u) u^T
    cR = np.concatenate([np.zeros((1, L, L), dtype=np.complex128), np.cumsum(outer, axis=0)])
    n = np.arange(1, N + 1)
    lo = np.maximum(0, n - M)
    R = cR[n] - cR[lo]
    taps = np.empty((y.shape[0], N, L), dtype=np.complex128)
    Rinv = np.linalg.pinv(R, hermitian=True)
    for k in range(y.shape[0]):
        cross = U.conj() * y[k][:, None]
        cP = np.concatenate([np.zeros((1, L), dtype=np.complex128), np.cumsum(cross, axis=0)])
        p = cP[n] - cP[lo]
        taps[k] = np.einsum("nij,nj->ni", Rinv, p)
    return taps


def _exact_split(y, yhat):
    """Return ``(yhat2, e)`` with ``yhat2 + e == y`` in floating point.

    Equality is exact whenever ``y`` is on a grid at least as coarse as those
    of ``yhat2`` and ``e``. Under heavy cancellation (``|y|`` well below both
    parts) no pair of doubles near the inputs sums to ``y``; the result is
    then within one ulp of the larger part.
    """
    e = y - yhat
    yh = y - e
    for _ in range(8):
        bad = yh + e != y
        if not np.any(bad):
            break
        step = np.where(y[bad] > (yh + e)[bad], np.inf, -np.inf)
        yh[bad] = np.nextafter(yh[bad], step)
    bad = yh + e != y
    if np.any(bad):
        # Sterbenz-exact residual as a last resort
        e[bad] = y[bad] - yh[bad]
    return yh, e


def decompose(y, g, tvir):
    """Split ``y`` into the a-priori prediction and the RPE.

    The returned pair satisfies ``y_hat + e == y`` bit for bit except where
    ``y`` is much smaller than both parts; see :func:`_exact_split`.
    """
    y = np.asarray(y, dtype=np.complex128)
    if y.ndim == 1:
        y = y[None, :]
    g = np.asarray(g, dtype=np.complex128).ravel()
    if y.shape != (tvir.K, tvir.n_times) or g.size != tvir.n_times:
        raise RangeError("received samples, probe and estimate are not aligned")
    yhat = _apriori(_regressor(g, tvir.L), tvir.taps)
    re_h, re_e = _exact_split(y.real.copy(), yhat.real.copy())
    im_h, im_e = _exact_split(y.imag.copy(), yhat.imag.copy())
    return re_h + 1j * im_h, re_e + 1j * im_e


def compute_rpe(y, g, tvir):
    """Residual prediction error ``e[n|n-1]`` of shape (K, N)."""
    return decompose(y, g, tvir)[1]


@dataclass
class RpeModel:
    """Space-time correlation ``R[m] = E e[n] e[n-m]^H`` for lags ``0..M``."""

    R: np.ndarray
    sigma_g2: float = 1.0
    n_samples: int = 0

    @property
    def K(self):
        return self.R.shape[1]

    @property
    def max_lag(self):
        return self.R.shape[0] - 1

    def lag(self, m):
        return self.R[m] if m >= 0 else self.R[-m].conj().T

    def block_toeplitz(self, n_blocks=None):
        """Covariance of ``[x[n], x[n-1], ..., x[n-B+1]]``; block ``(i, j)`` is ``R[j-i]``."""
        B = n_blocks or self.max_lag + 1
        K = self.K
        T = np.empty((B * K, B * K), dtype=np.complex128)
        for i in range(B):
            for j in range(B):
                T[i * K:(i + 1) * K, j * K:(j + 1) * K] = self.lag(j - i)
        return T

    def to_dict(self):
        return {
            "sigma_g2": self.sigma_g2,
            "n_samples": self.n_samples,
            "lags": [{"m": m,
                      "re": self.R[m].real.tolist(),
                      "im": self.R[m].imag.tolist()} for m in range(self.R.shape[0])],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, dct):
        lags = sorted(dct["lags"], key=lambda d: d["m"])
        R = np.array([np.array(d["re"]) + 1j * np.array(d["im"]) for d in lags])
        return cls(R, float(dct.get("sigma_g2", 1.0)), int(dct.get("n_samples", 0)))


def _project_psd(R, n_iter=20):
    """Nearest-ish PSD block-Toeplitz correlation by alternating projection."""
    M1, K, _ = R.shape
    model = RpeModel(R.copy())
    for _ in range(n_iter):
        T = model.block_toeplitz()
        vals, vecs = np.linalg.eigh((T + T.conj().T) / 2)
        if vals.min() >= -1e-12 * max(vals.max(), 1e-300):
            break
        T = (vecs * np.maximum(vals, 0)) @ vecs.conj().T
        newR = np.zeros_like(R)
        for m in range(M1):
            acc = np.zeros((K, K), dtype=np.complex128)
            cnt = 0
            for i in range(M1 - m):
                j = i + m
                acc += T[i * K:(i + 1) * K, j * K:(j + 1) * K]
                cnt += 1
            newR[m] = acc / cnt
        newR[0] = (newR[0] + newR[0].conj().T) / 2
        model = RpeModel(newR)
    return model.R


def fit_rpe_model(rpe, max_lag=8, sigma_g2=1.0, min_factor=10):
    """Estimate ``R[m]`` from an RPE series.

    Sample averages over the available pairs, Hermitian symmetrisation of
    ``R[0]``, then projection onto positive semidefinite block-Toeplitz
    matrices when needed.
    """
    e = np.asarray(rpe, dtype=np.complex128)
    if e.ndim == 1:
        e = e[None, :]
    K, N = e.shape
    if max_lag < 0:
        raise ParamError("max_lag must be nonnegative")
    if N < min_factor * (max_lag + 1):
        raise InsufficientSamples(f"{N} samples too few for {max_lag} lags")
    R = np.empty((max_lag + 1, K, K), dtype=np.complex128)
    for m in range(max_lag + 1):
        R[m] = e[:, m:] @ e[:, :N - m].conj().T / (N - m)
    R[0] = (R[0] + R[0].conj().T) / 2
    R = _project_psd(R)
    return RpeModel(R, float(sigma_g2), N)


def _psd_sqrt(A):
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh((A + A.conj().T) / 2)
        if vals.min() < -1e-8 * max(vals.max(), 1e-300):
            raise ModelError("covariance is not positive semidefinite")
        return vecs * np.sqrt(np.maximum(vals, 0))


def _var_fit(model):
    """Yule-Walker VAR(M) coefficients and innovation covariance."""
    M, K = model.max_lag, model.K
    if M == 0:
        return np.zeros((0, K, K), dtype=np.complex128), model.R[0]
    T = model.block_toeplitz(M)
    rhs = np.concatenate([model.R[m] for m in range(1, M + 1)], axis=1)  # K x MK
    # A T = rhs  ->  T^H A^H = rhs^H, T Hermitian
    try:
        cf = linalg.cho_factor(T, lower=True)
        AH = linalg.cho_solve(cf, rhs.conj().T)
    except linalg.LinAlgError:
        AH = np.linalg.lstsq(T, rhs.conj().T, rcond=None)[0]
    A = AH.conj().T.reshape(K, M, K).transpose(1, 0, 2)
    S = model.R[0].copy()
    for i in range(M):
        S -= A[i] @ model.R[i + 1].conj().T
    S = (S + S.conj().T) / 2
    return A, S


def gen_rpe_noise(model, length, sigma_t2=None, rng=None):
    """Stationary complex Gaussian series with correlation ``(s~/s) R[m]``.

    A vector autoregression of order ``M`` is fitted to the model by the
    Yule-Walker equations, so lags ``0..M`` are reproduced exactly in
    expectation. The first ``M`` samples are drawn from the stationary joint
    law, so no burn-in is needed.
    """
    if rng is None:
        raise ParamError("an explicit rng is required")
    if length <= model.max_lag:
        raise ParamError("length must exceed the model's maximum lag")
    scale = 1.0 if sigma_t2 is None else sigma_t2 / model.sigma_g2
    if scale < 0:
        raise ParamError("test signal variance must be positive")
    K, M = model.K, model.max_lag
    A, S = _var_fit(model)
    Ls = _psd_sqrt(S)
    z = (rng.standard_normal((length, K)) + 1j * rng.standard_normal((length, K))) / np.sqrt(2)
    x = np.zeros((length, K), dtype=np.complex128)
    if M:
        T = model.block_toeplitz(M)
        init = _psd_sqrt(T) @ ((rng.standard_normal(M * K) + 1j * rng.standard_normal(M * K)) / np.sqrt(2))
        # init stacks [x[M-1], x[M-2], ..., x[0]]
        x[:M] = init.reshape(M, K)[::-1]
    innov = z @ Ls.T
    Aflat = np.concatenate(list(A), axis=1) if M else None  # K x MK
    for n in range(M, length):
        x[n] = Aflat @ x[n - M:n][::-1].ravel() + innov[n]
    if M == 0:
        x = innov
    return np.sqrt(scale) * x.T


@dataclass(frozen=True)
class PlaybackConfig:
    test_variance: float = 1.0
    rpe: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.test_variance > 0:
            raise ParamError("test signal variance must be positive")


def replay(g_test, tvir, rpe_model=None, ambient=None, cfg=None, rng=None):
    """Simulated reception of ``g_test`` over the estimated channel.

    ``y~[n] = sum_l h_hat[n-1, l] g~[n-l] + e~[n] + v~[n]``, with the RPE term
    present when ``cfg.rpe`` is true and a model is supplied. ``ambient``
    is a :class:`NoiseModel` or an array of recorded samples.
    """
    cfg = cfg or PlaybackConfig()
    g = np.asarray(g_test, dtype=np.complex128).ravel()
    N = g.size
    if N > tvir.n_times:
        raise RangeError(f"estimate spans {tvir.n_times} samples, test signal {N}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    taps = tvir.taps[:, :N]
    out = _apriori(_regressor(g, tvir.L), taps)
    if cfg.rpe and rpe_model is not None:
        out = out + gen_rpe_noise(rpe_model, N, cfg.test_variance, rng)
    if isinstance(ambient, NoiseModel):
        out = out + ambient.sample(out.shape, rng)
    elif ambient is not None:
        v = np.asarray(ambient, dtype=np.complex128)
        v = v[None, :] if v.ndim == 1 else v
        if v.shape[1] < N:
            raise RangeError("recorded ambient noise shorter than the test signal")
        out = out + v[:, :N]
    return out


def power_trace(series, window):
    """Trailing-window mean power (averaged over channels) in dB."""
    if window < 1:
        raise ParamError("window must be at least 1")
    x = np.asarray(series)
    p = np.abs(x) ** 2
    if p.ndim == 2:
        p = p.mean(axis=0)
    c = np.concatenate([[0.0], np.cumsum(p)])
    n = np.arange(1, p.size + 1)
    lo = np.maximum(0, n - window)
    with np.errstate(divide="ignore"):
        return 10 * np.log10((c[n] - c[lo]) / (n - lo))


def write_rpe_csv(path, rpe):
    e = np.atleast_2d(rpe)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "k", "re", "im"])
        for n in range(e.shape[1]):
            for k in range(e.shape[0]):
                w.writerow([n, k, repr(float(e[k, n].real)), repr(float(e[k, n].imag))])


def read_rpe_csv(path):
    rows = np.atleast_1d(np.genfromtxt(path, delimiter=",", names=True))
    n = rows["n"].astype(int)
    k = rows["k"].astype(int)
    e = np.zeros((k.max() + 1, n.max() + 1), dtype=np.complex128)
    e[k, n] = rows["re"] + 1j * rows["im"]
    return e

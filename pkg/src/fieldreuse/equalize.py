"""Decision feedback equalizers with optional constellation dither.

The feedforward filter acts on the received samples, which always carry the
physically transmitted symbols ``g``. The equalizer output is therefore an
estimate of ``g`` from which the dither is subtracted before slicing:

    g_hat[t] = q_f^H y_vec(t + n0) - q_b^H fb(t)
    f_hat[t] = g_hat[t] - m[t]

``y_vec(n)`` stacks ``[y_k[n], ..., y_k[n - L_f + 1]]`` over receivers and
``fb(t)`` holds the ``L_b`` previous decisions with the dither added back,
i.e. past symbols in the ``g`` domain.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import core
from .channel import ChannelMatrix
from .errors import LengthError, NumericError, ParamError, SingularChannel
from .modem import DitherSequence, SymbolSequence

__all__ = [
    "DfeWeights",
    "AdaptiveConfig",
    "EqualizerTrace",
    "design_zf",
    "design_mmse",
    "run_dfe",
    "run_lms_dfe",
    "run_rls_dfe",
    "soft_decision_snr",
    "windowed_mse_db",
]

SNR_CLIP_DB = 60.0


@dataclass
class DfeWeights:
    """Feedforward ``q_f`` (K, L_f), feedback ``q_b`` (L_b,), delay ``n0``."""

    q_f: np.ndarray
    q_b: np.ndarray
    n0: int

    def __post_init__(self):
        self.q_f = np.atleast_2d(np.asarray(self.q_f, dtype=np.complex128))
        self.q_b = np.asarray(self.q_b, dtype=np.complex128).ravel()
        if self.q_f.shape[1] < 1:
            raise ParamError("L_f must be at least 1")
        if self.n0 < 0:
            raise ParamError("n0 must be nonnegative")

    @property
    def L_f(self):
        return self.q_f.shape[1]

    @property
    def L_b(self):
        return self.q_b.size

    @property
    def K(self):
        return self.q_f.shape[0]

    @classmethod
    def zeros(cls, L_f, L_b, n0, K=1):
        return cls(np.zeros((K, L_f)), np.zeros(L_b), n0)

    def to_dict(self):
        return {
            "n0": int(self.n0),
            "q_f": [[[float(v.real), float(v.imag)] for v in row] for row in self.q_f],
            "q_b": [[float(v.real), float(v.imag)] for v in self.q_b],
        }


@dataclass(frozen=True)
class AdaptiveConfig:
    """Adaptive DFE settings.

    ``pll`` is ``"off"``, ``"first_order"`` (uses ``pll_gains[0]``) or
    ``"second_order"`` (proportional and integral gains).
    """

    algorithm: str = "lms"
    mu: float = 0.001
    lam: float = 0.999
    delta: float = 1e-2
    training_length: int = 3000
    L_f: int = 20
    L_b: int = 4
    n0: int = 19
    pll: str = "off"
    pll_gains: tuple = (0.01, 0.0)

    def __post_init__(self):
        if self.algorithm not in ("lms", "rls"):
            raise ParamError(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm == "lms" and self.mu < 0:
            raise ParamError("LMS step must be nonnegative")
        if not 0 < self.lam <= 1:
            raise ParamError("forgetting factor must lie in (0, 1]")
        if self.pll not in ("off", "first_order", "second_order"):
            raise ParamError(f"unknown PLL mode {self.pll!r}")

    def loop_gains(self):
        if self.pll == "off":
            return 0.0, 0.0
        if self.pll == "first_order":
            return float(self.pll_gains[0]), 0.0
        return float(self.pll_gains[0]), float(self.pll_gains[1])


def windowed_mse_db(err_power, window):
    """Trailing-window mean of ``err_power`` in dB (shorter at the start)."""
    p = np.asarray(err_power, dtype=float)
    if window < 1:
        raise ParamError("window must be at least 1")
    c = np.concatenate([[0.0], np.cumsum(p)])
    n = np.arange(1, p.size + 1)
    lo = np.maximum(0, n - window)
    mean = (c[n] - c[lo]) / (n - lo)
    with np.errstate(divide="ignore"):
        return 10 * np.log10(mean)


@dataclass
class EqualizerTrace:
    """Per-symbol record of an equalizer run."""

    soft: np.ndarray
    decisions: np.ndarray
    err: np.ndarray
    c_f: object
    weights: DfeWeights = None
    phase: np.ndarray = None
    window: int = 200
    diverged_at: int = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.soft.size

    @property
    def decided_symbols(self):
        return self.c_f.points[self.decisions]

    @property
    def diverged(self):
        return self.diverged_at is not None

    @property
    def mse_curve(self):
        return windowed_mse_db(np.abs(self.err) ** 2, self.window)

    def mse_vs_truth(self, f_truth, window=None):
        """Windowed ``|f - f_hat|^2`` in dB against known symbols."""
        f = f_truth.symbols if isinstance(f_truth, SymbolSequence) else np.asarray(f_truth)
        return windowed_mse_db(np.abs(f[:len(self)] - self.soft) ** 2, window or self.window)

    def to_csv(self, path):
        dec = self.decided_symbols
        mse = self.mse_curve
        ph = self.phase[0] if self.phase is not None else np.zeros(len(self))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "re_soft", "im_soft", "re_dec", "im_dec",
                        "err_power", "mse_db", "phase"])
            for n in range(len(self)):
                w.writerow([n, repr(float(self.soft[n].real)), repr(float(self.soft[n].imag)),
                            repr(float(dec[n].real)), repr(float(dec[n].imag)),
                            repr(float(abs(self.err[n]) ** 2)), repr(float(mse[n])),
                            repr(float(ph[n]))])


def _split_columns(H, L_b, n0):
    C = H.shape[1]
    if not 0 <= n0 < C:
        raise ParamError(f"n0={n0} outside [0, {C})")
    fbcols = set(range(n0 + 1, min(C, n0 + 1 + L_b)))
    keep = [j for j in range(C) if j not in fbcols]
    return keep, keep.index(n0)


def _feedback_taps(q_f, H, L_b, n0):
    r = q_f.conj() @ H
    q_b = np.zeros(L_b, dtype=np.complex128)
    for i in range(L_b):
        j = n0 + 1 + i
        if j < r.size:
            q_b[i] = np.conj(r[j])
    return q_b


def _entries(H):
    return H.entries if isinstance(H, ChannelMatrix) else np.asarray(H, dtype=np.complex128)


def _reshape_qf(q, H):
    K = H.K if isinstance(H, ChannelMatrix) else 1
    return q.reshape(K, -1)


def design_zf(H, L_b, n0):
    """Zero-forcing DFE for a known channel matrix.

    The feedforward filter zeroes every column of ``q_f^H H`` except ``n0``
    and the ``L_b`` columns after it, which the feedback filter cancels.
    When the reduced system is not square, the least-squares (or
    minimum-norm) solution is returned.
    """
    A = _entries(H)
    keep, pos = _split_columns(A, L_b, n0)
    HS = A[:, keep]
    if np.linalg.matrix_rank(HS) < min(HS.shape):
        raise SingularChannel("channel matrix is rank deficient for this n0")
    e = np.zeros(len(keep), dtype=np.complex128)
    e[pos] = 1.0
    if HS.shape[0] == HS.shape[1]:
        q = np.linalg.solve(HS.conj().T, e)
    else:
        q = np.linalg.lstsq(HS.conj().T, e, rcond=None)[0]
    return DfeWeights(_reshape_qf(q, H), _feedback_taps(q, A, L_b, n0), n0)


def design_mmse(H, noise_variance, signal_variance=1.0, L_b=0, n0=0):
    """MMSE DFE under the correct-past-decision assumption.

    ``q_f = (H_S H_S^H + (s_w/s_g) I)^{-1} h_{n0}`` where ``H_S`` drops the
    feedback columns, and ``q_b`` cancels the remaining postcursors. With
    zero noise this reduces to :func:`design_zf`.
    """
    if noise_variance < 0 or signal_variance <= 0:
        raise ParamError("need noise_variance >= 0 and signal_variance > 0")
    if noise_variance == 0:
        return design_zf(H, L_b, n0)
    A = _entries(H)
    keep, _ = _split_columns(A, L_b, n0)
    HS = A[:, keep]
    R = HS @ HS.conj().T + (noise_variance / signal_variance) * np.eye(A.shape[0])
    q = np.linalg.solve(R, A[:, n0])
    return DfeWeights(_reshape_qf(q, H), _feedback_taps(q, A, L_b, n0), n0)


def _as_2d(y):
    y = np.asarray(y, dtype=np.complex128)
    return y[None, :] if y.ndim == 1 else y


def _dither_values(dither, n):
    if dither is None:
        return np.zeros(n, dtype=np.complex128)
    vals = dither.values if isinstance(dither, DitherSequence) else np.asarray(dither, dtype=np.complex128)
    if vals.size < n:
        raise LengthError(f"dither has {vals.size} values, {n} needed")
    return np.ascontiguousarray(vals[:n])


def _training_values(training, n_max=None):
    if training is None:
        return np.zeros(0, dtype=np.complex128)
    vals = training.symbols if isinstance(training, SymbolSequence) else np.asarray(training, dtype=np.complex128)
    if n_max is not None:
        vals = vals[:n_max]
    return np.ascontiguousarray(vals, dtype=np.complex128)


def _n_symbols(y, n0, dither, n_symbols):
    if n_symbols is not None:
        return int(n_symbols)
    if dither is not None:
        return len(dither)
    return y.shape[1] - n0


def _detect_divergence(err, start, window, threshold_db):
    """First index after ``start`` where the windowed MSE exceeds the threshold
    for a full window; None when it never does."""
    if err.size <= start + window:
        return None
    with np.errstate(over="ignore", invalid="ignore"):
        mse = windowed_mse_db(np.abs(err) ** 2, window)
    # a non-finite MSE counts as diverged
    bad = ~(mse[start + window:] <= threshold_db)
    if not np.any(bad):
        return None
    run = np.convolve(bad.astype(int), np.ones(window, dtype=int), "valid")
    hits = np.nonzero(run == window)[0]
    return int(start + window + hits[0]) if hits.size else None


def run_dfe(y, w, c_g, dither=None, training=None, c_f=None, n_symbols=None,
            window=200):
    """Fixed-weight DFE.

    Parameters
    ----------
    y : array_like, shape (K, Ny) or (Ny,)
    w : DfeWeights
    c_g : Constellation
        Transmitted constellation; used for slicing when no dither is given.
    dither : DitherSequence or array_like, optional
    training : SymbolSequence or array_like, optional
        Known virtual symbols used as feedback instead of decisions.
    c_f : Constellation, optional
        Virtual constellation; defaults to ``c_g``.
    """
    y = _as_2d(y)
    if y.shape[0] != w.K:
        raise LengthError(f"weights expect {w.K} channels, y has {y.shape[0]}")
    c_f = c_f or c_g
    n = _n_symbols(y, w.n0, dither, n_symbols)
    m = _dither_values(dither, n)
    tr = _training_values(training, n)
    fhat, dec, err, _, _ = core.dfe_run(y, w.q_f, w.q_b, w.n0, n, m, c_f.points, tr, 0.0)
    return EqualizerTrace(fhat, dec, err, c_f, weights=w, window=window)


def run_lms_dfe(y, cfg, init=None, c_g=None, dither=None, training=None, c_f=None,
                n_symbols=None, window=200, diverge_db=3.0):
    """LMS-adapted DFE; the error is formed after removing the dither."""
    y = _as_2d(y)
    if init is None:
        init = DfeWeights.zeros(cfg.L_f, cfg.L_b, cfg.n0, K=y.shape[0])
    if y.shape[0] != init.K:
        raise LengthError(f"weights expect {init.K} channels, y has {y.shape[0]}")
    c_f = c_f or c_g
    n = _n_symbols(y, init.n0, dither, n_symbols)
    m = _dither_values(dither, n)
    tr = _training_values(training, min(n, cfg.training_length))
    fhat, dec, err, qf, qb = core.dfe_run(y, init.q_f, init.q_b, init.n0, n, m,
                                          c_f.points, tr, float(cfg.mu))
    div = _detect_divergence(err, tr.size, window, diverge_db)
    return EqualizerTrace(fhat, dec, err, c_f, weights=DfeWeights(qf, qb, init.n0),
                          window=window, diverged_at=div,
                          meta={"algorithm": "lms", "mu": cfg.mu})


def run_rls_dfe(y, cfg, c_g=None, dither=None, training=None, c_f=None,
                n_symbols=None, window=200, diverge_db=3.0):
    """Multichannel exponentially weighted RLS DFE with per-channel PLL."""
    y = _as_2d(y)
    c_f = c_f or c_g
    n = _n_symbols(y, cfg.n0, dither, n_symbols)
    m = _dither_values(dither, n)
    tr = _training_values(training, min(n, cfg.training_length))
    k1, k2 = cfg.loop_gains()
    fhat, dec, err, phase, wv, ok = core.rls_dfe(
        y, cfg.L_f, cfg.L_b, cfg.n0, n, float(cfg.lam), float(cfg.delta),
        m, c_f.points, tr, k1, k2)
    if not ok:
        bad = int(np.argmax(np.isnan(fhat)))
        raise NumericError(f"RLS inverse correlation lost positivity at symbol {bad}")
    K = y.shape[0]
    wts = DfeWeights(wv[:K * cfg.L_f].reshape(K, cfg.L_f), wv[K * cfg.L_f:], cfg.n0)
    div = _detect_divergence(err, tr.size, window, diverge_db)
    return EqualizerTrace(fhat, dec, err, c_f, weights=wts, phase=phase,
                          window=window, diverged_at=div,
                          meta={"algorithm": "rls", "lam": cfg.lam})


def soft_decision_snr(trace, window):
    """Slicer-output SNR per non-overlapping window, clipped at +60 dB."""
    if len(trace) == 0:
        raise LengthError("empty trace")
    if window < 1:
        raise ParamError("window must be at least 1")
    d = trace.decided_symbols
    e = trace.soft - d
    nb = len(trace) // window
    if nb == 0:
        nb, window = 1, len(trace)
    sig = np.mean(np.abs(d[:nb * window].reshape(nb, window)) ** 2, axis=1)
    noise = np.mean(np.abs(e[:nb * window].reshape(nb, window)) ** 2, axis=1)
    with np.errstate(divide="ignore"):
        snr = 10 * np.log10(sig / noise)
    return np.minimum(snr, SNR_CLIP_DB)

"""How faithfully does a dithered replay mimic a direct transmission?

Under correct past decisions the dithered output differs from the output a
direct transmission of ``f`` would have produced by a filtered copy of the
dither::

    f_hat[n] - f_hat_o[n] = sum_j d_j m[n - j]

where ``d = q_f^H H - e_{n0} - (feedback taps on columns n0+1..n0+L_b)`` is
the residual response of the whole equalizer. Everything in this module is
built on that vector.
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .channel import ChannelMatrix
from .errors import (DegenerateDistribution, InsufficientSamples, LengthError,
                     ParamError)
from .modem import SymbolSequence

__all__ = [
    "ConditionalMoments",
    "residual_response",
    "msd_multiplier",
    "msd_closed_form",
    "msd_nonlinear",
    "conditional_moments",
    "kl_objective",
    "gaussian_kl",
    "empirical_divergence",
    "gaussian_approx_diagnostic",
]


def _H(H):
    return H.entries if isinstance(H, ChannelMatrix) else np.asarray(H, dtype=np.complex128)


def _check(w, A):
    if w.q_f.size != A.shape[0]:
        raise LengthError(f"q_f has {w.q_f.size} taps, H has {A.shape[0]} rows")
    if not 0 <= w.n0 < A.shape[1]:
        raise LengthError(f"n0={w.n0} outside the {A.shape[1]} columns of H")


def residual_response(w, H):
    """Row ``r = q_f^H H`` and deviation ``d`` from the ideal response."""
    A = _H(H)
    _check(w, A)
    r = w.q_f.ravel().conj() @ A
    d = r.copy()
    d[w.n0] -= 1.0
    for i in range(w.L_b):
        j = w.n0 + 1 + i
        if j < d.size:
            d[j] -= np.conj(w.q_b[i])
    return r, d


def msd_multiplier(w, H):
    """``||d||^2``: the closed-form MSD per unit dither power."""
    _, d = residual_response(w, H)
    return float(np.sum(np.abs(d) ** 2))


def msd_closed_form(w, H, dither_power):
    """Mean squared deviation ``E|f_hat - f_hat_o|^2`` for white dither.

    Expanded, the multiplier of ``E|m|^2`` reads
    ``q_f^H H H^H q_f + q_b^H q_b + 1 - 2 Re{q_f^H H_fb q_b + q_f^H h_{n0}}``
    with ``H_fb`` the ``L_b`` columns after ``n0``; it equals ``||d||^2`` and
    is therefore never negative.

    Examples
    --------
    >>> from fieldreuse.equalize import DfeWeights
    >>> msd_closed_form(DfeWeights([[1.0]], [], 0), np.eye(1), 0.5)
    0.0
    """
    if dither_power < 0:
        raise ParamError("dither power must be nonnegative")
    return float(dither_power) * msd_multiplier(w, H)


def _quadratic_and_linear(w, H):
    r, _ = residual_response(w, H)
    quad = float(np.sum(np.abs(r) ** 2) + np.sum(np.abs(w.q_b) ** 2))
    lin = r[w.n0]
    for i in range(w.L_b):
        j = w.n0 + 1 + i
        if j < r.size:
            lin += r[j] * w.q_b[i]
    return quad, float(lin.real)


def msd_nonlinear(w, H, dither_power, alpha):
    """Second-order MSD prediction with a tanh transmit amplifier.

    The quadratic terms of the linear multiplier are scaled by
    ``1 - 1/alpha**4``; the constant and cross terms are unchanged. Tends to
    :func:`msd_closed_form` as ``alpha`` grows.
    """
    if not alpha > 1:
        raise ParamError(f"alpha must exceed 1, got {alpha}")
    quad, lin = _quadratic_and_linear(w, H)
    return float(dither_power) * (quad * (1 - alpha ** -4.0) + 1 - 2 * lin)


@dataclass
class ConditionalMoments:
    """Per-symbol Gaussian moments of the dithered (1) and direct (2) outputs.

    Arrays are indexed by the virtual constellation label ``k``.
    """

    mu1: np.ndarray
    mu2: np.ndarray
    var1: np.ndarray
    var2: np.ndarray
    E_mk: np.ndarray
    E_gk: np.ndarray
    C: float
    bias: complex
    prior: np.ndarray
    noise_gain: float = 0.0

    def to_dict(self):
        cx = lambda a: [[float(v.real), float(v.imag)] for v in np.asarray(a)]
        return {"mu1": cx(self.mu1), "mu2": cx(self.mu2),
                "var1": [float(v) for v in self.var1], "var2": [float(v) for v in self.var2],
                "E_mk": cx(self.E_mk), "C": self.C,
                "bias": [float(np.real(self.bias)), float(np.imag(self.bias))]}


def conditional_moments(w, H, noise_variance, dmap, E_mk=None):
    """Gaussian moments of ``f_hat`` given ``f = k`` for both arms.

    With ``r0 = (q_f^H H)[n0]`` and ``C = sum_{j != n0} |d_j|^2``::

        mu2 = r0 k
        mu1 = r0 k + (r0 - 1) E_mk
        var2 = E|f|^2 C + s_w ||q_f||^2
        var1 = E|g|^2 C + s_w ||q_f||^2 + |r0 - 1|^2 (E(|m|^2 | k) - |E_mk|^2)

    Parameters
    ----------
    w : DfeWeights
    H : ChannelMatrix or ndarray
    noise_variance : float
    dmap : DitherMap
        Joint law of virtual and transmitted symbols.
    E_mk : array_like, optional
        Override the conditional dither means (for sensitivity studies); the
        conditional dither power is held fixed.
    """
    r, d = residual_response(w, H)
    r0 = r[w.n0]
    C = float(np.sum(np.abs(d) ** 2) - abs(d[w.n0]) ** 2)
    noise_gain = float(noise_variance * np.sum(np.abs(w.q_f) ** 2))
    k = dmap.c_f.points
    Emk = dmap.cond_mean if E_mk is None else np.asarray(E_mk, dtype=np.complex128)
    Em2k = dmap.cond_power
    mu2 = r0 * k
    mu1 = r0 * k + (r0 - 1) * Emk
    var2 = np.full(k.size, dmap.f_energy * C + noise_gain)
    cvar = np.maximum(Em2k - np.abs(Emk) ** 2, 0.0)
    var1 = dmap.g_energy * C + noise_gain + abs(r0 - 1) ** 2 * cvar
    return ConditionalMoments(mu1, mu2, var1, var2, Emk, k + Emk, C, r0 - 1,
                              dmap.prior, noise_gain)


def gaussian_kl(mu1, var1, mu2, var2, form="complex"):
    """KL(N1 || N2) for Gaussians with possibly complex means.

    ``form="complex"`` treats each as a circular complex Gaussian (real and
    imaginary parts independent, each with half the variance)::

        log(var2/var1) + (var1 + |mu1 - mu2|^2)/var2 - 1

    ``form="scalar"`` is the one-dimensional expression with ``|mu1-mu2|^2``
    in place of the squared mean difference, exactly half of the above.
    """
    var1 = np.asarray(var1, dtype=float)
    var2 = np.asarray(var2, dtype=float)
    dmu2 = np.abs(np.asarray(mu1) - np.asarray(mu2)) ** 2
    with np.errstate(divide="ignore"):
        full = np.log(var2 / var1) + (var1 + dmu2) / var2 - 1
    if form == "complex":
        return full
    if form == "scalar":
        return 0.5 * full
    raise ParamError(f"unknown KL form {form!r}")


def kl_objective(moms, prior=None, form="complex"):
    """Prior-weighted sum of per-symbol Gaussian KL divergences."""
    p = moms.prior if prior is None else np.asarray(prior, dtype=float)
    sup = p > 0
    if np.any(moms.var2[sup] <= 0):
        raise DegenerateDistribution("zero reference variance on a supported symbol")
    kl = gaussian_kl(moms.mu1[sup], moms.var1[sup], moms.mu2[sup], moms.var2[sup], form)
    return float(np.sum(p[sup] * kl))


def _labels(f_truth, c_f):
    if isinstance(f_truth, SymbolSequence):
        return f_truth.index
    f = np.asarray(f_truth)
    if np.issubdtype(f.dtype, np.integer):
        return f
    return np.argmin(np.abs(f[:, None] - c_f.points[None, :]), axis=1)


def empirical_divergence(trace_ref, trace_dith, f_truth, min_samples=50,
                         form="complex", skip=0):
    """Empirical MSD and conditional-Gaussian KL between two aligned runs.

    Parameters
    ----------
    trace_ref, trace_dith : EqualizerTrace
        Direct-transmission and dithered-replay outputs.
    f_truth : SymbolSequence or array of labels
        Virtual symbols used to condition the statistics.
    skip : int
        Leading outputs to ignore (cold start of the feedback register).
    """
    if len(trace_ref) != len(trace_dith):
        raise LengthError("traces differ in length")
    n = len(trace_ref)
    a = trace_ref.soft[skip:]
    b = trace_dith.soft[skip:]
    lab = _labels(f_truth, trace_ref.c_f)[:n][skip:]
    msd = float(np.mean(np.abs(b - a) ** 2))
    K = trace_ref.c_f.size
    kl = 0.0
    per = []
    for k in range(K):
        sel = lab == k
        cnt = int(np.count_nonzero(sel))
        if cnt == 0:
            continue
        if cnt < min_samples:
            raise InsufficientSamples(f"{cnt} samples for symbol {k}, need {min_samples}")
        x1, x2 = b[sel], a[sel]
        m1, m2 = x1.mean(), x2.mean()
        v1 = np.sum(np.abs(x1 - m1) ** 2) / (cnt - 1)
        v2 = np.sum(np.abs(x2 - m2) ** 2) / (cnt - 1)
        if v1 == v2 and m1 == m2:
            term = 0.0
        elif v2 <= 0:
            raise DegenerateDistribution(f"zero reference variance for symbol {k}")
        else:
            term = float(gaussian_kl(m1, v1, m2, v2, form))
        per.append({"k": k, "n": cnt, "mu1": m1, "mu2": m2, "var1": v1, "var2": v2})
        kl += cnt / lab.size * term
    return {"msd": msd, "kl": kl, "per_symbol": per}


def gaussian_approx_diagnostic(trace, f_truth, k, min_samples=200):
    """Kolmogorov-Smirnov distance of the conditional output from normality.

    The outputs with ``f = k`` are standardised separately on the real and
    imaginary axes; the larger of the two KS statistics is returned.
    """
    soft = trace.soft if hasattr(trace, "soft") else np.asarray(trace)
    lab = _labels(f_truth, trace.c_f) if hasattr(trace, "c_f") else np.asarray(f_truth)
    x = soft[lab[:soft.size] == k]
    if x.size < min_samples:
        raise InsufficientSamples(f"{x.size} samples for symbol {k}, need {min_samples}")
    out = 0.0
    for part in (x.real, x.imag):
        sd = part.std(ddof=1)
        if sd == 0:
            return 1.0
        z = (part - part.mean()) / sd
        out = max(out, float(stats.kstest(z, "norm").statistic))
    return out

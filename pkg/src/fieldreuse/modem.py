"""Constellations, bit/symbol mapping, OFDM and constellation dither maps.

Dither convention used throughout the package: ``m = g - f`` where ``g`` is
the physically transmitted symbol and ``f`` the virtual symbol a receiver is
made to see after subtracting ``m`` from its equalizer output.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .bitlayer import BitStream
from .errors import (FramingError, LengthError, NumericError, ParamError,
                     UnsupportedOrder)

__all__ = [
    "Constellation",
    "SymbolSequence",
    "DitherSequence",
    "DitherMap",
    "OfdmConfig",
    "build_qam",
    "map_symbols",
    "demap_symbols",
    "slice_symbol",
    "slice_symbols",
    "dither_upmap",
    "dither_downmap",
    "dither_worst",
    "dither_random_nearest",
    "get_dither_map",
    "DITHER_MAPS",
    "ofdm_modulate",
    "ofdm_demodulate",
]


def _gray(i):
    return i ^ (i >> 1)


class Constellation:
    """Unit-energy Gray-labelled constellation.

    ``points[label]`` is the point whose bit label is the integer ``label``.
    For square QAM the label interleaves the in-phase and quadrature Gray
    bits, most significant first: ``[I1, Q1, I2, Q2, ...]``. A 0 bit selects
    the negative half, so the two leading bits give the quadrant and
    truncating a label to its first ``j`` bits yields the enclosing point of
    the ``2**j`` constellation.
    """

    def __init__(self, k, points, scale):
        self.k = int(k)
        self.points = np.asarray(points, dtype=np.complex128)
        self.points.setflags(write=False)
        self.scale = float(scale)

    @property
    def size(self):
        return self.points.size

    @property
    def labels(self):
        return np.arange(self.size)

    def label_bits(self, label):
        return [(label >> (self.k - 1 - i)) & 1 for i in range(self.k)]

    @property
    def peak(self):
        """Largest component magnitude over the point set."""
        return float(max(np.max(np.abs(self.points.real)),
                         np.max(np.abs(self.points.imag))))

    def integer_grid(self):
        """Points on the unscaled odd-integer grid."""
        return self.points / self.scale

    def __eq__(self, other):
        return (isinstance(other, Constellation) and self.k == other.k
                and np.array_equal(self.points, other.points))

    def __hash__(self):
        return hash((self.k, self.points.tobytes()))

    def __repr__(self):
        return f"Constellation(k={self.k}, size={self.size})"

    @property
    def name(self):
        return {1: "BPSK", 2: "QPSK"}.get(self.k, f"{self.size}QAM")

    def to_dict(self):
        return {
            "k": self.k,
            "name": self.name,
            "scale": self.scale,
            "points": [[float(p.real), float(p.imag)] for p in self.points],
            "labels": ["".join(str(b) for b in self.label_bits(i))
                       for i in range(self.size)],
        }

    @classmethod
    def from_dict(cls, dct):
        pts = np.array([complex(a, b) for a, b in dct["points"]])
        return cls(dct["k"], pts, dct["scale"])


_QAM_CACHE = {}


def build_qam(k):
    """Build a unit-energy Gray-labelled constellation with ``2**k`` points.

    Parameters
    ----------
    k : int
        1 for BPSK or an even number up to 8 for square QAM.

    Examples
    --------
    >>> c = build_qam(2)
    >>> c.points[0] * np.sqrt(2)
    np.complex128(-1-1j)
    """
    if k in _QAM_CACHE:
        return _QAM_CACHE[k]
    if k == 1:
        c = Constellation(1, np.array([-1.0, 1.0], dtype=np.complex128), 1.0)
    elif k in (2, 4, 6, 8):
        half = k // 2
        M = 1 << half
        # axis Gray code -> level index
        level_of = np.empty(M, dtype=np.int64)
        for idx in range(M):
            level_of[_gray(idx)] = idx
        levels = 2 * np.arange(M) - (M - 1)
        pts = np.empty(1 << k, dtype=np.complex128)
        for lab in range(1 << k):
            gi = gq = 0
            for i in range(half):
                gi = (gi << 1) | ((lab >> (k - 1 - 2 * i)) & 1)
                gq = (gq << 1) | ((lab >> (k - 2 - 2 * i)) & 1)
            pts[lab] = levels[level_of[gi]] + 1j * levels[level_of[gq]]
        scale = 1.0 / np.sqrt(np.mean(np.abs(pts) ** 2))
        c = Constellation(k, pts * scale, scale)
    else:
        raise UnsupportedOrder(f"unsupported constellation order k={k}")
    _QAM_CACHE[k] = c
    return c


@dataclass
class SymbolSequence:
    """Symbols together with their constellation and point labels."""

    index: np.ndarray
    constellation: Constellation

    def __post_init__(self):
        self.index = np.asarray(self.index, dtype=np.int64)

    @property
    def symbols(self):
        return self.constellation.points[self.index]

    def __len__(self):
        return self.index.size


def map_symbols(p, c):
    """Map consecutive ``k``-bit groups of ``p`` onto points of ``c``.

    A stream whose length is not a multiple of ``k`` is zero-padded with a
    warning.
    """
    bits = BitStream(p).bits
    k = c.k
    if bits.size % k:
        pad = k - bits.size % k
        warnings.warn(f"padding {pad} zero bits to fill the last symbol", stacklevel=2)
        bits = np.concatenate([bits, np.zeros(pad, dtype=np.uint8)])
    groups = bits.reshape(-1, k).astype(np.int64)
    weights = 1 << np.arange(k - 1, -1, -1)
    return SymbolSequence(groups @ weights, c)


def demap_symbols(seq):
    """Inverse of :func:`map_symbols` on point labels."""
    if not isinstance(seq, SymbolSequence):
        raise ParamError("demap_symbols expects a SymbolSequence")
    k = seq.constellation.k
    shifts = np.arange(k - 1, -1, -1)
    bits = (seq.index[:, None] >> shifts[None, :]) & 1
    return BitStream(bits.ravel())


def slice_symbols(z, c):
    """Nearest-point labels for an array of soft values (lowest index on ties)."""
    z = np.asarray(z, dtype=np.complex128)
    if not np.all(np.isfinite(z)):
        raise NumericError("cannot slice non-finite values")
    d = np.abs(z.reshape(-1, 1) - c.points[None, :])
    return np.argmin(d, axis=1).reshape(z.shape)


def slice_symbol(z, c):
    """Nearest constellation point to ``z``; ties go to the lowest label."""
    return c.points[int(slice_symbols(np.array([z]), c)[0])]


@dataclass
class DitherSequence:
    """Additive dither ``m = g - f`` with the virtual labels it emulates."""

    values: np.ndarray
    f_index: np.ndarray
    c_f: Constellation

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        self.f_index = np.asarray(self.f_index, dtype=np.int64)
        if self.values.shape != self.f_index.shape:
            raise LengthError("dither and label arrays differ in length")

    def __len__(self):
        return self.values.size

    @property
    def power(self):
        return float(np.mean(np.abs(self.values) ** 2)) if self.values.size else 0.0

    @property
    def cond_mean(self):
        """Empirical ``E(m | f = k)`` per label; NaN for unseen labels."""
        out = np.full(self.c_f.size, np.nan + 0j)
        for k in range(self.c_f.size):
            sel = self.f_index == k
            if np.any(sel):
                out[k] = self.values[sel].mean()
        return out

    @classmethod
    def zeros(cls, f):
        return cls(np.zeros(len(f), dtype=np.complex128), f.index, f.constellation)


# ---------------------------------------------------------------- dither maps

def _same_quadrant(c_hi, q_label):
    """Labels of ``c_hi`` whose two leading bits equal ``q_label``."""
    shift = c_hi.k - 2
    return np.nonzero((np.arange(c_hi.size) >> shift) == q_label)[0]


def _check_qam(c, what):
    if c.k < 2 or c.k % 2:
        raise UnsupportedOrder(f"{what} must be square QAM, got k={c.k}")


def dither_downmap(g, k_low=2):
    """Re-read a high-order sequence as its quadrant (sub-)points.

    Each ``g`` label is truncated to its first ``k_low`` bits, which selects
    the nearest point of the lower-order constellation lying in the same
    (sub-)quadrant.

    Returns
    -------
    f : SymbolSequence
    m : DitherSequence
    """
    c_g = g.constellation
    _check_qam(c_g, "g")
    if k_low >= c_g.k or k_low % 2:
        raise UnsupportedOrder(f"cannot down-map k={c_g.k} to k={k_low}")
    c_f = build_qam(k_low)
    f_idx = g.index >> (c_g.k - k_low)
    f = SymbolSequence(f_idx, c_f)
    return f, DitherSequence(g.symbols - f.symbols, f_idx, c_f)


def _antipode(label, k):
    """Label of the point reflected through the origin (all sign bits flip)."""
    if k == 1:
        return label ^ 1
    # flipping I1 and Q1 of a reflected Gray code mirrors both axes
    return label ^ (0b11 << (k - 2))


def dither_upmap(f, extra_bits=None, m=2):
    """Transmit-side construction of a high-order ``g`` that carries ``f``.

    With ``extra_bits`` each ``g[n]`` keeps ``f[n]``'s label as its leading
    bits and appends ``(m-1)*k`` extra label bits, so ``g`` stays in the
    (sub-)quadrant of ``f``. Without ``extra_bits`` the sequence is folded
    on itself: ``g[n] = A * sum_i M**(m-1-i) * f_int[n + i*N]`` where
    ``N = len(f) // m``, ``f_int`` is ``f`` on the odd-integer grid, ``M`` its
    number of levels per axis and ``A`` the energy normalisation. The
    returned dither relates ``g`` to ``f[:N]``.
    """
    c_f = f.constellation
    _check_qam(c_f, "f")
    k = c_f.k
    if k * m > 8:
        raise UnsupportedOrder(f"order {k * m} exceeds 256QAM")
    c_g = build_qam(k * m)
    if extra_bits is None:
        if len(f) % m:
            raise LengthError(f"len(f)={len(f)} not divisible by m={m}")
        N = len(f) // m
        M = 1 << (k // 2)
        f_int = c_f.integer_grid()[f.index]
        acc = np.zeros(N, dtype=np.complex128)
        for i in range(m):
            acc += M ** (m - 1 - i) * f_int[i * N:(i + 1) * N]
        g_idx = slice_symbols(acc * c_g.scale, c_g)
        base = f.index[:N]
    else:
        xb = BitStream(extra_bits).bits
        n_extra = (m - 1) * k
        if xb.size != n_extra * len(f):
            raise LengthError(f"need {n_extra * len(f)} extra bits, got {xb.size}")
        w = 1 << np.arange(n_extra - 1, -1, -1)
        tail = xb.reshape(-1, n_extra).astype(np.int64) @ w
        # keep f's label bits as the leading bits
        g_idx = (f.index << n_extra) | tail
        base = f.index
    g = SymbolSequence(g_idx, c_g)
    return g, DitherSequence(g.symbols - c_f.points[base], base, c_f)


def dither_worst(x, direction, k_low=2, rng=None):
    """Maximal-magnitude admissible dither.

    ``direction="down"``: ``x`` is a high-order transmitted sequence and the
    virtual low-order symbol is the point of the antipodal quadrant.
    ``direction="up"``: ``x`` is a transmitted QPSK sequence and the virtual
    16QAM symbol is drawn uniformly from the four points of the antipodal
    quadrant, which keeps the virtual symbols uniformly distributed.
    """
    if direction == "down":
        f, _ = dither_downmap(x, k_low)
        f_idx = _antipode(f.index, f.constellation.k)
        f = SymbolSequence(f_idx, f.constellation)
        return f, DitherSequence(x.symbols - f.symbols, f_idx, f.constellation)
    if direction == "up":
        return _random_up(x, rng, opposite=True)
    raise ParamError(f"direction must be 'up' or 'down', got {direction!r}")


def _random_up(g, rng, opposite):
    c_g = g.constellation
    if c_g.k != 2:
        raise UnsupportedOrder("random up-mapping expects a QPSK sequence")
    if rng is None:
        raise ParamError("an explicit rng is required")
    c_f = build_qam(4)
    q = _antipode(g.index, 2) if opposite else g.index
    f_idx = (q << 2) | rng.integers(0, 4, size=len(g))
    f = SymbolSequence(f_idx, c_f)
    return f, DitherSequence(g.symbols - f.symbols, f_idx, c_f)


def dither_random_nearest(g, rng):
    """Emulate 16QAM from transmitted QPSK.

    Each virtual symbol is drawn with equal probability from the four 16QAM
    points in the quadrant of ``g[n]``.
    """
    return _random_up(g, rng, opposite=False)


@dataclass(frozen=True)
class DitherMap:
    """Joint law of (virtual label, transmitted label).

    ``joint[a, b] = P(f = c_f.points[a], g = c_g.points[b])``. The sample
    path generators and the closed-form moment analysis share this table.
    """

    name: str
    c_g: Constellation
    c_f: Constellation
    joint: np.ndarray

    @property
    def prior(self):
        return self.joint.sum(axis=1)

    def _dither(self):
        return self.c_g.points[None, :] - self.c_f.points[:, None]

    @property
    def power(self):
        return float(np.sum(self.joint * np.abs(self._dither()) ** 2))

    @property
    def cond_mean(self):
        """``E(m | f = k)`` for every virtual label."""
        p = self.prior
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.sum(self.joint * self._dither(), axis=1) / p

    @property
    def cond_power(self):
        """``E(|m|**2 | f = k)``."""
        p = self.prior
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.sum(self.joint * np.abs(self._dither()) ** 2, axis=1) / p

    @property
    def g_energy(self):
        return float(np.sum(self.joint.sum(axis=0) * np.abs(self.c_g.points) ** 2))

    @property
    def f_energy(self):
        return float(np.sum(self.prior * np.abs(self.c_f.points) ** 2))

    def sample(self, n, rng):
        """Draw ``n`` independent (f_index, g_index) pairs."""
        flat = self.joint.ravel()
        pick = rng.choice(flat.size, size=n, p=flat / flat.sum())
        return pick // self.c_g.size, pick % self.c_g.size

    def to_dict(self):
        rows = []
        for a, b in zip(*np.nonzero(self.joint)):
            rows.append({"f": int(a), "g": int(b), "p": float(self.joint[a, b])})
        return {"name": self.name, "c_g": self.c_g.to_dict(),
                "c_f": self.c_f.to_dict(), "table": rows,
                "power": self.power}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, dct):
        c_g = Constellation.from_dict(dct["c_g"])
        c_f = Constellation.from_dict(dct["c_f"])
        joint = np.zeros((c_f.size, c_g.size))
        for row in dct["table"]:
            joint[row["f"], row["g"]] = row["p"]
        return cls(dct["name"], c_g, c_f, joint)


def _down_table(opposite):
    c_g, c_f = build_qam(4), build_qam(2)
    joint = np.zeros((4, 16))
    for b in range(16):
        a = b >> 2
        joint[_antipode(a, 2) if opposite else a, b] = 1 / 16
    return c_g, c_f, joint


def _up_table(opposite):
    c_g, c_f = build_qam(2), build_qam(4)
    joint = np.zeros((16, 4))
    for b in range(4):
        q = _antipode(b, 2) if opposite else b
        for a in _same_quadrant(c_f, q):
            joint[a, b] = 1 / 16
    return c_g, c_f, joint


def get_dither_map(name, k=4):
    """Named dither map.

    ``m1_down``/``m2_down``: transmit 16QAM, emulate QPSK with the nearest /
    antipodal quadrant point. ``m1_up``/``m2_up``: transmit QPSK, emulate
    16QAM drawn uniformly from the same / antipodal quadrant. ``none``:
    identical constellations on ``2**k`` points, zero dither.
    """
    if name == "m1_down":
        c_g, c_f, joint = _down_table(False)
    elif name == "m2_down":
        c_g, c_f, joint = _down_table(True)
    elif name == "m1_up":
        c_g, c_f, joint = _up_table(False)
    elif name == "m2_up":
        c_g, c_f, joint = _up_table(True)
    elif name == "none":
        c_g = c_f = build_qam(k)
        joint = np.eye(c_g.size) / c_g.size
    else:
        raise ParamError(f"unknown dither map {name!r}")
    return DitherMap(name, c_g, c_f, joint)


DITHER_MAPS = ("m1_up", "m1_down", "m2_up", "m2_down", "none")


# ----------------------------------------------------------------------- OFDM

@dataclass(frozen=True)
class OfdmConfig:
    n_carriers: int
    cp_length: int
    active_carriers: tuple = None

    def __post_init__(self):
        if self.n_carriers < 1 or not 0 <= self.cp_length < self.n_carriers:
            raise ParamError("need 0 <= cp_length < n_carriers")
        act = (tuple(range(self.n_carriers)) if self.active_carriers is None
               else tuple(int(i) for i in self.active_carriers))
        if any(i < 0 or i >= self.n_carriers for i in act) or len(set(act)) != len(act):
            raise ParamError("active carriers must be distinct indices in range")
        object.__setattr__(self, "active_carriers", act)


def ofdm_modulate(f, cfg):
    """Unitary inverse DFT per block with cyclic prefix."""
    sym = f.symbols if isinstance(f, SymbolSequence) else np.asarray(f, dtype=np.complex128)
    n_act = len(cfg.active_carriers)
    if sym.size % n_act:
        raise FramingError(f"{sym.size} symbols do not fill {n_act}-carrier blocks")
    blocks = sym.reshape(-1, n_act)
    X = np.zeros((blocks.shape[0], cfg.n_carriers), dtype=np.complex128)
    X[:, list(cfg.active_carriers)] = blocks
    x = np.fft.ifft(X, axis=1, norm="ortho")
    if cfg.cp_length:
        x = np.concatenate([x[:, -cfg.cp_length:], x], axis=1)
    return x.ravel()


def ofdm_demodulate(samples, cfg, per_carrier_gains=None):
    """Strip the prefix, forward DFT, optional one-tap equalisation."""
    x = np.asarray(samples, dtype=np.complex128)
    blk = cfg.n_carriers + cfg.cp_length
    if x.size % blk:
        raise FramingError(f"{x.size} samples do not fill {blk}-sample blocks")
    x = x.reshape(-1, blk)[:, cfg.cp_length:]
    X = np.fft.fft(x, axis=1, norm="ortho")
    if per_carrier_gains is not None:
        X = X / np.asarray(per_carrier_gains)[None, :]
    return X[:, list(cfg.active_carriers)].ravel()


slice = slice_symbol  # noqa: A001  (public name mirrors the receiver's slicer)

"""Bit-domain processing: FEC, interleaving and XOR whitening.

The whitening trick lets a fixed, already transmitted bit sequence ``p`` be
re-read as the output of a different encoder. If ``d`` is what the original
encoder produced and ``d2`` what a new encoder would produce from some data,
the mask ``s`` relates them so that whitening ``d`` gives ``d2``.
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import core
from .errors import EmptyStream, FramingError, LengthError, ParamError

__all__ = [
    "BitStream",
    "WhiteningSequence",
    "CodecSpec",
    "ErrorReport",
    "RateMatch",
    "encode",
    "decode",
    "interleave",
    "deinterleave",
    "design_whitener",
    "apply_whitener",
    "count_errors",
    "match_rate",
    "read_raw_bits",
]


def _as_bits(values):
    arr = np.asarray(values)
    if arr.ndim != 1:
        arr = arr.ravel()
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ParamError("bit values must be 0 or 1")
    out = arr.astype(np.uint8, copy=True)
    out.setflags(write=False)
    return out


class BitStream:
    """Immutable sequence of bits stored as a read-only ``uint8`` array."""

    __slots__ = ("_bits",)

    def __init__(self, bits):
        if isinstance(bits, BitStream):
            bits = bits.bits
        self._bits = _as_bits(bits)

    @property
    def bits(self):
        return self._bits

    def __len__(self):
        return self._bits.size

    @property
    def length(self):
        return self._bits.size

    def __iter__(self):
        return iter(self._bits.tolist())

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            return BitStream(self._bits[idx])
        return int(self._bits[idx])

    def __eq__(self, other):
        if not isinstance(other, BitStream):
            other = BitStream(other)
        return np.array_equal(self._bits, other._bits)

    def __hash__(self):
        return hash((self._bits.size, self._bits.tobytes()))

    def __xor__(self, other):
        other = BitStream(other)
        if len(other) != len(self):
            raise LengthError("XOR of streams with different lengths")
        return BitStream(self._bits ^ other._bits)

    def __repr__(self):
        head = "".join(str(b) for b in self._bits[:32])
        tail = "..." if self._bits.size > 32 else ""
        return f"BitStream({head}{tail}, length={self._bits.size})"

    def to_hex(self):
        """Pack MSB-first into bytes and return ``"<length>:<hex>"``."""
        return f"{self._bits.size}:{np.packbits(self._bits).tobytes().hex()}"

    @classmethod
    def from_hex(cls, text):
        n, _, hx = text.partition(":")
        n = int(n)
        raw = np.frombuffer(bytes.fromhex(hx), dtype=np.uint8)
        return cls(np.unpackbits(raw)[:n])

    @classmethod
    def random(cls, n, rng):
        return cls(rng.integers(0, 2, size=n, dtype=np.uint8))


@dataclass(frozen=True)
class WhiteningSequence:
    """Mask ``bits`` applied by XOR; ``complement`` flips the mask first.

    :func:`design_whitener` stores the XNOR pattern ``d2 XNOR d`` with
    ``complement=True``. Applying it therefore XORs with ``d XOR d2``, so the
    stored bits read naturally (1 where the streams agree) while the algebra
    still closes with a single XOR.
    """

    bits: BitStream
    complement: bool = False

    def __post_init__(self):
        object.__setattr__(self, "bits", BitStream(self.bits))

    def __len__(self):
        return len(self.bits)

    def effective_mask(self):
        mask = self.bits.bits
        return BitStream(mask ^ 1) if self.complement else self.bits


def design_whitener(d, d2):
    """Whitening sequence mapping ``d`` onto ``d2``.

    ``s[n] = 1`` where ``d2[n] == d[n]`` and 0 elsewhere.

    Examples
    --------
    >>> design_whitener([0, 1, 0, 1], [0, 1, 0, 1]).bits.bits.tolist()
    [1, 1, 1, 1]
    """
    d, d2 = BitStream(d), BitStream(d2)
    if len(d) != len(d2):
        raise LengthError(f"lengths differ: {len(d)} vs {len(d2)}")
    xnor = 1 - (d.bits ^ d2.bits)
    return WhiteningSequence(BitStream(xnor), complement=True)


def apply_whitener(d, s):
    """Return ``d XOR s`` (honouring ``s.complement``). Involutive."""
    d = BitStream(d)
    if not isinstance(s, WhiteningSequence):
        s = WhiteningSequence(BitStream(s))
    if len(d) != len(s):
        raise LengthError(f"lengths differ: {len(d)} vs {len(s)}")
    return d ^ s.effective_mask()


@dataclass(frozen=True)
class CodecSpec:
    """FEC plus interleaver description.

    Parameters
    ----------
    kind : {"uncoded", "convolutional"}
    generators : tuple of int
        Octal-style generator polynomials as integers; bit ``K-1`` taps the
        current input and bit 0 the oldest.
    constraint_length : int
    interleaver : tuple (rows, cols) or None
        Block interleaver written by rows and read by columns. ``None`` is the
        identity permutation.
    """

    kind: str = "convolutional"
    generators: tuple = (0o7, 0o5)
    constraint_length: int = 3
    interleaver: tuple = None

    def __post_init__(self):
        if self.kind not in ("uncoded", "convolutional"):
            raise ParamError(f"unknown codec kind {self.kind!r}")
        if self.kind == "convolutional":
            if self.constraint_length < 1 or not self.generators:
                raise ParamError("invalid convolutional code")
            lim = 1 << self.constraint_length
            if any(g <= 0 or g >= lim for g in self.generators):
                raise ParamError("generator exceeds constraint length")
            object.__setattr__(self, "generators", tuple(int(g) for g in self.generators))
        if self.interleaver is not None:
            r, c = self.interleaver
            if r < 1 or c < 1:
                raise ParamError("interleaver dimensions must be positive")
            object.__setattr__(self, "interleaver", (int(r), int(c)))

    @property
    def rate(self):
        if self.kind == "uncoded":
            return Fraction(1)
        return Fraction(1, len(self.generators))

    def coded_length(self, n_info):
        if self.kind == "uncoded":
            return n_info
        return len(self.generators) * (n_info + self.constraint_length - 1)

    def info_length(self, n_coded):
        if self.kind == "uncoded":
            return n_coded
        n_out = len(self.generators)
        if n_coded % n_out:
            raise FramingError(f"coded length {n_coded} not a multiple of {n_out}")
        n = n_coded // n_out - (self.constraint_length - 1)
        if n < 1:
            raise FramingError("coded stream shorter than the termination tail")
        return n

    def to_dict(self):
        return {
            "kind": self.kind,
            "generators": [oct(g) for g in self.generators],
            "constraint_length": self.constraint_length,
            "interleaver": list(self.interleaver) if self.interleaver else None,
        }

    @classmethod
    def from_dict(cls, dct):
        gens = tuple(int(g, 8) if isinstance(g, str) else int(g)
                     for g in dct.get("generators", ["0o7", "0o5"]))
        il = dct.get("interleaver")
        return cls(kind=dct.get("kind", "convolutional"), generators=gens,
                   constraint_length=int(dct.get("constraint_length", 3)),
                   interleaver=tuple(il) if il else None)


def _permutation(n, dims):
    """Pruned block permutation: ``out[j] = in[perm[j]]``.

    Full ``rows*cols`` blocks are written by rows and read by columns; the
    trailing partial block uses the same pattern with out-of-range positions
    skipped, so the map is a bijection for every ``n``.
    """
    if dims is None:
        return np.arange(n)
    rows, cols = dims
    size = rows * cols
    base = np.arange(size).reshape(rows, cols).T.ravel()
    parts = []
    for start in range(0, n, size):
        m = min(size, n - start)
        blk = base[base < m] if m < size else base
        parts.append(start + blk)
    return np.concatenate(parts) if parts else np.arange(0)


def interleave(d, dims):
    d = BitStream(d)
    return BitStream(d.bits[_permutation(len(d), dims)])


def deinterleave(d, dims):
    d = BitStream(d)
    perm = _permutation(len(d), dims)
    out = np.empty(len(d), dtype=np.uint8)
    out[perm] = d.bits
    return BitStream(out)


def _conv_encode(bits, gens, K):
    n_out = len(gens)
    u = np.concatenate([bits.astype(np.int64), np.zeros(K - 1, dtype=np.int64)])
    out = np.zeros((u.size, n_out), dtype=np.uint8)
    for j, g in enumerate(gens):
        # tap i of the register holds u[n - i]; bit K-1-i of g selects it
        taps = [(g >> (K - 1 - i)) & 1 for i in range(K)]
        acc = np.zeros(u.size, dtype=np.int64)
        for i, t in enumerate(taps):
            if t:
                acc[i:] ^= u[:u.size - i]
        out[:, j] = acc & 1
    return out.ravel()


def encode(b, codec=None):
    """FEC-encode then interleave ``b``.

    Examples
    --------
    >>> encode([1, 0, 1], CodecSpec("uncoded")).bits.tolist()
    [1, 0, 1]
    """
    codec = codec or CodecSpec()
    b = BitStream(b)
    if len(b) == 0:
        raise EmptyStream("cannot encode an empty stream")
    if codec.kind == "uncoded":
        d = b.bits
    else:
        d = _conv_encode(b.bits, codec.generators, codec.constraint_length)
    return interleave(d, codec.interleaver)


def decode(d_hat, codec=None):
    """De-interleave and hard-decision decode."""
    codec = codec or CodecSpec()
    d_hat = BitStream(d_hat)
    if len(d_hat) == 0:
        raise EmptyStream("cannot decode an empty stream")
    n_info = codec.info_length(len(d_hat))
    d = deinterleave(d_hat, codec.interleaver)
    if codec.kind == "uncoded":
        return d
    bits = core.viterbi_hard(d.bits.astype(np.int64), n_info,
                             list(codec.generators), codec.constraint_length)
    return BitStream(bits)


@dataclass(frozen=True)
class ErrorReport:
    errors: int
    ber: float
    n_bits: int


def count_errors(a, b):
    a, b = BitStream(a), BitStream(b)
    if len(a) != len(b):
        raise LengthError(f"lengths differ: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise EmptyStream("cannot count errors on empty streams")
    e = int(np.count_nonzero(a.bits != b.bits))
    return ErrorReport(errors=e, ber=e / len(a), n_bits=len(a))


@dataclass(frozen=True)
class RateMatch:
    """Outcome of reconciling a new codec's output length with ``d``."""

    b: BitStream
    d2: BitStream
    padded_bits: int = 0
    truncated_info_bits: int = 0
    notes: list = field(default_factory=list)


def match_rate(b2, codec2, target_length, rng):
    """Produce ``d2`` of exactly ``target_length`` bits from data ``b2``.

    If the encoded stream is short it is padded with fresh random bits drawn
    from ``rng``; if long, ``b2`` is truncated to the largest prefix whose
    encoding fits, and the remainder is padded.
    """
    b2 = BitStream(b2)
    if target_length < 1:
        raise EmptyStream("target length must be positive")
    trunc = 0
    n = len(b2)
    while n > 0 and codec2.coded_length(n) > target_length:
        n -= 1
    if n == 0:
        raise FramingError("target length too short for any codeword")
    if n < len(b2):
        trunc = len(b2) - n
        b2 = b2[:n]
    d2 = encode(b2, codec2).bits
    pad = target_length - d2.size
    notes = []
    if pad:
        d2 = np.concatenate([d2, rng.integers(0, 2, size=pad, dtype=np.uint8)])
        notes.append(f"padded {pad} random bits")
    if trunc:
        notes.append(f"truncated {trunc} information bits")
    return RateMatch(b=b2, d2=BitStream(d2), padded_bits=pad,
                     truncated_info_bits=trunc, notes=notes)


def read_raw_bits(path):
    """Read a file with one bit per byte (byte values 0 or 1)."""
    raw = np.fromfile(path, dtype=np.uint8)
    return BitStream(raw)

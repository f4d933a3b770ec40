import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fieldreuse import modem
from fieldreuse.bitlayer import BitStream
from fieldreuse.errors import (FramingError, LengthError, NumericError, ParamError,
                               UnsupportedOrder)
from fieldreuse.modem import (Constellation, DitherMap, OfdmConfig, SymbolSequence, build_qam,
                              demap_symbols, dither_downmap, dither_random_nearest,
                              dither_upmap, dither_worst, get_dither_map, map_symbols,
                              ofdm_demodulate, ofdm_modulate, slice_symbol, slice_symbols)

S2 = np.sqrt(2)
S10 = np.sqrt(10)


def _axis_power(opposite):
    """Per-symbol dither power of 16QAM -> QPSK by direct enumeration."""
    x = np.array([-3, -1, 1, 3]) / S10
    s = np.sign(x) / S2
    if opposite:
        s = -s
    return 2 * np.mean((x - s) ** 2)


class TestConstellation:
    def test_qpsk(self):
        c = build_qam(2)
        np.testing.assert_allclose(sorted(c.points * S2, key=lambda z: (z.real, z.imag)),
                                   [-1 - 1j, -1 + 1j, 1 - 1j, 1 + 1j])
        assert c.points[0] == (-1 - 1j) / S2

    def test_16qam_grid(self):
        c = build_qam(4)
        g = c.points * S10
        assert set(np.round(g.real).astype(int)) == {-3, -1, 1, 3}
        assert set(np.round(g.imag).astype(int)) == {-3, -1, 1, 3}
        np.testing.assert_allclose(c.scale, 1 / S10)

    def test_bpsk(self):
        np.testing.assert_array_equal(build_qam(1).points, [-1, 1])

    @pytest.mark.parametrize("k", [1, 2, 4, 6, 8])
    def test_unit_energy_and_bijection(self, k):
        c = build_qam(k)
        np.testing.assert_allclose(np.mean(np.abs(c.points) ** 2), 1.0)
        assert np.unique(np.round(c.points, 12)).size == c.size

    @pytest.mark.parametrize("k", [2, 4, 6, 8])
    def test_gray_neighbours(self, k):
        c = build_qam(k)
        step = 2 * c.scale
        d = np.abs(c.points[:, None] - c.points[None, :])
        for a, b in zip(*np.nonzero(np.isclose(d, step))):
            assert bin(a ^ b).count("1") == 1

    @pytest.mark.parametrize("k", [0, 3, 5, 10])
    def test_unsupported(self, k):
        with pytest.raises(UnsupportedOrder):
            build_qam(k)

    def test_quadrant_from_leading_bits(self):
        c4, c2 = build_qam(4), build_qam(2)
        for lab in range(16):
            q = c2.points[lab >> 2]
            p = c4.points[lab]
            assert np.sign(p.real) == np.sign(q.real) and np.sign(p.imag) == np.sign(q.imag)

    def test_json_roundtrip(self):
        c = build_qam(4)
        back = Constellation.from_dict(c.to_dict())
        assert back == c
        assert c.to_dict()["labels"][5] == "0101"


class TestMapping:
    def test_single_qpsk(self):
        s = map_symbols([0, 0], build_qam(2))
        assert len(s) == 1 and s.symbols[0] == build_qam(2).points[0]

    def test_two_16qam(self):
        assert len(map_symbols(np.ones(8, dtype=int), build_qam(4))) == 2

    @pytest.mark.parametrize("k", [1, 2, 4, 6, 8])
    def test_roundtrip(self, k):
        p = BitStream.random(10_000 - 10_000 % k, np.random.default_rng(k))
        assert demap_symbols(map_symbols(p, build_qam(k))) == p

    def test_padding_warns(self):
        with pytest.warns(UserWarning):
            s = map_symbols([1, 0, 1], build_qam(2))
        assert s.index.tolist() == [2, 2]


class TestSlicer:
    def test_exact_point(self):
        c = build_qam(4)
        for p in c.points:
            assert slice_symbol(p, c) == p

    def test_tie_lowest_index(self):
        c = build_qam(2)
        assert slice_symbol(0j, c) == c.points[0]

    def test_against_brute_force(self):
        rng = np.random.default_rng(0)
        c = build_qam(4)
        z = (rng.standard_normal(10_000) + 1j * rng.standard_normal(10_000)) * 0.8
        lab = slice_symbols(z, c)
        brute = [min(range(c.size), key=lambda i: abs(v - c.points[i])) for v in z]
        np.testing.assert_array_equal(lab, brute)

    def test_non_finite(self):
        with pytest.raises(NumericError):
            slice_symbol(np.nan, build_qam(2))

    def test_public_alias(self):
        assert modem.slice is slice_symbol


class TestDownmap:
    def test_corner(self):
        g = SymbolSequence([int(np.argmin(np.abs(build_qam(4).points - (3 + 3j) / S10)))],
                           build_qam(4))
        f, m = dither_downmap(g)
        np.testing.assert_allclose(f.symbols, [(1 + 1j) / S2])
        np.testing.assert_allclose(f.symbols + m.values, g.symbols)

    def test_quadrant_preserved(self):
        g = SymbolSequence(np.arange(16), build_qam(4))
        f, m = dither_downmap(g)
        np.testing.assert_array_equal(np.sign(f.symbols.real), np.sign(g.symbols.real))
        np.testing.assert_array_equal(np.sign(f.symbols.imag), np.sign(g.symbols.imag))
        np.testing.assert_allclose(f.symbols + m.values, g.symbols, rtol=0, atol=4e-16)

    def test_minimal_energy_over_all_assignments(self):
        g = build_qam(4).points
        q = build_qam(2).points
        f, m = dither_downmap(SymbolSequence(np.arange(16), build_qam(4)))
        best = sum(min(abs(p - t) ** 2 for t in q) for p in g)
        np.testing.assert_allclose(np.sum(np.abs(m.values) ** 2), best)
        for choice in itertools.product(range(4), repeat=4):
            # any assignment within the first quadrant's four points
            pts = [p for p in g if p.real > 0 and p.imag > 0]
            cost = sum(abs(p - q[c]) ** 2 for p, c in zip(pts, choice))
            assert cost >= sum(abs(p - (1 + 1j) / S2) ** 2 for p in pts) - 1e-12

    def test_order_mismatch(self):
        with pytest.raises(UnsupportedOrder):
            dither_downmap(SymbolSequence([0], build_qam(2)), k_low=2)


class TestUpmap:
    def test_paired_example(self):
        c2 = build_qam(2)
        a = int(np.argmin(np.abs(c2.points - (1 + 1j) / S2)))
        b = int(np.argmin(np.abs(c2.points - (1 - 1j) / S2)))
        g, m = dither_upmap(SymbolSequence([a, b], c2))
        np.testing.assert_allclose(g.symbols, [(3 + 1j) / S10])
        np.testing.assert_allclose(c2.points[a] + m.values, g.symbols)

    def test_all_pairs_same_quadrant(self):
        c2 = build_qam(2)
        for a, b in itertools.product(range(4), repeat=2):
            g, _ = dither_upmap(SymbolSequence([a, b], c2))
            assert np.sign(g.symbols[0].real) == np.sign(c2.points[a].real)
            assert np.sign(g.symbols[0].imag) == np.sign(c2.points[a].imag)

    def test_extra_bits_form(self):
        c2 = build_qam(2)
        f = SymbolSequence([3, 0], c2)
        g, m = dither_upmap(f, extra_bits=[0, 1, 1, 0])
        assert g.index.tolist() == [0b1101, 0b0010]
        np.testing.assert_allclose(f.symbols + m.values, g.symbols)

    def test_smaller_than_worst(self):
        c2 = build_qam(2)
        f = SymbolSequence(np.repeat(np.arange(4), 4), c2)
        _, m_opt = dither_upmap(f, extra_bits=np.tile([0, 0, 0, 1, 1, 0, 1, 1], 4))
        _, m_bad = dither_worst(f, "up", rng=np.random.default_rng(0))
        assert m_opt.power < m_bad.power

    def test_length_errors(self):
        with pytest.raises(LengthError):
            dither_upmap(SymbolSequence([0, 1, 2], build_qam(2)))
        with pytest.raises(LengthError):
            dither_upmap(SymbolSequence([0], build_qam(2)), extra_bits=[1])


class TestWorstAndRandom:
    def test_worst_down_corner(self):
        c4 = build_qam(4)
        idx = int(np.argmin(np.abs(c4.points - (3 + 3j) / S10)))
        f, _ = dither_worst(SymbolSequence([idx], c4), "down")
        np.testing.assert_allclose(f.symbols, [(-1 - 1j) / S2])

    def test_power_ratio(self):
        g = SymbolSequence(np.arange(16), build_qam(4))
        _, m1 = dither_downmap(g)
        _, m2 = dither_worst(g, "down")
        np.testing.assert_allclose(m1.power, _axis_power(False))
        np.testing.assert_allclose(m2.power, _axis_power(True))
        assert m2.power >= m1.power

    def test_random_nearest_support(self):
        rng = np.random.default_rng(0)
        g = SymbolSequence(rng.integers(0, 4, 20_000), build_qam(2))
        f, m = dither_random_nearest(g, rng)
        for q in range(4):
            assert set(np.unique(f.index[g.index == q])) == {4 * q, 4 * q + 1, 4 * q + 2, 4 * q + 3}
        np.testing.assert_allclose(f.symbols + m.values, g.symbols)
        np.testing.assert_allclose(np.mean(np.abs(f.symbols) ** 2), 1.0, atol=0.02)

    def test_random_nearest_conditional_means(self):
        # each virtual point has exactly one admissible transmitted point, so
        # E(m | f = k) = g(k) - k; only the average over all k vanishes
        rng = np.random.default_rng(1)
        n = 100_000
        g = SymbolSequence(rng.integers(0, 4, n), build_qam(2))
        f, m = dither_random_nearest(g, rng)
        c4, c2 = build_qam(4), build_qam(2)
        expect = c2.points[np.arange(16) >> 2] - c4.points
        np.testing.assert_allclose(m.cond_mean, expect, atol=1e-12)
        sigma = np.sqrt(m.power / n)
        assert abs(m.values.mean()) < 4 * sigma

    def test_bad_direction(self):
        with pytest.raises(ParamError):
            dither_worst(SymbolSequence([0], build_qam(4)), "sideways")


class TestDitherMap:
    @pytest.mark.parametrize("name", ["m1_down", "m2_down", "m1_up", "m2_up", "none"])
    def test_table_is_distribution(self, name):
        d = get_dither_map(name)
        np.testing.assert_allclose(d.joint.sum(), 1.0)
        np.testing.assert_allclose(d.f_energy, 1.0)
        np.testing.assert_allclose(d.g_energy, 1.0)

    def test_powers(self):
        np.testing.assert_allclose(get_dither_map("m1_down").power, _axis_power(False))
        np.testing.assert_allclose(get_dither_map("m2_down").power, _axis_power(True))
        np.testing.assert_allclose(get_dither_map("m1_up").power, _axis_power(False))
        assert get_dither_map("none").power == 0

    def test_sample_consistent_with_table(self):
        d = get_dither_map("m1_down")
        f, g = d.sample(50_000, np.random.default_rng(0))
        assert np.all(d.joint[f, g] > 0)
        np.testing.assert_allclose(np.bincount(f, minlength=4) / f.size, 0.25, atol=0.01)

    def test_json_roundtrip(self):
        d = get_dither_map("m2_up")
        import json
        back = DitherMap.from_dict(json.loads(d.to_json()))
        np.testing.assert_allclose(back.joint, d.joint)
        assert back.c_f == d.c_f and back.c_g == d.c_g

    def test_unknown(self):
        with pytest.raises(ParamError):
            get_dither_map("m3")


class TestOfdm:
    def test_identity_roundtrip(self):
        cfg = OfdmConfig(64, 16)
        f = SymbolSequence(np.random.default_rng(0).integers(0, 16, 128), build_qam(4))
        np.testing.assert_allclose(ofdm_demodulate(ofdm_modulate(f, cfg), cfg), f.symbols,
                                   atol=1e-12)

    def test_cp_channel(self):
        cfg = OfdmConfig(32, 4)
        f = SymbolSequence(np.random.default_rng(1).integers(0, 4, 64), build_qam(2))
        h = np.array([1.0, 0.4 - 0.2j, 0.1j])
        x = ofdm_modulate(f, cfg)
        y = np.convolve(x, h)[:x.size]
        gains = np.fft.fft(h, cfg.n_carriers)
        np.testing.assert_allclose(ofdm_demodulate(y, cfg, gains), f.symbols, atol=1e-12)

    def test_zeros_and_energy(self):
        cfg = OfdmConfig(16, 0, active_carriers=range(2, 14))
        assert np.all(ofdm_modulate(np.zeros(12), cfg) == 0)
        f = np.random.default_rng(2).standard_normal(24) + 0j
        x = ofdm_modulate(f, cfg)
        np.testing.assert_allclose(np.sum(np.abs(x) ** 2), np.sum(np.abs(f) ** 2))

    def test_framing(self):
        cfg = OfdmConfig(8, 2)
        with pytest.raises(FramingError):
            ofdm_modulate(np.zeros(7), cfg)
        with pytest.raises(FramingError):
            ofdm_demodulate(np.zeros(9), cfg)
        with pytest.raises(ParamError):
            OfdmConfig(8, 8)


@given(st.lists(st.integers(0, 15), min_size=1, max_size=50))
def test_downmap_identity_holds(labels):
    # f + (g - f) == g up to the rounding of one subtraction and one addition
    g = SymbolSequence(labels, build_qam(4))
    for f, m in (dither_downmap(g), dither_worst(g, "down")):
        np.testing.assert_allclose(f.symbols + m.values, g.symbols, rtol=0, atol=4e-16)

import numpy as np
import pytest

from fieldreuse import _pycore, core

compiled = pytest.importorskip("fieldreuse._core")


def _cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


QPSK = np.array([-1 - 1j, -1 + 1j, 1 - 1j, 1 + 1j]) / np.sqrt(2)


def test_backend_reported():
    assert core.BACKEND in ("compiled", "python")


@pytest.mark.parametrize("mu", [0.0, 0.01])
def test_dfe_run(rng, mu):
    y = _cplx(rng, 2, 410)
    qf = _cplx(rng, 2, 6) * 0.1
    qb = _cplx(rng, 3) * 0.1
    m = _cplx(rng, 400) * 0.2
    train = QPSK[rng.integers(0, 4, 150)]
    a = compiled.dfe_run(y, qf, qb, 5, 400, m, QPSK, train, mu)
    b = _pycore.dfe_run(y, qf, qb, 5, 400, m, QPSK, train, mu)
    for x, z in zip(a, b):
        np.testing.assert_allclose(x, z, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("pll", [(0.0, 0.0), (0.02, 1e-4)])
def test_rls_dfe(rng, pll):
    f = QPSK[rng.integers(0, 4, 600)]
    y = np.zeros((2, 605), dtype=complex)
    for k, h in enumerate(([1, 0.4, 0.2], [0.7, -0.3])):
        yk = np.convolve(f, h)
        y[k, :yk.size] = yk
    y = y + 0.05 * _cplx(rng, 2, 605)
    m = np.zeros(600, dtype=complex)
    a = compiled.rls_dfe(y, 4, 2, 3, 600, 0.98, 0.01, m, QPSK, f[:300], *pll)
    b = _pycore.rls_dfe(y, 4, 2, 3, 600, 0.98, 0.01, m, QPSK, f[:300], *pll)
    assert a[5] == b[5]
    for x, z in zip(a[:5], b[:5]):
        np.testing.assert_allclose(x, z, rtol=1e-8, atol=1e-10)


def test_rls_track(rng):
    g = QPSK[rng.integers(0, 4, 500)]
    y = np.vstack([np.convolve(g, [1, 0.5j, 0.1])[:500]]) + 0.01 * _cplx(rng, 1, 500)
    a = compiled.rls_track(y, g, 3, 0.95, 0.01)
    b = _pycore.rls_track(y, g, 3, 0.95, 0.01)
    for x, z in zip(a, b):
        np.testing.assert_allclose(x, z, rtol=1e-8, atol=1e-10)


def test_viterbi(rng):
    r = rng.integers(0, 2, 2 * 66)
    a = compiled.viterbi_hard(r, 64, (0o7, 0o5), 3)
    b = _pycore.viterbi_hard(r, 64, (0o7, 0o5), 3)
    np.testing.assert_array_equal(a, b)

"""Both kernel backends against each other and against plain references."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from echosonar import kernels


def test_fir_backends_bit_identical_and_match_convolution():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 1000))
    h = rng.standard_normal(21)
    a = kernels.fir_zero_phase_numba(x, h)
    b = kernels.fir_zero_phase_numpy(x, h, block=128)
    np.testing.assert_array_equal(a, b)
    ref = np.stack([np.convolve(r, h[::-1], mode="same") for r in x])  # correlation, centred
    np.testing.assert_allclose(a, ref, atol=1e-12)


def test_fir_1d_shape():
    x = np.arange(50.0)
    assert kernels.fir_zero_phase(x, np.array([0.0, 1.0, 0.0])).shape == (50,)
    np.testing.assert_array_equal(kernels.fir_zero_phase(x, np.array([0.0, 1.0, 0.0])), x)


def _render_reference(tx, delays, amps):
    n_win, n_echo, n_mic = delays.shape
    period = len(tx)
    out = np.zeros((n_mic, n_win * period))
    for m in range(n_mic):
        for w in range(n_win):
            for e in range(n_echo):
                for n in range(period):
                    src = w * period + n - delays[w, e, m]
                    if src >= 0:
                        out[m, w * period + n] += amps[w, e, m] * tx[src % period]
    return out


def test_render_backends_agree_with_reference():
    rng = np.random.default_rng(1)
    tx = rng.standard_normal(16)
    delays = rng.integers(0, 40, size=(5, 3, 2))
    amps = rng.uniform(-1, 1, size=(5, 3, 2))
    ref = _render_reference(tx, delays, amps)
    np.testing.assert_allclose(kernels.render_echoes_numba(tx, delays, amps), ref, atol=1e-12)
    np.testing.assert_array_equal(kernels.render_echoes_numba(tx, delays, amps),
                                  kernels.render_echoes_numpy(tx, delays, amps, chunk=2))


def test_render_static_echo_is_circular_shift():
    tx = np.random.default_rng(2).standard_normal(64)
    out = kernels.render_echoes(tx, np.full((4, 1, 1), 5), np.ones((4, 1, 1)))
    np.testing.assert_array_equal(out[0, 64:128], np.roll(tx, 5))
    np.testing.assert_array_equal(out[0, :5], 0.0)  # nothing before the first arrival


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(2, 9), st.integers(2, 9))
def test_im2col_col2im_backends(b, c, h, w):
    rng = np.random.default_rng(b * 1000 + c * 100 + h * 10 + w)
    x = rng.standard_normal((b, c, h, w))
    cols = kernels.im2col3x3_numba(x)
    np.testing.assert_array_equal(cols, kernels.im2col3x3_numpy(x))
    g = rng.standard_normal(cols.shape)
    np.testing.assert_allclose(kernels.col2im3x3_numba(g, x.shape), kernels.col2im3x3_numpy(g, x.shape),
                               atol=1e-12)
    # col2im is the adjoint of im2col: <im2col(x), g> == <x, col2im(g)>
    np.testing.assert_allclose(np.sum(cols * g), np.sum(x * kernels.col2im3x3(g, x.shape)), rtol=1e-10)


def test_im2col_matches_direct_convolution():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 2, 5, 6))
    k = rng.standard_normal((2, 3, 3))
    out = (kernels.im2col3x3(x) @ k.reshape(-1)).reshape(5, 6)
    xp = np.pad(x[0], ((0, 0), (1, 1), (1, 1)))
    ref = np.array([[np.sum(xp[:, i:i + 3, j:j + 3] * k) for j in range(6)] for i in range(5)])
    np.testing.assert_allclose(out, ref, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 9), st.integers(2, 9))
def test_maxpool_backends(h, w):
    rng = np.random.default_rng(h * 10 + w)
    x = rng.standard_normal((2, 3, h, w))
    o1, a1 = kernels.maxpool2x2_numba(x)
    o2, a2 = kernels.maxpool2x2_numpy(x)
    np.testing.assert_array_equal(o1, o2)
    np.testing.assert_array_equal(a1, a2)
    ref = x[:, :, : 2 * (h // 2), : 2 * (w // 2)].reshape(2, 3, h // 2, 2, w // 2, 2).max(axis=(3, 5))
    np.testing.assert_array_equal(o1, ref)
    d = rng.standard_normal(o1.shape)
    np.testing.assert_array_equal(kernels.maxpool2x2_backward_numba(d, a1, x.shape),
                                  kernels.maxpool2x2_backward_numpy(d, a2, x.shape))


def test_backend_flag_selects_numpy(monkeypatch):
    import importlib

    from echosonar import _backend

    monkeypatch.setenv("ECHOSONAR_BACKEND", "numpy")
    try:
        assert importlib.reload(_backend).BACKEND == "numpy"
        assert importlib.reload(kernels).fir_zero_phase is kernels.fir_zero_phase_numpy
    finally:
        monkeypatch.delenv("ECHOSONAR_BACKEND")
        importlib.reload(_backend)
        importlib.reload(kernels)


@pytest.mark.parametrize("var,val", [("ECHOSONAR_DISABLE_NUMBA", "1"), ("ECHOSONAR_BACKEND", "NumPy")])
def test_backend_env_parsing(monkeypatch, var, val):
    from echosonar import _backend

    monkeypatch.setenv(var, val)
    assert _backend._requested_backend() == "numpy"

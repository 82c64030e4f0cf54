"""Hot inner loops, each with a numba and a pure-numpy implementation.

The public names (``fir_zero_phase``, ``render_echoes``, ``im2col3x3``,
``col2im3x3``, ``maxpool2x2``, ``maxpool2x2_backward``) dispatch to whichever
backend :mod:`echosonar._backend` selected. The ``*_numba`` / ``*_numpy``
variants stay importable for tests and the benchmark script.

Both FIR paths accumulate taps in ascending order with separate multiply and
add, so their outputs are bit-identical. The echo renderer accumulates
echoes in ascending order in both paths for the same reason.
"""
from __future__ import annotations

import numpy as np

from ._backend import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# zero-phase FIR filtering
# ---------------------------------------------------------------------------


@njit(cache=True)
def _fir_rows_numba(xpad, h, out):
    n_rows, n_out = out.shape
    n_taps = h.shape[0]
    for r in range(n_rows):
        for n in range(n_out):
            acc = 0.0
            for k in range(n_taps):
                acc += h[k] * xpad[r, n + k]
            out[r, n] = acc


def _pad_rows(x: np.ndarray, half: int) -> np.ndarray:
    return np.pad(x, ((0, 0), (half, half)))


def fir_zero_phase_numba(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
    half = (len(h) - 1) // 2
    out = np.empty_like(x2)
    _fir_rows_numba(_pad_rows(x2, half), np.ascontiguousarray(h, dtype=np.float64), out)
    return out.reshape(np.shape(x))


def fir_zero_phase_numpy(x: np.ndarray, h: np.ndarray, block: int = 1 << 16) -> np.ndarray:
    x2 = np.atleast_2d(np.asarray(x, dtype=np.float64))
    half = (len(h) - 1) // 2
    xpad = _pad_rows(x2, half)
    n = x2.shape[1]
    out = np.empty_like(x2)
    for start in range(0, n, block):
        stop = min(start + block, n)
        acc = np.zeros((x2.shape[0], stop - start))
        for k, hk in enumerate(h):
            acc += hk * xpad[:, start + k: stop + k]
        out[:, start:stop] = acc
    return out.reshape(np.shape(x))


# ---------------------------------------------------------------------------
# echo rendering (nearest-sample delays, piecewise-constant per window)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _render_numba(tx, delays, amps, out):
    n_win, n_echo, n_mic = delays.shape
    period = tx.shape[0]
    for m in range(n_mic):
        for w in range(n_win):
            base = w * period
            for e in range(n_echo):
                a = amps[w, e, m]
                if a == 0.0:
                    continue
                d = delays[w, e, m]
                for n in range(period):
                    src = base + n - d
                    if src < 0:
                        continue
                    out[m, base + n] += a * tx[src % period]


def render_echoes_numba(tx: np.ndarray, delays: np.ndarray, amps: np.ndarray) -> np.ndarray:
    n_win, _, n_mic = delays.shape
    out = np.zeros((n_mic, n_win * len(tx)))
    _render_numba(
        np.ascontiguousarray(tx, dtype=np.float64),
        np.ascontiguousarray(delays, dtype=np.int64),
        np.ascontiguousarray(amps, dtype=np.float64),
        out,
    )
    return out


def render_echoes_numpy(tx: np.ndarray, delays: np.ndarray, amps: np.ndarray,
                        chunk: int = 256) -> np.ndarray:
    tx = np.asarray(tx, dtype=np.float64)
    period = len(tx)
    n_win, n_echo, n_mic = delays.shape
    out = np.zeros((n_mic, n_win, period))
    n = np.arange(period)
    for w0 in range(0, n_win, chunk):
        w1 = min(w0 + chunk, n_win)
        base = (np.arange(w0, w1) * period)[:, None, None]
        acc = np.zeros((w1 - w0, n_mic, period))
        for e in range(n_echo):
            d = delays[w0:w1, e, :, None]
            src = base + n - d
            contrib = amps[w0:w1, e, :, None] * tx[src % period]
            acc += np.where(src >= 0, contrib, 0.0)
        out[:, w0:w1] = acc.transpose(1, 0, 2)
    return out.reshape(n_mic, n_win * period)


# ---------------------------------------------------------------------------
# 3x3 "same" convolution helpers
# ---------------------------------------------------------------------------


@njit(cache=True)
def _im2col_numba(xpad, cols, H, W):
    B, C = xpad.shape[0], xpad.shape[1]
    for b in range(B):
        for i in range(H):
            for j in range(W):
                row = (b * H + i) * W + j
                for c in range(C):
                    for dy in range(3):
                        for dx in range(3):
                            cols[row, c * 9 + dy * 3 + dx] = xpad[b, c, i + dy, j + dx]


@njit(cache=True)
def _col2im_numba(cols, dxpad, H, W):
    B, C = dxpad.shape[0], dxpad.shape[1]
    for b in range(B):
        for i in range(H):
            for j in range(W):
                row = (b * H + i) * W + j
                for c in range(C):
                    for dy in range(3):
                        for dx in range(3):
                            dxpad[b, c, i + dy, j + dx] += cols[row, c * 9 + dy * 3 + dx]


def im2col3x3_numba(x: np.ndarray) -> np.ndarray:
    B, C, H, W = x.shape
    xpad = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((B * H * W, C * 9), dtype=x.dtype)
    _im2col_numba(xpad, cols, H, W)
    return cols


def im2col3x3_numpy(x: np.ndarray) -> np.ndarray:
    B, C, H, W = x.shape
    xpad = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(xpad, (3, 3), axis=(2, 3))
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(B * H * W, C * 9)


def col2im3x3_numba(cols: np.ndarray, shape: tuple) -> np.ndarray:
    B, C, H, W = shape
    dxpad = np.zeros((B, C, H + 2, W + 2), dtype=cols.dtype)
    _col2im_numba(np.ascontiguousarray(cols), dxpad, H, W)
    return dxpad[:, :, 1:-1, 1:-1].copy()


def col2im3x3_numpy(cols: np.ndarray, shape: tuple) -> np.ndarray:
    B, C, H, W = shape
    c6 = cols.reshape(B, H, W, C, 3, 3)
    dxpad = np.zeros((B, C, H + 2, W + 2), dtype=cols.dtype)
    for dy in range(3):
        for dx in range(3):
            dxpad[:, :, dy:dy + H, dx:dx + W] += c6[:, :, :, :, dy, dx].transpose(0, 3, 1, 2)
    return dxpad[:, :, 1:-1, 1:-1].copy()


# ---------------------------------------------------------------------------
# 2x2 max pooling (stride 2, trailing odd row/column dropped)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _maxpool_numba(x, out, arg):
    B, C, Ho, Wo = out.shape
    for b in range(B):
        for c in range(C):
            for i in range(Ho):
                for j in range(Wo):
                    best = x[b, c, 2 * i, 2 * j]
                    k = 0
                    for q in range(1, 4):
                        v = x[b, c, 2 * i + q // 2, 2 * j + q % 2]
                        if v > best:
                            best = v
                            k = q
                    out[b, c, i, j] = best
                    arg[b, c, i, j] = k


@njit(cache=True)
def _maxpool_back_numba(dout, arg, dx):
    B, C, Ho, Wo = dout.shape
    for b in range(B):
        for c in range(C):
            for i in range(Ho):
                for j in range(Wo):
                    q = arg[b, c, i, j]
                    dx[b, c, 2 * i + q // 2, 2 * j + q % 2] += dout[b, c, i, j]


def maxpool2x2_numba(x: np.ndarray):
    B, C, H, W = x.shape
    out = np.empty((B, C, H // 2, W // 2), dtype=x.dtype)
    arg = np.empty((B, C, H // 2, W // 2), dtype=np.int8)
    _maxpool_numba(np.ascontiguousarray(x), out, arg)
    return out, arg


def maxpool2x2_backward_numba(dout: np.ndarray, arg: np.ndarray, shape: tuple) -> np.ndarray:
    dx = np.zeros(shape, dtype=dout.dtype)
    _maxpool_back_numba(np.ascontiguousarray(dout), arg, dx)
    return dx


def _blocks(x: np.ndarray) -> np.ndarray:
    B, C, H, W = x.shape
    Ho, Wo = H // 2, W // 2
    v = x[:, :, : 2 * Ho, : 2 * Wo].reshape(B, C, Ho, 2, Wo, 2)
    return v.transpose(0, 1, 2, 4, 3, 5).reshape(B, C, Ho, Wo, 4)


def maxpool2x2_numpy(x: np.ndarray):
    blk = _blocks(x)
    arg = np.argmax(blk, axis=-1).astype(np.int8)
    out = np.take_along_axis(blk, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return out, arg


def maxpool2x2_backward_numpy(dout: np.ndarray, arg: np.ndarray, shape: tuple) -> np.ndarray:
    B, C, H, W = shape
    Ho, Wo = H // 2, W // 2
    blk = np.zeros((B, C, Ho, Wo, 4), dtype=dout.dtype)
    np.put_along_axis(blk, arg[..., None].astype(np.intp), dout[..., None], axis=-1)
    dx = np.zeros(shape, dtype=dout.dtype)
    dx[:, :, : 2 * Ho, : 2 * Wo] = (
        blk.reshape(B, C, Ho, Wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, 2 * Ho, 2 * Wo)
    )
    return dx


if USE_NUMBA:
    fir_zero_phase = fir_zero_phase_numba
    render_echoes = render_echoes_numba
    im2col3x3 = im2col3x3_numba
    col2im3x3 = col2im3x3_numba
    maxpool2x2 = maxpool2x2_numba
    maxpool2x2_backward = maxpool2x2_backward_numba
else:
    fir_zero_phase = fir_zero_phase_numpy
    render_echoes = render_echoes_numpy
    im2col3x3 = im2col3x3_numpy
    col2im3x3 = col2im3x3_numpy
    maxpool2x2 = maxpool2x2_numpy
    maxpool2x2_backward = maxpool2x2_backward_numpy

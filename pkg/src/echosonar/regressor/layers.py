"""Layer primitives with hand-written backward passes.

Each ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes the upstream gradient and the cache and returns input and parameter
gradients. Arrays keep the dtype they arrive in, so the same code trains in
float32 and runs gradient checks in float64.
"""
from __future__ import annotations

import numpy as np

from .. import kernels


# ---------------------------------------------------------------------------
# 3x3 convolution, stride 1, zero "same" padding
# ---------------------------------------------------------------------------


def conv3x3_forward(x, w, b):
    """x: (B, C, H, W); w: (Co, C*9) in [c, dy, dx] order; b: (Co,)."""
    B, _, H, W = x.shape
    cols = kernels.im2col3x3(x)
    out = cols @ w.T + b
    out = out.reshape(B, H, W, -1).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), (cols, x.shape, w)


def conv3x3_backward(dout, cache, need_dx: bool = True):
    cols, shape, w = cache
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, dout.shape[1])
    dw = d2.T @ cols
    db = d2.sum(axis=0)
    dx = kernels.col2im3x3(d2 @ w, shape) if need_dx else None
    return dx, dw, db


# ---------------------------------------------------------------------------
# batch normalisation over (batch, height, width) per channel
# ---------------------------------------------------------------------------


BN_EPS = 1e-5


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train: bool, momentum: float = 0.1):
    """Updates ``running_mean`` / ``running_var`` in place when training."""
    if train:
        mu = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        n = x.size // x.shape[1]
        running_mean *= 1 - momentum
        running_mean += momentum * mu
        running_var *= 1 - momentum
        running_var += momentum * var * (n / max(n - 1, 1))
    else:
        mu, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mu[None, :, None, None]) * inv[None, :, None, None]
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return out, (xhat, inv, gamma, train)


def batchnorm_backward(dout, cache):
    xhat, inv, gamma, train = cache
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma[None, :, None, None]
    if train:
        m = dout.size // dout.shape[1]
        dx = (inv[None, :, None, None] / m) * (
            m * dxhat
            - dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
            - xhat * (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
        )
    else:
        dx = dxhat * inv[None, :, None, None]
    return dx, dgamma, dbeta


# ---------------------------------------------------------------------------
# pointwise and pooling
# ---------------------------------------------------------------------------


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def maxpool_forward(x):
    out, arg = kernels.maxpool2x2(x)
    return out, (arg, x.shape)


def maxpool_backward(dout, cache):
    arg, shape = cache
    return kernels.maxpool2x2_backward(np.ascontiguousarray(dout), arg, shape)


# ---------------------------------------------------------------------------
# LSTM (gate order i, f, g, o), returns the last hidden state
# ---------------------------------------------------------------------------


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_forward(x, wx, wh, b):
    """x: (B, T, D); wx: (D, 4H); wh: (H, 4H); b: (4H,). Returns h_T (B, H)."""
    B, T, _ = x.shape
    H = wh.shape[0]
    h = np.zeros((B, H), dtype=x.dtype)
    c = np.zeros((B, H), dtype=x.dtype)
    xw = (x.reshape(B * T, -1) @ wx).reshape(B, T, 4 * H) + b
    steps = []
    for t in range(T):
        a = xw[:, t] + h @ wh
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H:2 * H])
        g = np.tanh(a[:, 2 * H:3 * H])
        o = _sigmoid(a[:, 3 * H:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        steps.append((i, f, g, o, c_prev, h_prev, tc))
    return h, (x, wx, wh, steps)


def lstm_backward(dh_last, cache):
    x, wx, wh, steps = cache
    B, T, D = x.shape
    H = wh.shape[0]
    dxw = np.empty((B, T, 4 * H), dtype=dh_last.dtype)
    dwh = np.zeros_like(wh)
    dh = dh_last
    dc = np.zeros_like(dh_last)
    for t in range(T - 1, -1, -1):
        i, f, g, o, c_prev, h_prev, tc = steps[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        da = np.concatenate([
            di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g), do * o * (1.0 - o),
        ], axis=1)
        dxw[:, t] = da
        dwh += h_prev.T @ da
        dh = da @ wh.T
        dc = dc * f
    flat = dxw.reshape(B * T, 4 * H)
    dwx = x.reshape(B * T, D).T @ flat
    db = flat.sum(axis=0)
    dx = (flat @ wx.T).reshape(B, T, D)
    return dx, dwx, dwh, db


# ---------------------------------------------------------------------------
# dense
# ---------------------------------------------------------------------------


def linear_forward(x, w, b):
    return x @ w.T + b, (x, w)


def linear_backward(dout, cache):
    x, w = cache
    return dout @ w, dout.T @ x, dout.sum(axis=0)

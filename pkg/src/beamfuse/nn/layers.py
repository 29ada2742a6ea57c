"""Forward/backward pairs for the layers of the fusion classifier.

Every ``*_forward`` returns ``(out, cache)``; the matching ``*_backward``
takes the upstream gradient and the cache and returns input gradients
followed by parameter gradients.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ShapeError


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(dp: np.ndarray, p: np.ndarray, axis: int = -1) -> np.ndarray:
    return p * (dp - (dp * p).sum(axis=axis, keepdims=True))


# -- attention -------------------------------------------------------------


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """softmax(Q K^T / sqrt(d_k)) V over the last two axes."""
    return attention_forward(q, k, v)[0]


def attention_forward(q, k, v):
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2] or q.shape[-1] == 0:
        raise ShapeError(f"attention shapes do not conform: Q{q.shape} K{k.shape} V{v.shape}")
    scale = 1.0 / math.sqrt(q.shape[-1])
    p = softmax(q @ np.swapaxes(k, -1, -2) * scale)
    return p @ v, (q, k, v, p, scale)


def attention_backward(dout, cache):
    q, k, v, p, scale = cache
    dv = np.swapaxes(p, -1, -2) @ dout
    ds = softmax_backward(dout @ np.swapaxes(v, -1, -2), p) * scale
    dq = ds @ k
    dk = np.swapaxes(ds, -1, -2) @ q
    return dq, dk, dv


def _project_heads(x, w):
    """(..., n, d) with (h, d, k) -> (..., h, n, k) as one matmul."""
    h, d, k = w.shape
    y = x @ w.transpose(1, 0, 2).reshape(d, h * k)
    return np.swapaxes(y.reshape(y.shape[:-1] + (h, k)), -3, -2)


def _merge_heads(dh):
    """(..., h, n, k) -> (..., n, h * k), the head concatenation."""
    flat = np.swapaxes(dh, -3, -2)
    return flat.reshape(flat.shape[:-2] + (-1,))


def multi_head_forward(q, k, v, wq, wk, wv, wo):
    """Concat_i(Attention(Q Wq_i, K Wk_i, V Wv_i)) Wo.

    ``wq, wk, wv`` have shape (heads, d_model, d_k); ``wo`` (heads * d_v, d_model).
    ``q, k, v`` have shape (..., tokens, d_model).
    """
    heads, acache = attention_forward(_project_heads(q, wq), _project_heads(k, wk), _project_heads(v, wv))
    concat = _merge_heads(heads)
    return concat @ wo, (q, k, v, wq, wk, wv, wo, acache, concat)


def multi_head_backward(dout, cache):
    q, k, v, wq, wk, wv, wo, acache, concat = cache
    h, _, dv_dim = wv.shape
    dwo = _sum_outer(concat, dout)
    dconcat = dout @ wo.T
    dheads = np.swapaxes(dconcat.reshape(dconcat.shape[:-1] + (h, dv_dim)), -3, -2)
    dx, dw = [], []
    for x, w, g in zip((q, k, v), (wq, wk, wv), attention_backward(dheads, acache)):
        hh, d, kk = w.shape
        gf = _merge_heads(g)
        dw.append(_sum_outer(x, gf).reshape(d, hh, kk).transpose(1, 0, 2))
        dx.append(gf @ w.transpose(1, 0, 2).reshape(d, hh * kk).T)
    return dx[0], dx[1], dx[2], dw[0], dw[1], dw[2], dwo


def _sum_outer(a, b):
    """sum over leading axes of a^T b for (..., n, i) and (..., n, j)."""
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


# -- layer norm ------------------------------------------------------------


def layer_norm_forward(x, gamma, beta, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * gamma + beta, (xhat, inv, gamma)


def layer_norm_backward(dout, cache):
    xhat, inv, gamma = cache
    dgamma = (dout * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    dbeta = dout.reshape(-1, dout.shape[-1]).sum(axis=0)
    dxhat = dout * gamma
    d = xhat.shape[-1]
    dx = inv / d * (d * dxhat - dxhat.sum(axis=-1, keepdims=True) - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
    return dx, dgamma, dbeta


# -- dense / activations ---------------------------------------------------


def dense_forward(x, w, b):
    return x @ w + b, (x, w)


def dense_backward(dout, cache):
    x, w = cache
    return dout @ w.T, _sum_outer(x, dout), dout.reshape(-1, dout.shape[-1]).sum(axis=0)


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def dropout_forward(x, p: float, rng: np.random.Generator | None):
    """Inverted dropout; identity when ``rng`` is None (eval mode) or p == 0."""
    if rng is None or p <= 0:
        return x, None
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask.astype(x.dtype)


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


# -- 2-D convolution (same padding, stride 1, channels-last) ---------------


def _im2col(x, k):
    """(m, h, w, c) -> (m*h*w, c*k*k) patches, column order (c, ki, kj)."""
    m, h, w, c = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))  # (m, h, w, c, k, k)
    return win.reshape(m * h * w, c * k * k)


def _col2im(dcols, shape, k):
    m, h, w, c = shape
    p = k // 2
    dcols = dcols.reshape(m, h, w, c, k, k)
    dxp = np.zeros((m, h + 2 * p, w + 2 * p, c), dtype=dcols.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + h, j:j + w, :] += dcols[..., i, j]
    return dxp[:, p:p + h, p:p + w, :]


def conv2d_forward(x, w, b):
    """x (m, h, w, c_in), w (c_out, c_in, k, k), b (c_out,) -> (m, h, w, c_out)."""
    m, h, wd, c = x.shape
    f, c2, k, _ = w.shape
    if c != c2:
        raise ShapeError(f"conv expects {c2} input channels, got {c}")
    cols = _im2col(x, k)
    out = cols @ w.reshape(f, -1).T + b
    return out.reshape(m, h, wd, f), (cols, x.shape, w)


def conv2d_backward(dout, cache):
    cols, xshape, w = cache
    f, _, k, _ = w.shape
    d2 = dout.reshape(-1, f)
    dw = (d2.T @ cols).reshape(w.shape)
    db = d2.sum(axis=0)
    dx = _col2im(d2 @ w.reshape(f, -1), xshape, k)
    return dx, dw, db


# -- LSTM ------------------------------------------------------------------


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_forward(x, wx, wh, b):
    """x (n, t, d) -> hidden states (n, t, hid); gate order i, f, g, o."""
    n, t, _ = x.shape
    hid = wh.shape[0]
    h = np.zeros((n, hid), dtype=x.dtype)
    c = np.zeros((n, hid), dtype=x.dtype)
    hs = np.empty((n, t, hid), dtype=x.dtype)
    steps = []
    xw = x @ wx + b
    for s in range(t):
        a = xw[:, s] + h @ wh
        i = _sigmoid(a[:, :hid])
        f = _sigmoid(a[:, hid:2 * hid])
        g = np.tanh(a[:, 2 * hid:3 * hid])
        o = _sigmoid(a[:, 3 * hid:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, s] = h
        steps.append((i, f, g, o, c_prev, h_prev, tc))
    return hs, (x, wx, wh, steps)


def lstm_backward(dhs, cache):
    x, wx, wh, steps = cache
    n, t, _ = x.shape
    hid = wh.shape[0]
    dx_w = np.empty((n, t, 4 * hid), dtype=x.dtype)
    dwh = np.zeros_like(wh)
    dh_next = np.zeros((n, hid), dtype=x.dtype)
    dc_next = np.zeros((n, hid), dtype=x.dtype)
    for s in reversed(range(t)):
        i, f, g, o, c_prev, h_prev, tc = steps[s]
        dh = dhs[:, s] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1 - tc**2)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        da = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g**2), do * o * (1 - o)], axis=1)
        dx_w[:, s] = da
        dwh += h_prev.T @ da
        dh_next = da @ wh.T
        dc_next = dc * f
    dwx = _sum_outer(x, dx_w)
    db = dx_w.reshape(-1, 4 * hid).sum(axis=0)
    return dx_w @ wx.T, dwx, dwh, db


# -- loss ------------------------------------------------------------------


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy; returns (loss, probabilities, dlogits)."""
    p = softmax(logits)
    n = logits.shape[0]
    loss = -np.log(np.maximum(p[np.arange(n), labels], 1e-300)).mean()
    d = p.copy()
    d[np.arange(n), labels] -= 1.0
    return float(loss), p, d / n

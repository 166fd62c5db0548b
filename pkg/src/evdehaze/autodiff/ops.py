"""Differentiable operators. Feature maps are (N, C, H, W)."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DataError
from .engine import Var, as_var, make_node


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _pair(a, b) -> tuple[Var, Var]:
    """Coerce operands; plain numbers/arrays take the dtype of the Var side."""
    if isinstance(a, Var) and isinstance(b, Var):
        return a, b
    if isinstance(a, Var):
        return a, Var(np.asarray(b, dtype=a.dtype))
    if isinstance(b, Var):
        return Var(np.asarray(a, dtype=b.dtype)), b
    return Var(a), Var(b)


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Var:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return make_node(a.value + b.value, (a, b),
                     lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Var:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return make_node(a.value - b.value, (a, b),
                     lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Var:
    a, b = _pair(a, b)
    av, bv = a.value, b.value
    return make_node(av * bv, (a, b),
                     lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def square(x: Var) -> Var:
    xv = x.value
    return make_node(xv * xv, (x,), lambda g: (2.0 * xv * g,))


def abs_(x: Var) -> Var:
    xv = x.value
    return make_node(np.abs(xv), (x,), lambda g: (np.sign(xv) * g,))


def relu(x: Var) -> Var:
    mask = x.value > 0
    return make_node(np.where(mask, x.value, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def silu(x: Var) -> Var:
    xv = x.value
    s = 0.5 * (1.0 + np.tanh(0.5 * xv))
    return make_node(xv * s, (x,), lambda g: (g * (s * (1.0 + xv * (1.0 - s))),))


# ---------------------------------------------------------------------------
# reductions and shape


def sum_(x: Var, axis=None, keepdims=False) -> Var:
    shape = x.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return make_node(np.sum(x.value, axis=axis, keepdims=keepdims), (x,), bw)


def mean(x: Var, axis=None, keepdims=False) -> Var:
    n = x.value.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return mul(sum_(x, axis, keepdims), 1.0 / n)


def reshape(x: Var, shape) -> Var:
    old = x.shape
    return make_node(x.value.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Var, axes) -> Var:
    inv = np.argsort(axes)
    return make_node(x.value.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def concat(xs, axis=1) -> Var:
    xs = [as_var(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]
    return make_node(np.concatenate([x.value for x in xs], axis=axis), tuple(xs),
                     lambda g: tuple(np.split(g, cuts, axis=axis)))


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    av, bv = a.value, b.value

    def bw(g):
        ga = g @ np.swapaxes(bv, -1, -2)
        gb = np.swapaxes(av, -1, -2) @ g
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return make_node(av @ bv, (a, b), bw)


def linear(x: Var, weight: Var, bias=None) -> Var:
    """``x @ weight + bias`` for x (..., Din), weight (Din, Dout)."""
    if x.shape[-1] != weight.shape[0]:
        raise DataError(f"linear: input width {x.shape[-1]} != weight rows {weight.shape[0]}")
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def softmax(x: Var, axis=-1) -> Var:
    z = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    return make_node(y, (x,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


# ---------------------------------------------------------------------------
# spatial


def conv2d(x: Var, weight: Var, bias=None, stride: int = 1, pad: int = 0) -> Var:
    """Direct cross-correlation. x (N, Cin, H, W), weight (Cout, Cin, k, k)."""
    x, weight = as_var(x), as_var(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise DataError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    n, cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if wcin != cin:
        raise DataError(f"conv2d channel mismatch: input has {cin}, weight expects {wcin}")
    if h + 2 * pad < kh or w + 2 * pad < kw:
        raise DataError(f"conv2d kernel {kh}x{kw} larger than padded input {h + 2 * pad}x{w + 2 * pad}")
    if stride < 1:
        raise DataError("stride must be >= 1")
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    xv = x.value
    if pad:
        xv = np.pad(xv, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xv, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # im2col rows ordered (n, ho, wo), columns (cin, kh, kw) to match the weight layout
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, cin * kh * kw)
    wv = weight.value
    wm = wv.reshape(cout, cin * kh * kw)
    out = (cols @ wm.T).reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)
    parents = [x, weight]
    if bias is not None:
        bias = as_var(bias)
        out = out + bias.value.reshape(1, cout, 1, 1)
        parents.append(bias)
    out = np.ascontiguousarray(out)
    padded_shape = xv.shape

    def bw(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * ho * wo, cout)
        gw = (g2.T @ cols).reshape(wv.shape)
        # (kh, kw, n, cin, ho, wo) so each tap below is one contiguous block
        gcol = np.ascontiguousarray((g2 @ wm).reshape(n, ho, wo, cin, kh, kw).transpose(4, 5, 0, 3, 1, 2))
        gx = np.zeros(padded_shape, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                gx[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcol[i, j]
        if pad:
            gx = gx[:, :, pad:pad + h, pad:pad + w]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return make_node(out, tuple(parents), bw)


def avg_pool2(x: Var) -> Var:
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise DataError(f"avg_pool2 needs even extents, got {h}x{w}")
    out = x.value.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))
    return make_node(out, (x,), lambda g: (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25,))


def upsample2(x: Var) -> Var:
    """Nearest-neighbour 2x upsampling."""
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.value, 2, axis=2), 2, axis=3)
    return make_node(out, (x,), lambda g: (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),))


def linear_resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Half-pixel-centre linear interpolation weights, edge-clamped."""
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        src = (i + 0.5) * scale - 0.5
        src = min(max(src, 0.0), n_in - 1.0)
        lo = int(math.floor(src))
        hi = min(lo + 1, n_in - 1)
        f = src - lo
        m[i, lo] += 1 - f
        m[i, hi] += f
    return m


def resize_bilinear(x: Var, h_out: int, w_out: int) -> Var:
    n, c, h, w = x.shape
    mh = linear_resize_matrix(h, h_out).astype(x.dtype)
    mw = linear_resize_matrix(w, w_out).astype(x.dtype)
    out = np.einsum("ph,nchw,qw->ncpq", mh, x.value, mw, optimize=True)
    return make_node(out, (x,), lambda g: (np.einsum("ph,ncpq,qw->nchw", mh, g, mw, optimize=True),))


def pool_to(x: Var, h_out: int, w_out: int) -> Var:
    """Repeated 2x average pooling down to (h_out, w_out)."""
    while x.shape[2] > h_out or x.shape[3] > w_out:
        x = avg_pool2(x)
    if x.shape[2:] != (h_out, w_out):
        raise DataError(f"cannot pool {x.shape[2:]} to {(h_out, w_out)}")
    return x


# ---------------------------------------------------------------------------
# attention


def cross_attention(x_e: Var, x_feat: Var, w_q: Var, w_k: Var, w_v: Var, heads: int = 1,
                    return_weights=False):
    """Queries from ``x_e`` tokens, keys/values from ``x_feat`` tokens.

    x_e (N, C, H, W), x_feat (N, C2, H, W); w_q (C, d), w_k (C2, d),
    w_v (C2, dv). Returns (N, dv, H, W). Logits are scaled by sqrt(d / heads).
    """
    x_e, x_feat = as_var(x_e), as_var(x_feat)
    if x_e.ndim == 3:
        x_e = reshape(x_e, (1,) + x_e.shape)
    if x_feat.ndim == 3:
        x_feat = reshape(x_feat, (1,) + x_feat.shape)
    n, c, h, w = x_e.shape
    n2, c2, h2, w2 = x_feat.shape
    if (h, w) != (h2, w2) or n != n2:
        raise DataError(f"cross_attention spatial mismatch: {x_e.shape} vs {x_feat.shape}")
    d, dv = w_q.shape[1], w_v.shape[1]
    if d % heads or dv % heads:
        raise DataError("projection widths must divide evenly among heads")
    tq = transpose(reshape(x_e, (n, c, h * w)), (0, 2, 1))
    tk = transpose(reshape(x_feat, (n, c2, h * w)), (0, 2, 1))
    q = linear(tq, w_q)
    k = linear(tk, w_k)
    v = linear(tk, w_v)
    dh, dvh = d // heads, dv // heads

    def split(t, width):
        return transpose(reshape(t, (n, h * w, heads, width)), (0, 2, 1, 3))

    q, k, v = split(q, dh), split(k, dh), split(v, dvh)
    logits = mul(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    attn = softmax(logits, axis=-1)
    out = matmul(attn, v)  # n, heads, tokens, dvh
    out = reshape(transpose(out, (0, 2, 1, 3)), (n, h * w, dv))
    out = reshape(transpose(out, (0, 2, 1)), (n, dv, h, w))
    return (out, attn) if return_weights else out

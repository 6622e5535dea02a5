"""Spatial primitives: convolution, pooling, resampling, pixel shuffle.

All ops act on single images laid out channel-first (c, h, w); batching is
the caller's loop.  Convolution is cross-correlation (no kernel flip) with
zero padding.  Forward variants ``*_fwd`` return (out, cache) for the
matching ``*_bwd``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class ConvParams:
    """out_ch × in_ch × k × k kernel with optional bias, stride, padding."""

    weight: np.ndarray
    bias: Optional[np.ndarray] = None
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.weight.ndim != 4 or self.weight.shape[2] != self.weight.shape[3]:
            raise ValueError(f"kernel must be out×in×k×k square, got {self.weight.shape}")
        if self.bias is not None and self.bias.shape != (self.weight.shape[0],):
            raise ValueError("bias length must equal out_ch")
        if self.stride < 1 or self.padding < 0:
            raise ValueError("stride must be ≥ 1 and padding ≥ 0")

    @property
    def ksize(self):
        return self.weight.shape[2]


def same_padding(k):
    """Padding giving 'same' output size for stride 1 and odd k."""
    return (k - 1) // 2


def _out_extent(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1


def _im2col(xp, k, stride, h_out, w_out):
    # column matrix (cin·k², h_out·w_out); one strided slice per kernel tap
    cin = xp.shape[0]
    cols = np.empty((cin, k, k, h_out, w_out), dtype=xp.dtype)
    for dy in range(k):
        for dx in range(k):
            cols[:, dy, dx] = xp[:, dy : dy + stride * h_out : stride, dx : dx + stride * w_out : stride]
    return cols.reshape(cin * k * k, h_out * w_out)


def conv2d(p: ConvParams, x):
    y, _ = conv2d_fwd(p, x)
    return y


def conv2d_fwd(p: ConvParams, x):
    cout, cin, k, _ = p.weight.shape
    if x.ndim != 3 or x.shape[0] != cin:
        raise ValueError(f"expected input ({cin}, h, w), got {x.shape}")
    h, w = x.shape[1:]
    h_out = _out_extent(h, k, p.stride, p.padding)
    w_out = _out_extent(w, k, p.stride, p.padding)
    if h_out < 1 or w_out < 1:
        raise ValueError(f"kernel {k} with stride {p.stride}, pad {p.padding} exceeds input {h}×{w}")
    if p.padding:
        xp = np.pad(x, ((0, 0), (p.padding, p.padding), (p.padding, p.padding)))
    else:
        xp = x
    cols = _im2col(xp, k, p.stride, h_out, w_out)
    y = (p.weight.reshape(cout, -1) @ cols).reshape(cout, h_out, w_out)
    if p.bias is not None:
        y = y + p.bias[:, None, None]
    return y, (p, x.shape, cols)


def conv2d_bwd(cache, gy):
    """Adjoints (gx, gweight, gbias); gbias is None for bias-free convs."""
    p, x_shape, cols = cache
    cout, cin, k, _ = p.weight.shape
    h, w = x_shape[1:]
    h_out, w_out = gy.shape[1:]
    gyf = gy.reshape(cout, -1)
    gw = (gyf @ cols.T).reshape(p.weight.shape)
    gb = gyf.sum(axis=1) if p.bias is not None else None
    gcols = (p.weight.reshape(cout, -1).T @ gyf).reshape(cin, k, k, h_out, w_out)
    gxp = np.zeros((cin, h + 2 * p.padding, w + 2 * p.padding), dtype=gy.dtype)
    for dy in range(k):
        for dx in range(k):
            gxp[:, dy : dy + p.stride * h_out : p.stride, dx : dx + p.stride * w_out : p.stride] += gcols[:, dy, dx]
    if p.padding:
        gx = gxp[:, p.padding : p.padding + h, p.padding : p.padding + w]
    else:
        gx = gxp
    return gx, gw, gb


# ---------------------------------------------------------------------------
# 2×2 max pooling, stride 2
# ---------------------------------------------------------------------------

def max_pool2d(x):
    y, _ = max_pool2d_fwd(x)
    return y


def max_pool2d_fwd(x):
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"max_pool2d needs even extents, got {h}×{w}")
    win = x.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h // 2, w // 2, 4)
    arg = np.argmax(win, axis=-1)  # first occurrence wins ties (row-major window order)
    y = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return y, (x.shape, arg)


def max_pool2d_bwd(cache, gy):
    (c, h, w), arg = cache
    gwin = np.zeros((c, h // 2, w // 2, 4), dtype=gy.dtype)
    np.put_along_axis(gwin, arg[..., None], gy[..., None], axis=-1)
    return gwin.reshape(c, h // 2, w // 2, 2, 2).transpose(0, 1, 3, 2, 4).reshape(c, h, w)


# ---------------------------------------------------------------------------
# bilinear ×2 upsampling (half-pixel centers, borders clamped)
# ---------------------------------------------------------------------------

def _interp_matrix(n, s, dtype):
    # row i holds the two taps for output center (i + 0.5)/s - 0.5
    src = (np.arange(s * n, dtype=np.float64) + 0.5) / s - 0.5
    src = np.clip(src, 0.0, n - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    frac = src - lo
    m = np.zeros((s * n, n), dtype=np.float64)
    rows = np.arange(s * n)
    m[rows, lo] += 1.0 - frac
    m[rows, hi] += frac
    return m.astype(dtype)


def bilinear_upsample(x, s=2):
    y, _ = bilinear_upsample_fwd(x, s)
    return y


def bilinear_upsample_fwd(x, s=2):
    c, h, w = x.shape
    ry = _interp_matrix(h, s, x.dtype)
    cx = _interp_matrix(w, s, x.dtype)
    y = ry @ x @ cx.T
    return y, (ry, cx)


def bilinear_upsample_bwd(cache, gy):
    ry, cx = cache
    return ry.T @ gy @ cx


def nearest_upsample(x, s=2):
    """Nearest-neighbor ×s used by the plain pyramid baselines (forward only)."""
    return np.repeat(np.repeat(x, s, axis=1), s, axis=2)


# ---------------------------------------------------------------------------
# pixel shuffle
# ---------------------------------------------------------------------------

def pixel_shuffle(x, s=2):
    y, _ = pixel_shuffle_fwd(x, s)
    return y


def pixel_shuffle_fwd(x, s=2):
    cs, h, w = x.shape
    if cs % (s * s):
        raise ValueError(f"channel count {cs} not divisible by s²={s * s}")
    q = cs // (s * s)
    # out[g, s·y+dy, s·x+dx] = in[g·s² + dy·s + dx, y, x]
    y = x.reshape(q, s, s, h, w).transpose(0, 3, 1, 4, 2).reshape(q, s * h, s * w)
    return y, (x.shape, s)


def pixel_shuffle_bwd(cache, gy):
    (cs, h, w), s = cache
    q = cs // (s * s)
    return gy.reshape(q, h, s, w, s).transpose(0, 2, 4, 1, 3).reshape(cs, h, w)


def pixel_unshuffle(x, s=2):
    """Inverse rearrangement of pixel_shuffle."""
    q, sh, sw = x.shape
    if sh % s or sw % s:
        raise ValueError(f"spatial extents {sh}×{sw} not divisible by s={s}")
    return x.reshape(q, sh // s, s, sw // s, s).transpose(0, 2, 4, 1, 3).reshape(q * s * s, sh // s, sw // s)


# ---------------------------------------------------------------------------
# channel concatenation
# ---------------------------------------------------------------------------

def concat_channels(a, b):
    y, _ = concat_channels_fwd(a, b)
    return y


def concat_channels_fwd(a, b):
    if a.shape[1:] != b.shape[1:]:
        raise ValueError(f"spatial extents disagree: {a.shape} vs {b.shape}")
    return np.concatenate([a, b], axis=0), a.shape[0]


def concat_channels_bwd(cache, gy):
    c1 = cache
    return gy[:c1], gy[c1:]

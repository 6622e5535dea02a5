"""Brute-force reference implementations used only for verification.

Everything here is written as straight-line nested loops over Python
scalars, deliberately sharing no code with the production kernels it
checks.  Slow and obvious beats fast and clever in this file.
"""

from __future__ import annotations

import math

import numpy as np


def matmul_oracle(a, b):
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += float(a[i, t]) * float(b[t, j])
            out[i, j] = acc
    return out


def softmax_oracle(v):
    """1-D softmax by the direct exp/sum formula (max-shifted)."""
    hi = max(float(x) for x in v)
    exps = [math.exp(float(x) - hi) for x in v]
    total = sum(exps)
    return np.array([e / total for e in exps])


def layer_norm_oracle(v, gain, shift, eps):
    n = len(v)
    mean = sum(float(x) for x in v) / n
    var = sum((float(x) - mean) ** 2 for x in v) / n
    out = np.zeros(n, dtype=np.float64)
    for i in range(n):
        out[i] = (float(v[i]) - mean) / math.sqrt(var + eps) * float(gain[i]) + float(shift[i])
    return out


def conv2d_oracle(w, b, x, stride, pad):
    """Six-deep loop convolution (cross-correlation, zero padding)."""
    cout, cin, k, _ = w.shape
    _, h, wd = x.shape
    h_out = (h + 2 * pad - k) // stride + 1
    w_out = (wd + 2 * pad - k) // stride + 1
    out = np.zeros((cout, h_out, w_out), dtype=np.float64)
    for co in range(cout):
        for oy in range(h_out):
            for ox in range(w_out):
                acc = 0.0 if b is None else float(b[co])
                for ci in range(cin):
                    for dy in range(k):
                        for dx in range(k):
                            iy = oy * stride + dy - pad
                            ix = ox * stride + dx - pad
                            if 0 <= iy < h and 0 <= ix < wd:
                                acc += float(w[co, ci, dy, dx]) * float(x[ci, iy, ix])
                out[co, oy, ox] = acc
    return out


def max_pool2d_oracle(x):
    c, h, w = x.shape
    out = np.zeros((c, h // 2, w // 2), dtype=np.float64)
    for ci in range(c):
        for oy in range(h // 2):
            for ox in range(w // 2):
                best = -math.inf
                for dy in range(2):
                    for dx in range(2):
                        best = max(best, float(x[ci, 2 * oy + dy, 2 * ox + dx]))
                out[ci, oy, ox] = best
    return out


def bilinear_upsample_oracle(x, s):
    """Per-pixel two-tap interpolation from the half-pixel-center formula."""
    c, h, w = x.shape
    out = np.zeros((c, s * h, s * w), dtype=np.float64)
    for ci in range(c):
        for oy in range(s * h):
            for ox in range(s * w):
                sy = min(max((oy + 0.5) / s - 0.5, 0.0), h - 1)
                sx = min(max((ox + 0.5) / s - 0.5, 0.0), w - 1)
                y0, x0 = int(math.floor(sy)), int(math.floor(sx))
                y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
                fy, fx = sy - y0, sx - x0
                out[ci, oy, ox] = (
                    (1 - fy) * (1 - fx) * float(x[ci, y0, x0])
                    + (1 - fy) * fx * float(x[ci, y0, x1])
                    + fy * (1 - fx) * float(x[ci, y1, x0])
                    + fy * fx * float(x[ci, y1, x1])
                )
    return out


def pixel_shuffle_oracle(x, s):
    cs, h, w = x.shape
    q = cs // (s * s)
    out = np.zeros((q, s * h, s * w), dtype=np.float64)
    for g in range(q):
        for y in range(h):
            for x_ in range(w):
                for dy in range(s):
                    for dx in range(s):
                        out[g, s * y + dy, s * x_ + dx] = float(x[g * s * s + dy * s + dx, y, x_])
    return out


def compatibility_oracle(queries, keys, scale_dim):
    """Scaled cosine-similarity attention, one scalar at a time.

    Returns the n_keys × n_queries map whose columns sum to 1.
    """
    n_q, d = queries.shape
    _, n_k = keys.shape
    scale = math.sqrt(scale_dim)
    out = np.zeros((n_k, n_q), dtype=np.float64)
    for qi in range(n_q):
        scores = []
        for ki in range(n_k):
            norm = math.sqrt(sum(float(keys[t, ki]) ** 2 for t in range(d)))
            norm = max(norm, 1e-12)
            dot = sum(float(queries[qi, t]) * float(keys[t, ki]) / norm for t in range(d))
            scores.append(scale * dot)
        hi = max(scores)
        exps = [math.exp(sc - hi) for sc in scores]
        total = sum(exps)
        for ki in range(n_k):
            out[ki, qi] = exps[ki] / total
    return out


def attention_pool_oracle(values, attn):
    """values (c × n_keys) · attn (n_keys × n_q), one scalar at a time."""
    c, n_k = values.shape
    _, n_q = attn.shape
    out = np.zeros((c, n_q), dtype=np.float64)
    for ci in range(c):
        for qi in range(n_q):
            acc = 0.0
            for ki in range(n_k):
                acc += float(values[ci, ki]) * float(attn[ki, qi])
            out[ci, qi] = acc
    return out


def reassemble_up_oracle(coarse, kernels, s, k):
    """Weighted k×k neighborhood of coarse(⌊x/s⌋, ⌊y/s⌋), zero padded."""
    c, h, w = coarse.shape
    _, sh, sw = kernels.shape
    r = (k - 1) // 2
    out = np.zeros((c, sh, sw), dtype=np.float64)
    for ci in range(c):
        for oy in range(sh):
            for ox in range(sw):
                cy, cx = oy // s, ox // s
                acc = 0.0
                for dy in range(k):
                    for dx in range(k):
                        iy, ix = cy + dy - r, cx + dx - r
                        if 0 <= iy < h and 0 <= ix < w:
                            acc += float(kernels[dy * k + dx, oy, ox]) * float(coarse[ci, iy, ix])
                out[ci, oy, ox] = acc
    return out


def reassemble_down_oracle(fine, kernels, s, k):
    """Weighted k×k neighborhood of fine(s·x, s·y), zero padded."""
    c, sh, sw = fine.shape
    _, h, w = kernels.shape
    r = (k - 1) // 2
    out = np.zeros((c, h, w), dtype=np.float64)
    for ci in range(c):
        for oy in range(h):
            for ox in range(w):
                cy, cx = s * oy, s * ox
                acc = 0.0
                for dy in range(k):
                    for dx in range(k):
                        iy, ix = cy + dy - r, cx + dx - r
                        if 0 <= iy < sh and 0 <= ix < sw:
                            acc += float(kernels[dy * k + dx, oy, ox]) * float(fine[ci, iy, ix])
                out[ci, oy, ox] = acc
    return out

"""Walk through one guided fusion site: predict per-position resampling
kernels from content, reassemble, gate, smooth. Then show the two switches
that turn the guided op back into its plain baseline."""

import numpy as np

from a2fpn import fusion
from a2fpn.fusion import FusionParams
from a2fpn.levels import LevelFeature
from a2fpn.nn_ops import ConvParams, max_pool2d

rng = np.random.default_rng(11)
c, c_m, k = 8, 4, 3


def site(kind, guided=True, zero_gates=False, scale=0.3):
    src = 2 * c if guided else c
    logits = 4 * k * k if kind == "up" else k * k
    w3 = np.zeros((2 * c, c // 2)) if zero_gates else scale * rng.standard_normal((2 * c, c // 2))
    return FusionParams(
        compressor=ConvParams(scale * rng.standard_normal((c_m, src, 1, 1)),
                              scale * rng.standard_normal(c_m)),
        encoder=ConvParams(scale * rng.standard_normal((c_m, c_m, 3, 3)),
                           scale * rng.standard_normal(c_m), padding=1),
        predictor=ConvParams(scale * rng.standard_normal((logits, c_m, 1, 1)),
                             scale * rng.standard_normal(logits),
                             stride=1 if kind == "up" else 2),
        gate_w1=scale * rng.standard_normal((1, src)),
        gate_w2=scale * rng.standard_normal((c // 2, src)),
        gate_w3=w3,
        ln_gain=np.ones(c // 2),
        ln_shift=np.zeros(c // 2),
        smooth=ConvParams(scale * rng.standard_normal((c, c, 3, 3)),
                          scale * rng.standard_normal(c), padding=1),
        k=k,
    )


upper = LevelFeature(3, 8, rng.standard_normal((c, 4, 6)))
lateral = LevelFeature(2, 4, rng.standard_normal((c, 8, 12)))

# kernels are predicted from the coarse map plus a pooled view of the fine
# one; every output position gets its own k*k tap distribution
p_up = site("up")
pooled = max_pool2d(lateral.data)
kernels, _ = fusion.predict_up_kernels_fwd(upper.data, pooled, p_up)
print("upsampling kernels:", kernels.shape)   # taps x out_h x out_w
print("tap sums (should all be 1):", kernels.sum(axis=0).round(12).min(),
      kernels.sum(axis=0).round(12).max())

# a constant map survives reassembly untouched away from the border
const = np.full((c, 4, 6), 1.5)
out = fusion.reassemble_up(const, kernels, 2)
print("constant-map interior error:",
      np.abs(out[:, 2:-2, 2:-2] - 1.5).max())

# the whole top-down site: upsample the upper level onto the lateral grid,
# gate both summands channel-wise, add, smooth
fused = fusion.fuse_topdown(upper, lateral, p_up)
print("fused level:", fused.level, "stride", fused.stride, "shape", fused.data.shape)

# switch 1: guidance off means kernels come from the coarse map alone
# switch 2: gates off means the summands are used as-is
# with both off the op IS the plain content-aware-upsampling baseline
p_plain = site("up", guided=False)
a = fusion.fuse_topdown(upper, lateral, p_plain, guided=False, gated=False)
b = fusion.carafe_baseline(upper, lateral, p_plain)
print("baseline equals switched-off guided op:", np.array_equal(a.data, b.data))

# the gate head ends in 2*sigmoid, so zeroing its last layer pins every
# gate at exactly 1.0 and the gated sum collapses to a plain addition
p_neutral = site("up", zero_gates=True)
gated = fusion.fuse_topdown(upper, lateral, p_neutral, gated=True)
plain = fusion.fuse_topdown(upper, lateral, p_neutral, gated=False)
print("neutral gates are bit-exact no-ops:", np.array_equal(gated.data, plain.data))

# the downsampling mirror: fine level in, coarse grid out, kernels read
# the fine map with an upsampled top-down hint
p_dn = site("down")
lower = LevelFeature(2, 4, rng.standard_normal((c, 8, 12)))
td = LevelFeature(3, 8, rng.standard_normal((c, 4, 6)))
down = fusion.fuse_bottomup(lower, td, p_dn)
print("bottom-up fused:", down.level, "stride", down.stride, "shape", down.data.shape)

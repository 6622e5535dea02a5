import numpy as np
import numpy.testing as npt
import pytest

from a2fpn import nn_ops, oracles
from a2fpn.nn_ops import ConvParams


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_matches_oracle(rng, stride, pad):
    x = rng.standard_normal((3, 6, 8))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    got = nn_ops.conv2d(ConvParams(w, b, stride=stride, padding=pad), x)
    want = oracles.conv2d_oracle(w, b, x, stride, pad)
    npt.assert_allclose(got, want, atol=1e-12)


def test_conv2d_identity_kernel(rng):
    x = rng.standard_normal((3, 5, 5))
    w = np.eye(3).reshape(3, 3, 1, 1)
    npt.assert_allclose(nn_ops.conv2d(ConvParams(w, np.zeros(3)), x), x, atol=1e-15)


def test_conv2d_bwd_bias_is_spatial_sum(rng):
    x = rng.standard_normal((2, 4, 4))
    p = ConvParams(rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3), padding=1)
    _, cache = nn_ops.conv2d_fwd(p, x)
    gy = rng.standard_normal((3, 4, 4))
    _, _, gb = nn_ops.conv2d_bwd(cache, gy)
    npt.assert_allclose(gb, gy.sum(axis=(1, 2)), atol=1e-12)


def test_max_pool_matches_oracle(rng):
    x = rng.standard_normal((3, 6, 8))
    npt.assert_array_equal(nn_ops.max_pool2d(x), oracles.max_pool2d_oracle(x))


def test_max_pool_routes_gradient_to_argmax():
    x = np.array([[[1.0, 5.0], [2.0, 3.0]]])
    _, cache = nn_ops.max_pool2d_fwd(x)
    g = nn_ops.max_pool2d_bwd(cache, np.array([[[7.0]]]))
    npt.assert_array_equal(g, np.array([[[0.0, 7.0], [0.0, 0.0]]]))


def test_bilinear_matches_oracle(rng):
    x = rng.standard_normal((2, 3, 5))
    npt.assert_allclose(nn_ops.bilinear_upsample(x, 2),
                        oracles.bilinear_upsample_oracle(x, 2), atol=1e-12)


def test_bilinear_preserves_constants():
    x = np.full((2, 3, 4), 0.7)
    npt.assert_allclose(nn_ops.bilinear_upsample(x, 2), np.full((2, 6, 8), 0.7), atol=1e-12)


def test_nearest_upsample_replicates(rng):
    x = rng.standard_normal((1, 2, 2))
    y = nn_ops.nearest_upsample(x, 2)
    npt.assert_array_equal(y[0, :2, :2], np.full((2, 2), x[0, 0, 0]))
    assert y.shape == (1, 4, 4)


def test_pixel_shuffle_matches_oracle(rng):
    x = rng.standard_normal((8, 3, 4))
    npt.assert_array_equal(nn_ops.pixel_shuffle(x, 2), oracles.pixel_shuffle_oracle(x, 2))


def test_pixel_shuffle_roundtrip(rng):
    x = rng.standard_normal((12, 2, 5))
    npt.assert_array_equal(nn_ops.pixel_unshuffle(nn_ops.pixel_shuffle(x, 2), 2), x)


def test_concat_channels_splits_backward(rng):
    a = rng.standard_normal((2, 3, 3))
    b = rng.standard_normal((5, 3, 3))
    y, cache = nn_ops.concat_channels_fwd(a, b)
    npt.assert_array_equal(y, np.concatenate([a, b], axis=0))
    gy = rng.standard_normal(y.shape)
    ga, gb = nn_ops.concat_channels_bwd(cache, gy)
    npt.assert_array_equal(ga, gy[:2])
    npt.assert_array_equal(gb, gy[2:])


def test_conv2d_rejects_bad_input_rank(rng):
    p = ConvParams(rng.standard_normal((2, 2, 1, 1)), np.zeros(2))
    with pytest.raises(ValueError):
        nn_ops.conv2d(p, rng.standard_normal((2, 4)))

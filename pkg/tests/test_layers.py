import numpy as np
import pytest

from spikesched.errors import StructuralError
from spikesched.layers import (
    conv_backward_inputs,
    conv_backward_weights,
    conv_forward,
    fc_backward_inputs,
    fc_backward_weights,
    fc_forward,
    maxpool_backward,
    maxpool_forward,
)

from oracle import loop_conv_backward, loop_conv_forward, loop_fc_backward, max_rel_err


def test_fc_identity():
    s = np.random.default_rng(0).integers(0, 2, size=(4, 2, 5)).astype(float)
    out = fc_forward(s, np.eye(5))
    np.testing.assert_array_equal(out, s)


def test_fc_dot_product():
    out = fc_forward(np.ones((3, 1, 2)), np.array([[3.0, -1.0]]))
    np.testing.assert_array_equal(out, np.full((3, 1, 1), 2.0))


def test_fc_shape_mismatch():
    with pytest.raises(StructuralError):
        fc_forward(np.ones((2, 1, 3)), np.ones((4, 5)))
    with pytest.raises(StructuralError):
        fc_backward_inputs(np.ones((2, 1, 3)), np.ones((4, 5)))


def test_fc_weight_grad_sums_timesteps():
    a = np.array([1.0, 0.0]).reshape(2, 1, 1)
    g = np.array([0.3, 0.7]).reshape(2, 1, 1)
    g_w, g_b = fc_backward_weights(g, a)
    assert g_w[0, 0] == pytest.approx(0.3)
    assert g_b[0] == pytest.approx(1.0)


def test_fc_input_grad_identity_transpose():
    g = np.random.default_rng(1).normal(size=(3, 2, 4))
    np.testing.assert_array_equal(fc_backward_inputs(g, np.eye(4)), g)


def test_fc_against_loop_oracle():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(4, 3, 6))
    w = rng.normal(size=(5, 6))
    g = rng.normal(size=(4, 3, 5))
    g_w, g_b = fc_backward_weights(g, x)
    g_x = fc_backward_inputs(g, w)
    ow, ob, ox = loop_fc_backward(g, x, w)
    assert max_rel_err(g_w, ow) < 1e-12
    assert max_rel_err(g_b, ob) < 1e-12
    assert max_rel_err(g_x, ox) < 1e-12


def test_conv_identity_kernel():
    x = np.random.default_rng(3).normal(size=(2, 1, 1, 4, 4))
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    out = conv_forward(x, w, pad=1)
    np.testing.assert_allclose(out, x)


def test_conv_against_loop_oracle():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 2, 2, 5, 5))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)
    out = conv_forward(x, w, b, pad=1)
    ref = loop_conv_forward(x, w, b, pad=1)
    assert max_rel_err(out, ref) < 1e-12

    g = rng.normal(size=out.shape)
    g_w, g_b = conv_backward_weights(g, x, 3, pad=1)
    g_x = conv_backward_inputs(g, w, pad=1)
    ow, ob, ox = loop_conv_backward(g, x, w, pad=1)
    assert max_rel_err(g_w, ow) < 1e-12
    assert max_rel_err(g_b, ob) < 1e-12
    assert max_rel_err(g_x, ox) < 1e-12


def test_conv_channel_mismatch():
    with pytest.raises(StructuralError):
        conv_forward(np.ones((1, 1, 2, 4, 4)), np.ones((1, 3, 3, 3)), pad=1)


def test_maxpool_or_of_binary():
    rng = np.random.default_rng(5)
    x = rng.integers(0, 2, size=(3, 2, 4, 6, 6)).astype(float)
    pooled, _ = maxpool_forward(x)
    blocks = x.reshape(3, 2, 4, 3, 2, 3, 2)
    expected = blocks.max(axis=(4, 6))
    np.testing.assert_array_equal(pooled, expected)


def test_maxpool_tie_breaks_lowest_row_major():
    x = np.zeros((1, 1, 1, 2, 2))
    x[0, 0, 0, 0, 1] = 1.0
    x[0, 0, 0, 1, 0] = 1.0
    pooled, argmax = maxpool_forward(x)
    assert pooled[0, 0, 0, 0, 0] == 1.0
    g = maxpool_backward(np.full((1, 1, 1, 1, 1), 5.0), argmax)
    np.testing.assert_array_equal(g[0, 0, 0], [[0.0, 5.0], [0.0, 0.0]])


def test_maxpool_all_zero_routes_to_corner():
    pooled, argmax = maxpool_forward(np.zeros((1, 1, 1, 2, 2)))
    assert pooled[0, 0, 0, 0, 0] == 0.0
    g = maxpool_backward(np.full((1, 1, 1, 1, 1), 2.0), argmax)
    np.testing.assert_array_equal(g[0, 0, 0], [[2.0, 0.0], [0.0, 0.0]])


def test_maxpool_unique_argmax():
    x = np.zeros((1, 1, 1, 2, 2))
    x[0, 0, 0, 1, 1] = 1.0
    _, argmax = maxpool_forward(x)
    g = maxpool_backward(np.full((1, 1, 1, 1, 1), 3.0), argmax)
    np.testing.assert_array_equal(g[0, 0, 0], [[0.0, 0.0], [0.0, 3.0]])


def test_maxpool_indivisible_dims():
    with pytest.raises(StructuralError):
        maxpool_forward(np.zeros((1, 1, 1, 3, 4)))

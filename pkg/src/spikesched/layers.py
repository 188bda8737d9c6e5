"""Synaptic connections and pooling for the reference training core.

All activations carry a leading (T, B) pair of axes: fc tensors are
(T, B, Q), conv feature maps are (T, B, C, H, W).  The synapse is applied
independently per timestep and sample; weight gradients sum over both.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import StructuralError


def fc_forward(x, weights, bias=None):
    """i_in = x @ W^T (+ bias), per timestep and sample."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if x.shape[-1] != weights.shape[1]:
        raise StructuralError(
            f"fc input width {x.shape[-1]} does not match weight columns {weights.shape[1]}"
        )
    out = x @ weights.T
    if bias is not None:
        out = out + bias
    return out


def fc_backward_weights(g_iin, x):
    """dL/dW[j,i] = sum over timesteps and samples of g_iin_j * x_i."""
    g_iin = np.asarray(g_iin, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if g_iin.shape[:-1] != x.shape[:-1]:
        raise StructuralError("fc gradient and activation leading shapes disagree")
    g_flat = g_iin.reshape(-1, g_iin.shape[-1])
    x_flat = x.reshape(-1, x.shape[-1])
    return g_flat.T @ x_flat, g_flat.sum(axis=0)


def fc_backward_inputs(g_iin, weights):
    """dL/dx_i = sum_j g_iin_j * W[j,i]."""
    g_iin = np.asarray(g_iin, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if g_iin.shape[-1] != weights.shape[0]:
        raise StructuralError(
            f"fc gradient width {g_iin.shape[-1]} does not match weight rows {weights.shape[0]}"
        )
    return g_iin @ weights


def _conv_patches(x, kernel, pad):
    """(T, B, C, H_out, W_out, K, K) view of zero-padded input windows."""
    if pad:
        x = np.pad(x, [(0, 0), (0, 0), (0, 0), (pad, pad), (pad, pad)])
    win = sliding_window_view(x, (kernel, kernel), axis=(3, 4))
    return win


def conv_forward(x, weights, bias=None, pad=0):
    """Correlate (T, B, C, H, W) input with (F, C, K, K) filters."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if x.ndim != 5:
        raise StructuralError(f"conv input must be (T, B, C, H, W), got ndim={x.ndim}")
    if x.shape[2] != weights.shape[1]:
        raise StructuralError(
            f"conv input channels {x.shape[2]} do not match filter channels {weights.shape[1]}"
        )
    k = weights.shape[2]
    if x.shape[3] + 2 * pad < k or x.shape[4] + 2 * pad < k:
        raise StructuralError("conv kernel larger than padded input")
    patches = _conv_patches(x, k, pad)
    out = np.einsum("tbchwij,fcij->tbfhw", patches, weights)
    if bias is not None:
        out = out + bias[None, None, :, None, None]
    return out


def conv_backward_weights(g_iin, x, kernel, pad=0):
    """Filter and bias gradients, summed over timesteps, samples, positions."""
    g_iin = np.asarray(g_iin, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    patches = _conv_patches(x, kernel, pad)
    if patches.shape[3:5] != g_iin.shape[3:5]:
        raise StructuralError(
            f"conv gradient spatial dims {g_iin.shape[3:5]} do not match output "
            f"{patches.shape[3:5]}"
        )
    g_w = np.einsum("tbchwij,tbfhw->fcij", patches, g_iin)
    g_b = g_iin.sum(axis=(0, 1, 3, 4))
    return g_w, g_b


def conv_backward_inputs(g_iin, weights, pad=0, in_hw=None):
    """Full correlation of the output adjoint with flipped filters."""
    g_iin = np.asarray(g_iin, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    k = weights.shape[2]
    if pad > k - 1:
        raise StructuralError(f"padding {pad} exceeds kernel-1={k - 1}")
    flipped = weights[:, :, ::-1, ::-1]
    # pad so that the valid correlation inverts the forward indexing
    patches = _conv_patches(g_iin, k, k - 1 - pad)
    g_x = np.einsum("tbfhwij,fcij->tbchw", patches, flipped)
    if in_hw is not None and g_x.shape[3:5] != tuple(in_hw):
        raise StructuralError(
            f"input gradient spatial dims {g_x.shape[3:5]} do not match layer input {in_hw}"
        )
    return g_x


def maxpool_forward(x, window=2):
    """OR over each window of a binary map (max of 0/1 values) per timestep.

    Returns the pooled map and the flat in-window argmax used by the
    backward router; ties resolve to the lowest row-major position.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 5:
        raise StructuralError(f"maxpool input must be (T, B, C, H, W), got ndim={x.ndim}")
    t, b, c, h, w = x.shape
    if h % window or w % window:
        raise StructuralError(f"spatial dims {h}x{w} not divisible by window {window}")
    blocks = x.reshape(t, b, c, h // window, window, w // window, window)
    blocks = blocks.transpose(0, 1, 2, 3, 5, 4, 6).reshape(
        t, b, c, h // window, w // window, window * window
    )
    argmax = blocks.argmax(axis=-1)  # first max = lowest row-major index
    pooled = np.take_along_axis(blocks, argmax[..., None], axis=-1)[..., 0]
    return pooled, argmax


def maxpool_backward(g_pooled, argmax, window=2):
    """Route each pooled adjoint to the recorded argmax position."""
    g_pooled = np.asarray(g_pooled, dtype=np.float64)
    t, b, c, ph, pw = g_pooled.shape
    scattered = np.zeros((t, b, c, ph, pw, window * window), dtype=np.float64)
    np.put_along_axis(scattered, argmax[..., None], g_pooled[..., None], axis=-1)
    scattered = scattered.reshape(t, b, c, ph, pw, window, window)
    scattered = scattered.transpose(0, 1, 2, 3, 5, 4, 6)
    return scattered.reshape(t, b, c, ph * window, pw * window)

"""Leaky integrate-and-fire neuron as a digital first-order filter section.

The forward recurrence keeps one register ``d`` per neuron:

    u[n]    = (i_in[n] + (c - lam) * d[n-1]) / (c + lam)
    v_m[n]  = u[n] + d[n-1]
    v_sp[n] = 1 if v_m[n] >= v_th else 0
    d[n]    = (1 - v_sp[n]) * u[n]          (reset clears the register)

Output-layer neurons run the same section with c=1, lam=0 and the reset
disabled, which turns them into accumulators whose final potential is
2 * sum(i_in) - i_in[T-1].

The backward pass is the same filter run on time-reversed adjoints.  The
hard threshold is differentiated through a band surrogate: slope
1/(2*alpha) within alpha of the threshold, zero outside.  A spike gates
both recurrence terms off, so gradients never flow through a reset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericDomainError, StructuralError


@dataclass(frozen=True)
class LifParams:
    c: float
    lam: float
    v_th: float
    alpha: float = 0.5

    def __post_init__(self):
        if not (self.c > 0 and self.lam >= 0 and self.c + self.lam > 0):
            raise NumericDomainError(
                f"require c > 0, lam >= 0, c + lam > 0; got c={self.c}, lam={self.lam}"
            )
        if not self.alpha > 0:
            raise NumericDomainError(f"surrogate half-width must be positive, got {self.alpha}")

    @classmethod
    def accumulator(cls) -> "LifParams":
        """Output-layer mode; combine with reset=False."""
        return cls(c=1.0, lam=0.0, v_th=np.inf, alpha=0.5)


def _check_sequence(i_in: np.ndarray) -> np.ndarray:
    i_in = np.asarray(i_in, dtype=np.float64)
    if i_in.ndim < 1 or i_in.shape[0] < 1:
        raise StructuralError("input current needs a leading timestep axis of length >= 1")
    if not np.all(np.isfinite(i_in)):
        raise NumericDomainError("input current contains non-finite values")
    return i_in


def lif_forward(i_in, params: LifParams, reset: bool = True):
    """Run the neuron over a current sequence.

    ``i_in`` has shape (T, ...); membrane potential, spike train, and the
    delay-register trace come back with the same shape.  ``reset=False``
    disables the spike-driven register clear (accumulator mode).
    """
    i_in = _check_sequence(i_in)
    denom = params.c + params.lam

    v_m = np.empty_like(i_in)
    v_sp = np.empty_like(i_in)
    d = np.empty_like(i_in)
    state = np.zeros(i_in.shape[1:], dtype=np.float64)
    for n in range(i_in.shape[0]):
        u = (i_in[n] + (params.c - params.lam) * state) / denom
        v_m[n] = u + state
        spike = (v_m[n] >= params.v_th).astype(np.float64)
        v_sp[n] = spike
        state = u if not reset else (1.0 - spike) * u
        d[n] = state
    return v_m, v_sp, d


def surrogate_slope(v_m: np.ndarray, params: LifParams) -> np.ndarray:
    """Derivative of the band surrogate: 1/(2*alpha) inside the band."""
    inside = np.abs(v_m - params.v_th) <= params.alpha
    return inside.astype(np.float64) / (2.0 * params.alpha)


def ramp_activation(v_m: np.ndarray, params: LifParams) -> np.ndarray:
    """Continuous stand-in for the threshold: linear ramp across the band."""
    return np.clip((v_m - (params.v_th - params.alpha)) / (2.0 * params.alpha), 0.0, 1.0)


def lif_forward_frozen(i_in, params: LifParams, gates: np.ndarray):
    """Forward pass with the reset gates pinned to recorded spike values.

    Used by gradient checking: with gates frozen and the threshold replaced
    by ``ramp_activation``, the layer is differentiable and its exact
    derivative is what ``lif_backward`` computes.
    Returns (v_m, ramp outputs).
    """
    i_in = _check_sequence(i_in)
    gates = np.asarray(gates, dtype=np.float64)
    if gates.shape != i_in.shape:
        raise StructuralError("frozen gates must match the input shape")
    denom = params.c + params.lam

    v_m = np.empty_like(i_in)
    state = np.zeros(i_in.shape[1:], dtype=np.float64)
    for n in range(i_in.shape[0]):
        u = (i_in[n] + (params.c - params.lam) * state) / denom
        v_m[n] = u + state
        state = (1.0 - gates[n]) * u
    return v_m, ramp_activation(v_m, params)


def lif_backward(g_vsp, v_sp, v_m, params: LifParams):
    """Adjoint currents from spike adjoints, as a time-reversed filter.

    Runs the recurrence

        g_vm[n]  = g_vsp[n] * phi'(v_m[n]) + gate[n] * fb * g_vm[n+1]
        g_iin[n] = (g_vm[n] + gate[n] * g_vm[n+1]) / (c + lam)

    backward from n = T-1 with g_vm[T] = 0, where gate[n] = 1 - v_sp[n] and
    fb = (c - lam)/(c + lam).  Structurally this is the forward section with
    one carried state, fed in time-reversed order.
    """
    g_vsp = np.asarray(g_vsp, dtype=np.float64)
    v_sp = np.asarray(v_sp, dtype=np.float64)
    v_m = np.asarray(v_m, dtype=np.float64)
    if not (g_vsp.shape == v_sp.shape == v_m.shape):
        raise StructuralError(
            f"sequence shapes disagree: {g_vsp.shape}, {v_sp.shape}, {v_m.shape}"
        )
    if g_vsp.shape[0] < 1:
        raise StructuralError("empty sequence")

    denom = params.c + params.lam
    fb = (params.c - params.lam) / denom
    phi = surrogate_slope(v_m, params)

    g_iin = np.empty_like(g_vsp)
    carry = np.zeros(g_vsp.shape[1:], dtype=np.float64)  # g_vm[n+1]
    for n in range(g_vsp.shape[0] - 1, -1, -1):
        gate = 1.0 - v_sp[n]
        g_vm = g_vsp[n] * phi[n] + gate * fb * carry
        g_iin[n] = (g_vm + gate * carry) / denom
        carry = g_vm
    return g_iin


def accumulator_forward(i_in):
    """Output-layer forward: v_m[n] = i_in[n] + i_in[n-1] + v_m[n-1]."""
    v_m, _sp, _d = lif_forward(i_in, LifParams.accumulator(), reset=False)
    return v_m


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_loss(v_m_final: np.ndarray, y: np.ndarray):
    """Per-sample categorical cross entropy against one-hot targets.

    Returns (summed loss, d loss / d v_m_final).  The gradient is the
    softmax minus the target, one row per sample, rows summing to zero.
    """
    v_m_final = np.asarray(v_m_final, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if v_m_final.shape != y.shape:
        raise StructuralError(
            f"output width {v_m_final.shape} does not match targets {y.shape}"
        )
    probs = softmax(v_m_final)
    losses = -(y * np.log(np.clip(probs, 1e-300, None))).sum(axis=-1)
    return float(losses.sum()), probs - y


def output_layer_grad(v_m_final, loss_spec_y, timesteps: int):
    """Loss and adjoint currents of the accumulator output layer.

    The adjoint current is the loss gradient scaled by 1 at the final
    timestep and 2 earlier (every earlier current enters the accumulated
    potential twice).
    """
    loss, g_final = cross_entropy_loss(v_m_final, loss_spec_y)
    g_iin = np.broadcast_to(g_final, (timesteps,) + g_final.shape).copy()
    g_iin[: timesteps - 1] *= 2.0
    return loss, g_iin

"""Analytical clock-cycle model for an output-stationary systolic array.

Each training step of a conv or fc layer maps to three array tasks: the
forward pass (FP), the weight gradient (WG), and the input gradient (IG).
A task is characterised by the (rows, cols) extent it needs on the array
and the MAC depth accumulated per processing element.  Work is tiled to
the physical array; one tile costs its MAC depth plus the input and output
skews of the array diagonals.

Batch size folds into the timestep-bearing dimension: rows for FP/IG, MAC
depth for WG.  The input gradient of the first layer is never needed for
training and is excluded from totals (its raw cycle count is still kept
for reporting).  The IG row count uses the unpadded input extent; the
padded border rows carry no gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import StructuralError
from .network import NetworkSpec

TASK_KINDS = ("FP", "WG", "IG")


@dataclass(frozen=True)
class ArrayConfig:
    s_r: int
    s_c: int

    def __post_init__(self):
        if self.s_r < 1 or self.s_c < 1:
            raise StructuralError(f"array dims must be >= 1, got {self.s_r}x{self.s_c}")

    def __str__(self):
        return f"{self.s_r}x{self.s_c}"


@dataclass(frozen=True)
class ConvShape:
    """Conv task geometry.  h and w are the padded input dims."""

    h: int
    w: int
    c: int
    k: int
    f: int
    t: int
    b: int
    pad: int = 0

    def __post_init__(self):
        if min(self.h, self.w, self.c, self.k, self.f, self.t, self.b) < 1:
            raise StructuralError("conv shape fields must be >= 1")
        if self.h_out < 1 or self.w_out < 1:
            raise StructuralError("kernel larger than padded input")

    @property
    def h_out(self) -> int:
        return self.h - self.k + 1

    @property
    def w_out(self) -> int:
        return self.w - self.k + 1

    @property
    def h_in_unpadded(self) -> int:
        return self.h - 2 * self.pad

    @property
    def w_in_unpadded(self) -> int:
        return self.w - 2 * self.pad


@dataclass(frozen=True)
class FcShape:
    q_in: int
    q_out: int
    t: int
    b: int

    def __post_init__(self):
        if min(self.q_in, self.q_out, self.t, self.b) < 1:
            raise StructuralError("fc shape fields must be >= 1")


def task_dims(shape, task: str) -> tuple[int, int, int]:
    """(n_rows, n_cols, n_mac) the task needs on the array."""
    if task not in TASK_KINDS:
        raise StructuralError(f"unknown task kind {task!r}")
    if isinstance(shape, ConvShape):
        out_px = shape.h_out * shape.w_out
        if task == "FP":
            return (out_px * shape.t * shape.b, shape.f, shape.k * shape.k * shape.c)
        if task == "WG":
            return (shape.k * shape.k * shape.c, shape.f, out_px * shape.t * shape.b)
        in_px = shape.h_in_unpadded * shape.w_in_unpadded
        return (in_px * shape.t * shape.b, shape.c, shape.k * shape.k * shape.f)
    if isinstance(shape, FcShape):
        tb = shape.t * shape.b
        if task == "FP":
            return (tb, shape.q_out, shape.q_in)
        if task == "WG":
            return (shape.q_in, shape.q_out, tb)
        return (tb, shape.q_in, shape.q_out)
    raise StructuralError(f"unknown shape type {type(shape).__name__}")


def n_tiles(n_rows: int, n_cols: int, array: ArrayConfig) -> int:
    return math.ceil(n_rows / array.s_r) * math.ceil(n_cols / array.s_c)


def cycles_per_tile(n_mac: int, array: ArrayConfig) -> int:
    return n_mac + (array.s_r - 1) + (array.s_c - 1)


def task_cycles(shape, task: str, array: ArrayConfig) -> tuple[int, int]:
    """(total cycles, cycles of one tile) for the task on the array."""
    rows, cols, mac = task_dims(shape, task)
    quantum = cycles_per_tile(mac, array)
    return n_tiles(rows, cols, array) * quantum, quantum


@dataclass(frozen=True)
class CostMatrix:
    """Per-layer cycle counts for one network / array / batch combination.

    ``cycles[l][k]`` has the first layer's IG already zeroed; the raw value
    is kept in ``first_ig_raw`` for reporting.
    """

    layer_names: tuple[str, ...]
    cycles: tuple[tuple[int, int, int], ...]      # (FP, WG, IG) per layer
    quanta: tuple[tuple[int, int, int], ...]      # per-tile cycles per task
    first_ig_raw: int
    array: ArrayConfig
    batch: int

    @property
    def n_layers(self) -> int:
        return len(self.layer_names)

    @property
    def n_total(self) -> int:
        return sum(sum(row) for row in self.cycles)

    def task(self, layer: int, kind: str) -> int:
        return self.cycles[layer][TASK_KINDS.index(kind)]

    def quantum(self, layer: int, kind: str) -> int:
        return self.quanta[layer][TASK_KINDS.index(kind)]

    def layer_total(self, layer: int) -> int:
        return sum(self.cycles[layer])


def layer_task_shape(layer, timesteps: int, batch: int):
    """Map a costed LayerSpec onto its array geometry."""
    if layer.kind == "conv":
        return ConvShape(
            h=layer.in_h + 2 * layer.pad,
            w=layer.in_w + 2 * layer.pad,
            c=layer.in_c,
            k=layer.kernel,
            f=layer.out_c,
            t=timesteps,
            b=batch,
            pad=layer.pad,
        )
    if layer.kind in ("fc", "output"):
        return FcShape(q_in=layer.in_features, q_out=layer.out_features, t=timesteps, b=batch)
    raise StructuralError(f"layer {layer.name!r} of kind {layer.kind!r} has no array cost")


def network_cost(net: NetworkSpec, array: ArrayConfig, batch: int = 1) -> CostMatrix:
    """Cost every conv/fc/output layer of the network; maxpool costs nothing."""
    if batch < 1:
        raise StructuralError("batch must be >= 1")
    costed = net.costed_layers()
    if not costed:
        raise StructuralError(f"network {net.name!r} has no costed layers")

    names, rows, quanta = [], [], []
    first_ig_raw = 0
    for idx, layer in enumerate(costed):
        shape = layer_task_shape(layer, net.timesteps, batch)
        per_task, per_quantum = [], []
        for kind in TASK_KINDS:
            total, quantum = task_cycles(shape, kind, array)
            if kind == "IG" and idx == 0:
                first_ig_raw = total
                total = 0
            per_task.append(total)
            per_quantum.append(quantum)
        names.append(layer.name)
        rows.append(tuple(per_task))
        quanta.append(tuple(per_quantum))

    return CostMatrix(
        layer_names=tuple(names),
        cycles=tuple(rows),
        quanta=tuple(quanta),
        first_ig_raw=first_ig_raw,
        array=array,
        batch=batch,
    )

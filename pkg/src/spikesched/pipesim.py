"""Steady-state validation of schedules plus traffic and memory estimates.

The pipeline model assigns every task portion a constant slot offset: the
portion for batch ``b`` executes on its processor in slot ``b + offset``.
Offsets are derived from the intra-batch dependency graph (forward chain,
loss, backward chain, stored forward tensors).  A producer on another
processor must finish in a strictly earlier slot; on the same processor it
may share the slot, since a slot's tasks run oldest batch first and in
dependency order within a batch.

A schedule is valid when the gradient delay assigned to each layer covers
the slot distance from its forward task to its weight-gradient task.  The
steady-state throughput is one weight update per slot of ``makespan``
cycles, which is exactly the schedule's maximum processor load.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field

from .costmodel import ArrayConfig, layer_task_shape, network_cost, task_dims
from .errors import SimulationError, StructuralError
from .network import NetworkSpec
from .scheduling import Schedule, make_schedule, min_max_contiguous, task_dependencies

DEFAULT_PRECISION_BYTES = 4
DEFAULT_SPIKE_BITS = 1


@dataclass
class ScheduleMap:
    schedule: Schedule
    offsets: dict[tuple[int, str, int], int]
    grid: list[list[list[tuple[int, str, int]]]]  # [proc][slot] -> (batch, label, cycles)
    fill_depth: int
    steady_state_cycles: int
    n_batches: int

    @property
    def utilization(self) -> list[float]:
        return [load / self.steady_state_cycles for load in self.schedule.loads]


def _portion_offsets(schedule: Schedule):
    portions = schedule.task_portions()
    ordered, producers = task_dependencies(set(portions))
    offsets: dict[tuple[int, str, int], int] = {}
    for task in ordered:
        if task not in portions:
            raise SimulationError(f"schedule is missing task {task}")
        for part, (proc, _cycles) in enumerate(portions[task]):
            off = 0
            for dep in producers[task]:
                for dpart, (dproc, _c) in enumerate(portions[dep]):
                    doff = offsets[(dep[0], dep[1], dpart)]
                    off = max(off, doff + (1 if dproc != proc else 0))
            offsets[(task[0], task[1], part)] = off
    return offsets, portions


def simulate(schedule: Schedule, n_batches: int = 8) -> ScheduleMap:
    """Build the pipelined execution grid and verify every dependency.

    Raises SimulationError naming the offending task and slot when the
    assigned gradient delay cannot cover the pipeline distance between a
    layer's forward task and its weight-gradient task.
    """
    if n_batches < 1:
        raise StructuralError("n_batches must be >= 1")
    conserved = schedule.task_portions()
    for (layer, kind), parts in conserved.items():
        if kind == "WG" and len(parts) > 1:
            raise SimulationError(
                f"weight gradient of layer {layer} is split across processors"
            )

    offsets, portions = _portion_offsets(schedule)

    for layer in sorted({l for (l, _k) in portions}):
        wg_off = offsets[(layer, "WG", 0)]
        delay = schedule.delays.get(layer, 0)
        for part in range(len(portions[(layer, "FP")])):
            fp_off = offsets[(layer, "FP", part)]
            if wg_off - fp_off > delay:
                raise SimulationError(
                    f"layer {layer} weight gradient lands in slot offset {wg_off} "
                    f"but its forward task runs at offset {fp_off} with delay "
                    f"{delay}: gradient of batch t-{delay} is not ready"
                )

    names = {a.task.layer: a.task.layer_name
             for row in schedule.assignments for a in row}
    fill_depth = max(offsets.values()) + 1
    n_slots = n_batches + fill_depth
    grid = [[[] for _ in range(n_slots)] for _ in range(len(schedule.assignments))]
    for (layer, kind), parts in portions.items():
        for part, (proc, cycles) in enumerate(parts):
            off = offsets[(layer, kind, part)]
            label = f"{kind}:{names[layer]}" if len(parts) == 1 else f"{kind}:{names[layer]}.{part}"
            for b in range(n_batches):
                grid[proc][b + off].append((b, label, cycles))
    for row in grid:
        for cell in row:
            cell.sort()

    return ScheduleMap(
        schedule=schedule,
        offsets=offsets,
        grid=grid,
        fill_depth=fill_depth,
        steady_state_cycles=schedule.makespan,
        n_batches=n_batches,
    )


# ---------------------------------------------------------------------------
# communication volume


@dataclass(frozen=True)
class CommReport:
    total_bytes: float
    overhead_bytes: float

    @property
    def overhead_pct(self) -> float:
        if self.total_bytes == 0:
            return 0.0
        return 100.0 * self.overhead_bytes / self.total_bytes


def _hosts(parts: list[tuple[int, int]]) -> set[int]:
    return {proc for proc, _ in parts}


def _crossing_fraction(consumer_parts, producer_hosts, total_cycles) -> float:
    """Share of the consumer's work hosted away from every producer host."""
    away = sum(c for proc, c in consumer_parts if proc not in producer_hosts)
    return away / total_cycles if total_cycles else 0.0


def comm_volume(net: NetworkSpec, schedule: Schedule, batch: int,
                precision_bytes: int = DEFAULT_PRECISION_BYTES,
                spike_bits: int = DEFAULT_SPIKE_BITS) -> CommReport:
    """Inter-processor traffic per weight update.

    Baseline counts the tensors that must cross processor boundaries:
    activations feeding the next layer's forward and weight-gradient tasks,
    the backward gradient chain, and the stored spike/gate state each
    layer's backward filter needs.

    Overhead is the extra traffic caused by splitting a task.  A split that
    can land on column-tile boundaries partitions the weights (each host
    stores only its own column slice, and the shared input stream reaches
    extra hosts over the interconnect bus at no extra cost), so it is
    charged one seam row per extra host.  A task with a single column tile
    must split along rows, which replicates the layer's full weight tensor
    to every extra host in addition to the seam row.
    """
    costed = net.costed_layers()
    n = len(costed)
    t = net.timesteps
    portions = schedule.task_portions()

    def spike_bytes(values):
        return values * t * batch * spike_bits / 8.0

    def float_bytes(values):
        return values * t * batch * float(precision_bytes)

    def consumed_size(l):
        return costed[l + 1].in_size if l + 1 < n else costed[l].out_size

    total = 0.0
    for l in range(n - 1):
        act = consumed_size(l)
        fp_hosts = _hosts(portions[(l, "FP")])
        # activations into the next layer's forward and weight gradient
        nxt = portions[(l + 1, "FP")]
        total += spike_bytes(act) * _crossing_fraction(nxt, fp_hosts, sum(c for _, c in nxt))
        wg_host = portions[(l + 1, "WG")][0][0]
        if wg_host not in fp_hosts:
            total += spike_bytes(act)

    for l in range(n - 1, -1, -1):
        # gradient w.r.t. layer l's (post-pool) output, produced upstream
        if l == n - 1:
            prod_hosts = _hosts(portions[(l, "FP")])
            grad_values = costed[l].out_features * batch  # softmax grad, one per sample
            grad = grad_values * float(precision_bytes)
        else:
            prod_hosts = _hosts(portions[(l + 1, "IG")])
            grad = float_bytes(consumed_size(l))
        consumers = [portions[(l, "WG")]]
        if (l, "IG") in portions:
            consumers.append(portions[(l, "IG")])
        for parts in consumers:
            load = sum(c for _, c in parts)
            total += grad * _crossing_fraction(parts, prod_hosts, load)
        # stored forward state (gates plus surrogate-band flags) for the
        # layer's backward filter; output layer keeps potentials local
        if l < n - 1 or costed[l].kind != "output":
            state = 2 * spike_bytes(costed[l].out_size)
            fp_hosts = _hosts(portions[(l, "FP")])
            for parts in consumers:
                load = sum(c for _, c in parts)
                total += state * _crossing_fraction(parts, fp_hosts, load)

    overhead = 0.0
    for (l, kind), parts in portions.items():
        extra_hosts = len(_hosts(parts)) - 1
        if extra_hosts <= 0:
            continue
        layer = costed[l]
        shape = layer_task_shape(layer, t, batch)
        _rows, n_cols, _mac = task_dims(shape, kind)
        col_tiles = math.ceil(n_cols / schedule.array.s_c)
        if layer.kind == "conv":
            row = layer.out_w * layer.out_c if kind == "FP" else layer.in_w * layer.in_c
        else:
            row = layer.out_features if kind == "FP" else layer.in_features
        row_width = spike_bits / 8.0 if (kind == "FP" and layer.kind != "output") else float(precision_bytes)
        overhead += extra_hosts * row * row_width
        if col_tiles < extra_hosts + 1:  # row split: weights replicated
            overhead += extra_hosts * layer.param_count * float(precision_bytes)

    return CommReport(total_bytes=total, overhead_bytes=overhead)


# ---------------------------------------------------------------------------
# memory


@dataclass(frozen=True)
class MemoryReport:
    per_processor_bytes: tuple[float, ...]

    @property
    def max_bytes(self) -> float:
        return max(self.per_processor_bytes)

    @property
    def total_bytes(self) -> float:
        return sum(self.per_processor_bytes)


def _layer_storage_bytes(net: NetworkSpec, batch: int, precision_bytes, spike_bits):
    """Per costed layer: potentials, spikes, pooled copy; layer 0 also
    carries the per-timestep input buffer."""
    costed = net.costed_layers()
    t = net.timesteps
    out = []
    for l, layer in enumerate(costed):
        bytes_l = layer.out_size * t * batch * float(precision_bytes)  # potentials
        if layer.kind != "output":
            bytes_l += layer.out_size * t * batch * spike_bits / 8.0  # spikes
        consumed = costed[l + 1].in_size if l + 1 < len(costed) else layer.out_size
        if consumed != layer.out_size:
            bytes_l += consumed * t * batch * spike_bits / 8.0  # pooled copy
        out.append(bytes_l)
    in_h, in_w, in_c = net.input_shape
    out[0] += in_h * in_w * in_c * t * batch * float(precision_bytes)
    return out


def memory_estimate(net: NetworkSpec, batch: int,
                    precision_bytes: int = DEFAULT_PRECISION_BYTES,
                    spike_bits: int = DEFAULT_SPIKE_BITS,
                    schedule: Schedule | None = None,
                    p: int | None = None) -> MemoryReport:
    """Worst-case SRAM per processor to retain the forward pass for backward.

    Stored per layer: membrane potentials at full precision, spike trains at
    ``spike_bits``, the pooled activation copy consumed downstream, and the
    per-timestep input buffer.  With a schedule, each layer's storage lives
    with its weight-gradient host; with only a processor count, layers are
    hosted as the best-balanced contiguous groups; otherwise everything
    sits on one processor.
    """
    if batch < 0:
        raise StructuralError("batch must be >= 0")
    per_layer = _layer_storage_bytes(net, batch, precision_bytes, spike_bits)

    if schedule is not None:
        per_proc = [0.0] * len(schedule.assignments)
        for l, bytes_l in enumerate(per_layer):
            per_proc[schedule.wg_host(l)] += bytes_l
        return MemoryReport(per_processor_bytes=tuple(per_proc))

    if p is None or p <= 1 or batch == 0:
        return MemoryReport(per_processor_bytes=(float(sum(per_layer)),)
                            + (0.0,) * (max(p or 1, 1) - 1))

    scaled = [int(round(b)) for b in per_layer]
    groups = min_max_contiguous(scaled, p)
    per_proc = [0.0] * p
    for proc, (i, j) in enumerate(groups):
        per_proc[proc] = float(sum(per_layer[i:j]))
    return MemoryReport(per_processor_bytes=tuple(per_proc))


# ---------------------------------------------------------------------------
# sweep


@dataclass
class SweepReport:
    network: str
    rows: list[dict] = field(default_factory=list)
    aggregates: list[dict] = field(default_factory=list)

    def mean_speedup(self, scheme: str, procs: int) -> float:
        vals = [r["speedup"] for r in self.rows if r["scheme"] == scheme and r["procs"] == procs]
        if not vals:
            raise StructuralError(f"no sweep rows for {scheme} at P={procs}")
        return statistics.fmean(vals)


def sweep(net: NetworkSpec, p_list, batch_list, array_list, schemes,
          precision_bytes: int = DEFAULT_PRECISION_BYTES,
          spike_bits: int = DEFAULT_SPIKE_BITS) -> SweepReport:
    """Cost, schedule, validate, and measure every combination."""
    p_list = list(p_list)
    batch_list = list(batch_list)
    array_list = list(array_list)
    schemes = list(schemes)
    if not (p_list and batch_list and array_list and schemes):
        raise StructuralError("sweep ranges must be nonempty")

    report = SweepReport(network=net.name)
    for array in array_list:
        cfg = array if isinstance(array, ArrayConfig) else ArrayConfig(*array)
        for batch in batch_list:
            costs = network_cost(net, cfg, batch)
            for p in p_list:
                for scheme in schemes:
                    sched = make_schedule(scheme, costs, p)
                    sim = simulate(sched, n_batches=2 * p + 2)
                    comm = comm_volume(net, sched, batch, precision_bytes, spike_bits)
                    report.rows.append({
                        "network": net.name,
                        "scheme": scheme,
                        "procs": p,
                        "batch": batch,
                        "array": str(cfg),
                        "n_total": costs.n_total,
                        "makespan": sched.makespan,
                        "speedup": sched.speedup,
                        "fill_depth": sim.fill_depth,
                        "total_kb": comm.total_bytes / 1024.0,
                        "overhead_kb": comm.overhead_bytes / 1024.0,
                        "overhead_pct": comm.overhead_pct,
                    })

    for p in p_list:
        agg = {"network": net.name, "procs": p}
        for scheme in schemes:
            vals = [r["speedup"] for r in report.rows
                    if r["scheme"] == scheme and r["procs"] == p]
            agg[f"{scheme}_mean_speedup"] = statistics.fmean(vals)
            agg[f"{scheme}_std_speedup"] = statistics.pstdev(vals) if len(vals) > 1 else 0.0
        if "pipedream" in schemes and "finegrained" in schemes:
            base = agg["pipedream_mean_speedup"]
            fine = agg["finegrained_mean_speedup"]
            agg["improvement_pct"] = 100.0 * (fine - base) / base
        over = [r["overhead_kb"] for r in report.rows if r["procs"] == p]
        agg["max_overhead_kb"] = max(over)
        report.aggregates.append(agg)
    return report

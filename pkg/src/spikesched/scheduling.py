"""Task-to-processor schedules for pipelined training.

Four schemes are provided.  The three baselines place atomic tasks on
processors as an optimal contiguous partition of a declared task chain,
found by dynamic programming:

* layer-wise: one atomic task per layer (FP + WG + IG together),
* pipedream:  chain <FP_1, BP_1, FP_2, BP_2, ...> with BP_l = WG_l + IG_l,
* split:      chain <WG_1, FP_1, IG_2, WG_2, FP_2, ...> (backward split
  into its two tasks).

The fine-grained scheme runs a greedy first-to-last allocator that packs
processors toward an ideal load of N_total / P, splitting FP and IG tasks
at tile boundaries but never splitting WG.  A WG task that does not fit is
placed anyway when at least half of it fits.  If the last processor ends up
over the ideal load, the ideal is relaxed by 1.1x and the pass restarts.
The mirrored last-to-first variant is also run and the better of the two
schedules is returned.

Gradient delays follow from WG placement: a weight gradient hosted k
processors before the end of the occupied pipeline is applied 2k batches
late (k hops for the forward wave, k for the backward wave).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .costmodel import CostMatrix
from .errors import StructuralError

_RELAX = 1.1


@dataclass(frozen=True)
class Task:
    layer: int
    layer_name: str
    kind: str
    cycles: int
    quantum: int

    @property
    def splittable(self) -> bool:
        return self.kind != "WG"

    @property
    def label(self) -> str:
        return f"{self.kind}:{self.layer_name}"


@dataclass(frozen=True)
class Allocation:
    """One contiguous portion of a task placed on one processor."""

    task: Task
    cycles: int
    part: int
    n_parts: int

    @property
    def fraction(self) -> float:
        return self.cycles / self.task.cycles


@dataclass
class Schedule:
    scheme: str
    p: int
    assignments: list[list[Allocation]]
    n_total: int
    delays: dict[int, int]
    loads: list[int]
    makespan: int
    first_proc: int
    last_proc: int
    array: object = None  # ArrayConfig the costs were computed for
    batch: int = 1

    @property
    def speedup(self) -> float:
        return self.n_total / self.makespan

    @property
    def p_effective(self) -> int:
        return self.last_proc - self.first_proc + 1

    def task_portions(self) -> dict[tuple[int, str], list[tuple[int, int]]]:
        """(layer, kind) -> [(proc, cycles), ...] in part order."""
        portions: dict[tuple[int, str], list[tuple[int, int, int]]] = {}
        for proc, allocs in enumerate(self.assignments):
            for a in allocs:
                portions.setdefault((a.task.layer, a.task.kind), []).append(
                    (a.part, proc, a.cycles)
                )
        return {
            key: [(proc, cyc) for _, proc, cyc in sorted(parts)]
            for key, parts in portions.items()
        }

    def wg_host(self, layer: int) -> int:
        for proc, allocs in enumerate(self.assignments):
            for a in allocs:
                if a.task.layer == layer and a.task.kind == "WG":
                    return proc
        raise StructuralError(f"weight gradient of layer {layer} is not placed")


@dataclass(frozen=True)
class SpeedupBounds:
    layerwise: float
    pipedream: float
    split: float
    finegrained: float


def task_dependencies(keys):
    """Topological order and intra-batch producers over the given
    (layer, kind) task keys: the forward chain, the loss at the last
    forward task, the backward chain, and the stored forward tensors each
    backward task reads."""
    layers = sorted({layer for (layer, _kind) in keys})
    last = layers[-1]
    ordered = [(l, "FP") for l in layers]
    producers = {(layers[0], "FP"): []}
    for prev, l in zip(layers, layers[1:]):
        producers[(l, "FP")] = [(prev, "FP")]
    for pos in range(len(layers) - 1, -1, -1):
        l = layers[pos]
        upstream = (layers[pos + 1], "IG") if l != last else (last, "FP")
        if (l, "IG") in keys:
            ordered.append((l, "IG"))
            producers[(l, "IG")] = [upstream, (l, "FP")]
        deps = [upstream, (l, "FP")]
        if pos > 0:
            deps.append((layers[pos - 1], "FP"))  # stored activations
        ordered.append((l, "WG"))
        producers[(l, "WG")] = deps
    return ordered, producers


def delay_rule_feasible(chunk_of: dict[tuple[int, str], int]) -> bool:
    """Whether delays of 2 * (hops to the last occupied processor) cover the
    pipeline distance each weight gradient sits from its forward task."""
    ordered, producers = task_dependencies(set(chunk_of))
    last = max(chunk_of.values())
    offsets = {}
    for key in ordered:
        off = 0
        for dep in producers[key]:
            off = max(off, offsets[dep] + (1 if chunk_of[dep] != chunk_of[key] else 0))
        offsets[key] = off
    for (layer, kind), chunk in chunk_of.items():
        if kind != "WG":
            continue
        delay = 2 * (last - chunk)
        if offsets[(layer, "WG")] - offsets[(layer, "FP")] > delay:
            return False
    return True


def bounds(costs: CostMatrix) -> SpeedupBounds:
    total = costs.n_total
    per_layer = [costs.layer_total(l) for l in range(costs.n_layers)]
    fps = [costs.task(l, "FP") for l in range(costs.n_layers)]
    wgs = [costs.task(l, "WG") for l in range(costs.n_layers)]
    bps = [costs.task(l, "WG") + costs.task(l, "IG") for l in range(costs.n_layers)]
    igs = [costs.task(l, "IG") for l in range(costs.n_layers)]
    return SpeedupBounds(
        layerwise=total / max(per_layer),
        pipedream=total / max(max(fps), max(bps)),
        split=total / max(max(fps), max(wgs), max(igs)),
        finegrained=total / max(wgs),
    )


# ---------------------------------------------------------------------------
# optimal contiguous partition (baseline schemes)


def min_max_contiguous(values: list[int], p: int) -> list[tuple[int, int]]:
    """Partition ``values`` into at most ``p`` contiguous groups minimizing the
    maximum group sum.  Ties are broken toward minimal sum of squared loads,
    then toward lexicographically earliest cut positions.  Returns half-open
    index ranges.
    """
    n = len(values)
    if n == 0:
        raise StructuralError("cannot partition an empty task chain")
    if p < 1:
        raise StructuralError("processor count must be >= 1")
    k = min(p, n)
    prefix = [0]
    for v in values:
        prefix.append(prefix[-1] + v)

    def seg(i, j):
        return prefix[j] - prefix[i]

    inf = float("inf")
    # minimal achievable makespan
    f = [[inf] * (k + 1) for _ in range(n + 1)]
    f[n][0] = 0
    for g in range(1, k + 1):
        for i in range(n, -1, -1):
            best = inf
            for j in range(i + 1, n + 1):
                cand = max(seg(i, j), f[j][g - 1])
                if cand < best:
                    best = cand
            f[i][g] = best
    mstar = f[0][k]

    # minimal sum of squared loads subject to makespan <= mstar
    h = [[None] * (k + 1) for _ in range(n + 1)]
    h[n][0] = 0
    for g in range(1, k + 1):
        for i in range(n - 1, -1, -1):
            best = None
            for j in range(i + 1, n + 1):
                s = seg(i, j)
                if s > mstar or h[j][g - 1] is None:
                    continue
                cand = s * s + h[j][g - 1]
                if best is None or cand < best:
                    best = cand
            h[i][g] = best

    # earliest cuts among (mstar, min variance) partitions
    groups = []
    i = 0
    for g in range(k, 0, -1):
        for j in range(i + 1, n + 1):
            s = seg(i, j)
            if s <= mstar and h[j][g - 1] is not None and s * s + h[j][g - 1] == h[i][g]:
                groups.append((i, j))
                i = j
                break
    return groups


def _tasks_of_layer(costs: CostMatrix, layer: int, kinds) -> list[Task]:
    tasks = []
    for kind in kinds:
        cycles = costs.task(layer, kind)
        if cycles == 0:
            continue  # excluded first-layer IG
        tasks.append(
            Task(
                layer=layer,
                layer_name=costs.layer_names[layer],
                kind=kind,
                cycles=cycles,
                quantum=costs.quantum(layer, kind),
            )
        )
    return tasks


def _finish(scheme: str, p: int, costs: CostMatrix,
            placement: list[list[tuple[Task, int]]]) -> Schedule:
    """Assemble a Schedule from raw (task, cycles) placements."""
    counts: dict[tuple[int, str], int] = {}
    for allocs in placement:
        for task, _ in allocs:
            counts[(task.layer, task.kind)] = counts.get((task.layer, task.kind), 0) + 1
    seen: dict[tuple[int, str], int] = {}
    assignments: list[list[Allocation]] = []
    for allocs in placement:
        row = []
        for task, cycles in allocs:
            key = (task.layer, task.kind)
            part = seen.get(key, 0)
            seen[key] = part + 1
            row.append(Allocation(task=task, cycles=cycles, part=part, n_parts=counts[key]))
        assignments.append(row)

    loads = [sum(a.cycles for a in row) for row in assignments]
    occupied = [i for i, load in enumerate(loads) if load > 0]
    if not occupied:
        raise StructuralError("schedule places no work")
    sched = Schedule(
        scheme=scheme,
        p=p,
        assignments=assignments,
        n_total=costs.n_total,
        delays={},
        loads=loads,
        makespan=max(loads),
        first_proc=occupied[0],
        last_proc=occupied[-1],
        array=costs.array,
        batch=costs.batch,
    )
    sched.delays = assign_delays(sched)
    return sched


def _chunk_map(chain: list[list[Task]], groups: list[tuple[int, int]]):
    chunk_of = {}
    for ci, (i, j) in enumerate(groups):
        for item in chain[i:j]:
            for t in item:
                chunk_of[(t.layer, t.kind)] = ci
    return chunk_of


def _feasible_groups(chain: list[list[Task]], groups) -> bool:
    return delay_rule_feasible(_chunk_map(chain, groups))


def _best_feasible_groups(chain: list[list[Task]], values: list[int], p: int,
                          floor: int) -> list[tuple[int, int]]:
    """Smallest-makespan contiguous partition (at most ``p`` groups) that the
    delay rule can serve, ties broken by squared-load sum then earliest cuts.
    Only reached when the unconstrained optimum is infeasible; capping the
    segment sum at each candidate makespan keeps the enumeration small."""
    n = len(values)
    prefix = [0]
    for v in values:
        prefix.append(prefix[-1] + v)

    def seg(i, j):
        return prefix[j] - prefix[i]

    caps = sorted({seg(i, j) for i in range(n) for j in range(i + 1, n + 1)
                   if seg(i, j) >= floor})
    for cap in caps:
        complete = []
        stack = [(0, 0, 0, ())]
        while stack:
            i, used, varsum, cuts = stack.pop()
            if i == n:
                groups = list(zip((0,) + cuts, cuts + (n,)))
                mk = max(seg(a, b) for a, b in groups)
                complete.append((mk, varsum, cuts, groups))
                continue
            if used == p:
                continue
            for j in range(i + 1, n + 1):
                s = seg(i, j)
                if s > cap:
                    break
                nxt = cuts + (j,) if j < n else cuts
                stack.append((j if j < n else n, used + 1, varsum + s * s, nxt))
        complete.sort(key=lambda item: item[:3])
        for _mk, _vs, _cuts, groups in complete:
            if _feasible_groups(chain, groups):
                return groups
    raise StructuralError("no feasible contiguous partition exists")  # unreachable


def _schedule_chain(scheme: str, costs: CostMatrix, p: int,
                    chain: list[list[Task]]) -> Schedule:
    """Optimal contiguous partition of a chain of atomic items (each a list
    of co-located tasks), constrained to placements the delay rule can
    serve."""
    values = [sum(t.cycles for t in item) for item in chain]
    groups = min_max_contiguous(values, p)
    if not _feasible_groups(chain, groups):
        floor = max(seg for seg in (sum(values[i:j]) for i, j in groups))
        groups = _best_feasible_groups(chain, values, p, floor)
    placement: list[list[tuple[Task, int]]] = [[] for _ in range(p)]
    for proc, (i, j) in enumerate(groups):
        for item in chain[i:j]:
            placement[proc].extend((t, t.cycles) for t in item)
    return _finish(scheme, p, costs, placement)


def schedule_layerwise(costs: CostMatrix, p: int) -> Schedule:
    chain = [_tasks_of_layer(costs, l, ("FP", "WG", "IG")) for l in range(costs.n_layers)]
    return _schedule_chain("layerwise", costs, p, chain)


def schedule_pipedream(costs: CostMatrix, p: int) -> Schedule:
    chain = []
    for l in range(costs.n_layers):
        chain.append(_tasks_of_layer(costs, l, ("FP",)))
        chain.append(_tasks_of_layer(costs, l, ("IG", "WG")))
    return _schedule_chain("pipedream", costs, p, chain)


def schedule_split_backward(costs: CostMatrix, p: int) -> Schedule:
    chain = []
    for l in range(costs.n_layers):
        for kind in ("IG", "WG", "FP"):
            tasks = _tasks_of_layer(costs, l, (kind,))
            if tasks:
                chain.append(tasks)
    return _schedule_chain("split", costs, p, chain)


# ---------------------------------------------------------------------------
# fine-grained allocator


def _finegrained_chain(costs: CostMatrix) -> list[Task]:
    chain = []
    for l in range(costs.n_layers):
        for kind in ("IG", "WG", "FP"):
            chain.extend(_tasks_of_layer(costs, l, (kind,)))
    return chain


def _split_amount(n_rem: float, quantum: int, rem: int, tile_quantized: bool) -> int:
    """Cycles to place on the donor processor: the split lands on the next
    tile boundary at or past the remaining capacity."""
    if n_rem <= 0:
        return 0
    q = quantum if tile_quantized else 1
    tiles = math.ceil(n_rem / q - 1e-9)
    return min(rem, tiles * q)


def _allocate_pass(tasks: list[Task], p: int, n_ideal: float, reverse: bool,
                   tile_quantized: bool):
    """One attempt at the greedy fill.  Returns per-processor placements or
    None if the final processor's dump exceeds the ideal load."""
    placement: list[list[tuple[Task, int]]] = [[] for _ in range(p)]
    loads = [0.0] * p
    order = list(range(p - 1, -1, -1)) if reverse else list(range(p))
    seq = tasks
    idx = 0
    rem = seq[0].cycles if seq else 0

    for pos, proc in enumerate(order):
        last = pos == p - 1
        if last:
            while idx < len(seq):
                placement[proc].append((seq[idx], rem))
                loads[proc] += rem
                idx += 1
                rem = seq[idx].cycles if idx < len(seq) else 0
            if loads[proc] > n_ideal:
                return None
            break
        while idx < len(seq):
            task = seq[idx]
            if loads[proc] + rem <= n_ideal:
                placement[proc].append((task, rem))
                loads[proc] += rem
                idx += 1
                rem = seq[idx].cycles if idx < len(seq) else 0
                continue
            if not task.splittable:
                if rem / 2 <= n_ideal - loads[proc]:
                    placement[proc].append((task, rem))
                    loads[proc] += rem
                    idx += 1
                    rem = seq[idx].cycles if idx < len(seq) else 0
                break
            portion = _split_amount(n_ideal - loads[proc], task.quantum, rem, tile_quantized)
            if portion:
                placement[proc].append((task, portion))
                loads[proc] += portion
                rem -= portion
                if rem == 0:
                    idx += 1
                    rem = seq[idx].cycles if idx < len(seq) else 0
            break
        if idx >= len(seq):
            break
    return placement


def _finegrained_direction(costs: CostMatrix, p: int, reverse: bool,
                           tile_quantized: bool) -> Schedule:
    tasks = _finegrained_chain(costs)
    if reverse:
        tasks = tasks[::-1]
    n_ideal = costs.n_total / p
    while True:
        placement = _allocate_pass(tasks, p, n_ideal, reverse, tile_quantized)
        if placement is not None:
            return _finish("finegrained", p, costs, placement)
        n_ideal *= _RELAX


def _split_count(schedule: Schedule) -> int:
    return sum(
        1 for portions in schedule.task_portions().values() if len(portions) > 1
    )


def schedule_finegrained(costs: CostMatrix, p: int, tile_quantized: bool = True) -> Schedule:
    """Best of the first-to-last allocation and its last-to-first mirror."""
    forward = _finegrained_direction(costs, p, reverse=False, tile_quantized=tile_quantized)
    backward = _finegrained_direction(costs, p, reverse=True, tile_quantized=tile_quantized)
    key = lambda s: (s.makespan, _split_count(s))
    return forward if key(forward) <= key(backward) else backward


SCHEDULERS = {
    "layerwise": schedule_layerwise,
    "pipedream": schedule_pipedream,
    "split": schedule_split_backward,
    "finegrained": schedule_finegrained,
}


def make_schedule(scheme: str, costs: CostMatrix, p: int) -> Schedule:
    try:
        fn = SCHEDULERS[scheme]
    except KeyError:
        raise StructuralError(f"unknown scheme {scheme!r}") from None
    return fn(costs, p)


def assign_delays(schedule: Schedule) -> dict[int, int]:
    """Gradient delay per layer: two batches per processor between the WG
    host and the end of the occupied pipeline."""
    layers = sorted({a.task.layer for row in schedule.assignments for a in row})
    delays = {}
    for layer in layers:
        delays[layer] = 2 * (schedule.last_proc - schedule.wg_host(layer))
    return delays

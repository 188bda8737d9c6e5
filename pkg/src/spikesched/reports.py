"""Report writers: delimited files, JSON, text schedule maps, and figures.

All writers are deterministic for identical inputs: floats are formatted
with a fixed shortest-repr rule, JSON keys are ordered, and matplotlib SVG
output is stripped of timestamps and seeded for id hashing.
"""

from __future__ import annotations

import csv
import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .costmodel import CostMatrix, TASK_KINDS  # noqa: E402
from .pipesim import ScheduleMap, SweepReport  # noqa: E402
from .scheduling import Schedule  # noqa: E402

plt.rcParams["svg.hashsalt"] = "spikesched"

_SVG_META = {"Date": None}


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


# ---------------------------------------------------------------------------
# cost tables


def write_cost_csv(costs: CostMatrix, path) -> None:
    """Per-layer cycle table; the excluded first-layer input gradient is
    reported at its raw value, the total omits it."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "forward_pass", "weight_gradient", "input_gradient"])
        for l, name in enumerate(costs.layer_names):
            ig = costs.first_ig_raw if l == 0 else costs.task(l, "IG")
            writer.writerow([name, costs.task(l, "FP"), costs.task(l, "WG"), ig])
        writer.writerow(["n_total", costs.n_total, "", ""])


def cost_to_dict(costs: CostMatrix) -> dict:
    return {
        "array": str(costs.array),
        "batch": costs.batch,
        "n_total": costs.n_total,
        "first_layer_input_gradient_excluded": costs.first_ig_raw,
        "layers": [
            {
                "layer": name,
                "cycles": {k: costs.task(l, k) for k in TASK_KINDS},
                "tile_cycles": {k: costs.quantum(l, k) for k in TASK_KINDS},
            }
            for l, name in enumerate(costs.layer_names)
        ],
    }


def cost_table_text(costs: CostMatrix) -> str:
    width = max(len(n) for n in costs.layer_names + ("layer", "n_total"))
    lines = [f"{'layer':<{width}}  {'FP':>10}  {'WG':>10}  {'IG':>10}"]
    for l, name in enumerate(costs.layer_names):
        ig = costs.first_ig_raw if l == 0 else costs.task(l, "IG")
        mark = "*" if l == 0 else " "
        lines.append(
            f"{name:<{width}}  {costs.task(l, 'FP'):>10}  {costs.task(l, 'WG'):>10}  "
            f"{ig:>9}{mark}"
        )
    lines.append(f"{'n_total':<{width}}  {costs.n_total:>10}")
    lines.append("* first-layer input gradient is excluded from n_total")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# schedules


def schedule_to_dict(schedule: Schedule) -> dict:
    return {
        "scheme": schedule.scheme,
        "processors": schedule.p,
        "array": str(schedule.array),
        "batch": schedule.batch,
        "n_total": schedule.n_total,
        "makespan": schedule.makespan,
        "speedup": round(schedule.speedup, 6),
        "loads": schedule.loads,
        "delays": {str(k): v for k, v in sorted(schedule.delays.items())},
        "assignments": [
            {
                "proc": proc,
                "tasks": [
                    {
                        "layer": a.task.layer,
                        "layer_name": a.task.layer_name,
                        "kind": a.task.kind,
                        "cycles": a.cycles,
                        "part": a.part,
                        "n_parts": a.n_parts,
                        "fraction": round(a.fraction, 6),
                    }
                    for a in allocs
                ],
            }
            for proc, allocs in enumerate(schedule.assignments)
        ],
    }


def write_schedule_json(schedule: Schedule, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schedule_to_dict(schedule), fh, indent=2, sort_keys=True)
        fh.write("\n")


def schedule_map_text(sim: ScheduleMap, max_slots: int | None = None) -> str:
    """Pipeline grid, one row per processor, one column per slot.  Cell
    entries read ``batch:KIND:layer[.part]``."""
    n_slots = len(sim.grid[0]) if sim.grid else 0
    if max_slots is not None:
        n_slots = min(n_slots, max_slots)

    cells = []
    for proc_row in sim.grid:
        cells.append([
            " ".join(f"{b}:{label}" for b, label, _cyc in slot[:4])
            + (" ..." if len(slot) > 4 else "")
            for slot in proc_row[:n_slots]
        ])
    col_w = [max(12, *(len(cells[p][s]) for p in range(len(cells))))
             for s in range(n_slots)]
    header = "      " + "  ".join(f"slot {s:<{col_w[s] - 5}}" for s in range(n_slots))
    lines = [header]
    for p, row in enumerate(cells):
        lines.append(f"P{p:<4} " + "  ".join(f"{row[s]:<{col_w[s]}}" for s in range(n_slots)))
    lines.append(
        f"steady state: {sim.steady_state_cycles} cycles per weight update "
        f"after {sim.fill_depth} fill slot(s)"
    )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# sweeps


SWEEP_ROW_FIELDS = [
    "network", "scheme", "procs", "batch", "array", "n_total", "makespan",
    "speedup", "fill_depth", "total_kb", "overhead_kb", "overhead_pct",
]


def write_sweep_rows_csv(report: SweepReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_ROW_FIELDS)
        for row in report.rows:
            writer.writerow([_fmt(row[k]) for k in SWEEP_ROW_FIELDS])


def write_sweep_aggregate_csv(report: SweepReport, path) -> None:
    if not report.aggregates:
        raise ValueError("sweep report has no aggregates")
    fields = list(report.aggregates[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for agg in report.aggregates:
            writer.writerow([_fmt(agg[k]) for k in fields])


def render_speedup_chart(report: SweepReport, path) -> None:
    """Mean speedup versus processor count, one line per scheme, with a
    one-standard-deviation band over the batch/array grid."""
    procs = sorted({a["procs"] for a in report.aggregates})
    schemes = sorted({r["scheme"] for r in report.rows})
    fig, ax = plt.subplots(figsize=(6, 4))
    for scheme in schemes:
        means = [next(a[f"{scheme}_mean_speedup"] for a in report.aggregates
                      if a["procs"] == p) for p in procs]
        stds = [next(a[f"{scheme}_std_speedup"] for a in report.aggregates
                     if a["procs"] == p) for p in procs]
        ax.plot(procs, means, marker="o", label=scheme)
        ax.fill_between(procs,
                        [m - s for m, s in zip(means, stds)],
                        [m + s for m, s in zip(means, stds)], alpha=0.2)
    ax.set_xlabel("processors")
    ax.set_ylabel("speedup over single processor")
    ax.set_title(f"{report.network}: training throughput by schedule scheme")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata=_SVG_META)
    plt.close(fig)


def render_history_chart(histories: dict[str, "object"], path) -> None:
    """Loss and training accuracy per epoch for one or more runs."""
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.5))
    for label, hist in histories.items():
        ax_loss.plot(hist.epochs, hist.losses, label=label)
        ax_acc.plot(hist.epochs, hist.accuracies, label=label)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("mean loss")
    ax_loss.grid(True, alpha=0.3)
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("train accuracy")
    ax_acc.set_ylim(0, 1.02)
    ax_acc.grid(True, alpha=0.3)
    ax_acc.legend()
    fig.tight_layout()
    fig.savefig(path, metadata=_SVG_META)
    plt.close(fig)


def write_json(payload: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

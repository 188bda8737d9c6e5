"""Command line front end.

Subcommands: ``cost``, ``schedule``, ``simulate``, ``sweep``, ``train-toy``.
Exit codes: 0 success, 1 usage error, 2 bad input, 3 internal or schedule
validity error.
"""

from __future__ import annotations

import argparse
import os
import sys
from importlib import resources

from . import reports
from .costmodel import ArrayConfig, network_cost
from .errors import (
    NetworkParseError,
    NumericDomainError,
    SimulationError,
    SpikeschedError,
    StructuralError,
    TrainingError,
)
from .network import NetworkSpec, parse_network, parse_network_text
from .pipesim import comm_volume, memory_estimate, simulate, sweep
from .scheduling import SCHEDULERS, make_schedule
from .training import (
    OptimizerConfig,
    load_dataset,
    synthetic_spike_task,
    toy_network_spec,
    train,
)

DEFAULT_ARRAYS = ["16x16", "32x32", "64x64", "128x128", "256x256"]
DEFAULT_BATCHES = [1, 2, 4, 8, 16, 32, 64, 128]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _UsageError(SpikeschedError):
    pass


def _parse_array(text: str) -> ArrayConfig:
    try:
        rows, _, cols = text.lower().partition("x")
        return ArrayConfig(int(rows), int(cols))
    except (ValueError, StructuralError):
        raise _UsageError(f"bad --array value {text!r}, expected RxC like 32x32") from None


def _parse_procs(text: str) -> list[int]:
    try:
        if ".." in text:
            lo, _, hi = text.partition("..")
            lo, hi = int(lo), int(hi)
            if lo < 1 or hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        value = int(text)
        if value < 1:
            raise ValueError
        return [value]
    except ValueError:
        raise _UsageError(f"bad --procs value {text!r}, expected N or A..B") from None


def _load_net(name_or_path: str) -> NetworkSpec:
    if os.path.exists(name_or_path):
        return parse_network(name_or_path)
    bundled = resources.files("spikesched").joinpath(f"networks/{name_or_path}.net")
    if bundled.is_file():
        return parse_network_text(bundled.read_text(encoding="utf-8"))
    raise NetworkParseError(
        f"network {name_or_path!r} is neither a file nor a bundled network "
        f"(bundled: mnist, nmnist, dvs128)"
    )


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _single(values, flag: str, default):
    if not values:
        return default
    if len(values) > 1:
        raise _UsageError(f"{flag} may be given once for this command")
    return values[0]


def cmd_cost(args) -> int:
    net = _load_net(args.net)
    array = _parse_array(_single(args.array, "--array", "32x32"))
    batch = _single(args.batch, "--batch", 1)
    costs = network_cost(net, array, batch)
    out = _outdir(args)
    path = os.path.join(out, f"cost_{net.name}_{array}_b{batch}.csv")
    json_path = os.path.join(out, f"cost_{net.name}_{array}_b{batch}.json")
    reports.write_cost_csv(costs, path)
    reports.write_json(reports.cost_to_dict(costs), json_path)
    print(reports.cost_table_text(costs))
    print(f"wrote {path}")
    print(f"wrote {json_path}")
    return EXIT_OK


def _build_schedule(args, net, array, batch, scheme, procs):
    costs = network_cost(net, array, batch)
    return costs, make_schedule(scheme, costs, procs)


def cmd_schedule(args) -> int:
    net = _load_net(args.net)
    array = _parse_array(_single(args.array, "--array", "32x32"))
    batch = _single(args.batch, "--batch", 1)
    scheme = _single(args.scheme, "--scheme", "finegrained")
    procs = _parse_procs(args.procs)
    if len(procs) != 1:
        raise _UsageError("schedule takes a single --procs value")
    _costs, sched = _build_schedule(args, net, array, batch, scheme, procs[0])
    sim = simulate(sched)
    out = _outdir(args)
    stem = f"schedule_{net.name}_{scheme}_p{procs[0]}_{array}_b{batch}"
    json_path = os.path.join(out, stem + ".json")
    map_path = os.path.join(out, stem + "_map.txt")
    reports.write_schedule_json(sched, json_path)
    with open(map_path, "w", encoding="utf-8") as fh:
        fh.write(reports.schedule_map_text(sim, max_slots=sim.fill_depth + 3) + "\n")
    delays = " ".join(str(v) for _k, v in sorted(sched.delays.items()))
    print(f"{scheme} on P={procs[0]}: makespan {sched.makespan} cycles/update, "
          f"speedup {sched.speedup:.4f}, delays ({delays})")
    print(f"wrote {json_path}")
    print(f"wrote {map_path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    net = _load_net(args.net)
    array = _parse_array(_single(args.array, "--array", "32x32"))
    batch = _single(args.batch, "--batch", 1)
    scheme = _single(args.scheme, "--scheme", "finegrained")
    procs = _parse_procs(args.procs)
    if len(procs) != 1:
        raise _UsageError("simulate takes a single --procs value")
    _costs, sched = _build_schedule(args, net, array, batch, scheme, procs[0])
    sim = simulate(sched, n_batches=args.n_batches)
    comm = comm_volume(net, sched, batch, args.precision_bytes, args.spike_bits)
    mem = memory_estimate(net, batch, args.precision_bytes, args.spike_bits, schedule=sched)
    out = _outdir(args)
    map_path = os.path.join(
        out, f"simulate_{net.name}_{scheme}_p{procs[0]}_{array}_b{batch}_map.txt"
    )
    with open(map_path, "w", encoding="utf-8") as fh:
        fh.write(reports.schedule_map_text(sim) + "\n")
    print(reports.schedule_map_text(sim, max_slots=min(10, sim.n_batches + sim.fill_depth)))
    print(f"communication per update: {comm.total_bytes / 1024:.2f} KB, "
          f"split overhead {comm.overhead_bytes / 1024:.2f} KB ({comm.overhead_pct:.3f}%)")
    print(f"worst-case processor memory: {mem.max_bytes / 1e6:.3f} MB")
    print(f"wrote {map_path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    net = _load_net(args.net)
    arrays = [_parse_array(a) for a in (args.array or DEFAULT_ARRAYS)]
    batches = args.batch or DEFAULT_BATCHES
    procs = _parse_procs(args.procs)
    schemes = args.scheme or ["pipedream", "finegrained"]
    report = sweep(net, procs, batches, arrays, schemes,
                   args.precision_bytes, args.spike_bits)
    out = _outdir(args)
    rows_path = os.path.join(out, f"sweep_{net.name}_rows.csv")
    agg_path = os.path.join(out, f"sweep_{net.name}_aggregate.csv")
    json_path = os.path.join(out, f"sweep_{net.name}_report.json")
    reports.write_sweep_rows_csv(report, rows_path)
    reports.write_sweep_aggregate_csv(report, agg_path)
    reports.write_json(
        {"network": report.network, "rows": report.rows, "aggregates": report.aggregates},
        json_path,
    )
    print(f"swept {len(report.rows)} combinations "
          f"({len(schemes)} schemes x {len(procs)} proc counts x "
          f"{len(batches)} batches x {len(arrays)} arrays)")
    for agg in report.aggregates:
        parts = [f"P={agg['procs']}"]
        for scheme in schemes:
            parts.append(f"{scheme} {agg[f'{scheme}_mean_speedup']:.2f}")
        if "improvement_pct" in agg:
            parts.append(f"improv {agg['improvement_pct']:.1f}%")
        parts.append(f"max overhead {agg['max_overhead_kb']:.2f} KB")
        print("  " + "  ".join(parts))
    print(f"wrote {rows_path}")
    print(f"wrote {agg_path}")
    print(f"wrote {json_path}")
    if args.svg:
        chart_path = os.path.join(out, f"sweep_{net.name}_speedup.svg")
        reports.render_speedup_chart(report, chart_path)
        print(f"wrote {chart_path}")
    return EXIT_OK


def cmd_train_toy(args) -> int:
    if args.data:
        inputs, labels = load_dataset(args.data)
        per_sample = inputs.shape[1:]
        if len(per_sample) >= 2 and per_sample[0] == args.timesteps:
            per_sample = per_sample[1:]  # leading axis is the timestep dim
        n_inputs = 1
        for dim in per_sample:
            n_inputs *= int(dim)
        spec = toy_network_spec(n_inputs=n_inputs, hidden=args.hidden,
                                n_classes=int(labels.max()) + 1,
                                timesteps=args.timesteps, batch=args.batch_size)
    else:
        inputs, labels = synthetic_spike_task(timesteps=args.timesteps, seed=args.seed)
        spec = toy_network_spec(timesteps=args.timesteps, batch=args.batch_size)

    optimizer = OptimizerConfig(kind=args.optimizer, eta=args.eta)
    runs = {
        "undelayed": train(spec, inputs, labels, epochs=args.epochs,
                           optimizer=optimizer, delays=[0, 0], seed=args.seed),
        f"delayed (D={args.delay},0)": train(spec, inputs, labels, epochs=args.epochs,
                                             optimizer=optimizer,
                                             delays=[args.delay, 0], seed=args.seed),
    }
    out = _outdir(args)
    for label, hist in runs.items():
        stem = "history_undelayed" if label == "undelayed" else "history_delayed"
        path = os.path.join(out, stem + ".csv")
        hist.to_csv(path)
        print(f"{label}: final accuracy {hist.final_accuracy:.4f}, "
              f"final loss {hist.losses[-1]:.6f} -> {path}")
    gap = abs(list(runs.values())[0].final_accuracy - list(runs.values())[1].final_accuracy)
    print(f"accuracy gap: {gap:.4f}")
    if args.svg:
        chart_path = os.path.join(out, "training_curves.svg")
        reports.render_history_chart(runs, chart_path)
        print(f"wrote {chart_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spikesched",
                     description="Cycle cost modeling and pipelined multiprocessor "
                                 "scheduling for spiking neural network training.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, procs_default=None):
        p.add_argument("--net", required=True,
                       help="network file path or bundled name (mnist, nmnist, dvs128)")
        p.add_argument("--array", action="append", metavar="RxC",
                       help="systolic array dims, repeatable where a sweep applies")
        p.add_argument("--batch", action="append", type=int, metavar="N",
                       help="mini-batch size, repeatable where a sweep applies")
        p.add_argument("--precision-bytes", type=int, default=4)
        p.add_argument("--spike-bits", type=int, default=1)
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--svg", action="store_true", help="also render charts")
        if procs_default is not None:
            p.add_argument("--procs", default=procs_default, metavar="A..B",
                           help=f"processor count or range (default {procs_default})")
            p.add_argument("--scheme", action="append",
                           choices=sorted(SCHEDULERS),
                           help="scheduling scheme, repeatable for sweep")

    p_cost = sub.add_parser("cost", help="per-layer cycle table for one array/batch")
    common(p_cost)
    p_cost.set_defaults(func=cmd_cost)

    p_sched = sub.add_parser("schedule", help="compute one schedule and export it")
    common(p_sched, procs_default="4")
    p_sched.set_defaults(func=cmd_schedule)

    p_sim = sub.add_parser("simulate", help="validate a schedule and emit its pipeline map")
    common(p_sim, procs_default="4")
    p_sim.add_argument("--n-batches", type=int, default=8)
    p_sim.set_defaults(func=cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="speedup/overhead sweep over procs, batches, arrays")
    common(p_sweep, procs_default="1..12")
    p_sweep.set_defaults(func=cmd_sweep)

    p_toy = sub.add_parser("train-toy",
                           help="delayed-vs-undelayed training on a synthetic spike task")
    p_toy.add_argument("--data", help="optional dataset container (.npz or .csv)")
    p_toy.add_argument("--epochs", type=int, default=50)
    p_toy.add_argument("--delay", type=int, default=2,
                       help="hidden-layer gradient delay in batches (default 2)")
    p_toy.add_argument("--optimizer", choices=["sgd", "adam"], default="adam")
    p_toy.add_argument("--eta", type=float, default=1e-3)
    p_toy.add_argument("--batch-size", type=int, default=32)
    p_toy.add_argument("--hidden", type=int, default=16)
    p_toy.add_argument("--timesteps", type=int, default=8)
    p_toy.add_argument("--out", default="out")
    p_toy.add_argument("--seed", type=int, default=0)
    p_toy.add_argument("--svg", action="store_true")
    p_toy.set_defaults(func=cmd_train_toy)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"spikesched {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NetworkParseError, StructuralError, NumericDomainError, TrainingError) as exc:
        print(f"spikesched {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SimulationError as exc:
        print(f"spikesched {args.command}: schedule validation failed: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

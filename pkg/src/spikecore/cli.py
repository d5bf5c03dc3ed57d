"""Command line interface.

Subcommands: compile (netlist to memory image), run (execute a schedule
and report access counts and cost estimates), diff (step the reference
simulator and the engine side by side until they disagree), convert
(layered tensor archive to netlist), scaling (tile a base network and
fit cost against size).

Defaults for non-required flags can be supplied as a JSON object in the
SPIKECORE_CONFIG environment variable, keyed by flag dest name (for
example {"seed": 7, "energy_per_access": 2.0}). Explicit flags win over
the environment, which wins over built-in defaults.

Reports are JSON lines: a header object, one object per record, one
summary object. Writers emit sorted keys and compact separators so a
repeated run with the same inputs produces byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import convert as convert_mod
from .engine import CostConfig, run, scaling_regression
from .errors import DegenerateInput, FormatError, SpikeCoreError
from .hbm import DEFAULT_CAPACITY_ROWS, compile_network, load_image
from .netlist import load_network, save_network
from .network import tile_network
from .sim import Simulation

ENV_CONFIG = "SPIKECORE_CONFIG"
REPORT_FORMAT = "spikecore-report"
SCHEDULE_FORMAT = "spikecore-schedule"


def _dump_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_report(path, kind: str, header: dict, rows: list[dict], summary: dict) -> None:
    lines = [_dump_line({"format": REPORT_FORMAT, "version": 1, "kind": kind, **header})]
    lines.extend(_dump_line(r) for r in rows)
    lines.append(_dump_line({"record": "summary", **summary}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_schedule(path) -> tuple[list[list], list[int] | None]:
    """Read a schedule file; returns (per-step axon key lists, block lengths).

    Either {"steps": [[...], ...]} for one flat run or
    {"inferences": [[[...], ...], ...]} to group steps into blocks.
    """
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"schedule is not valid JSON: {exc}") from None
    if not isinstance(obj, dict) or obj.get("format") != SCHEDULE_FORMAT:
        raise FormatError("not a schedule file (missing format marker)")
    if obj.get("version") != 1:
        raise FormatError(f"unsupported schedule version {obj.get('version')!r}")

    def check_steps(steps, where):
        if not isinstance(steps, list) or not all(isinstance(s, list) for s in steps):
            raise FormatError(f"{where} must be a list of per-step key lists")

    if "inferences" in obj:
        blocks = obj["inferences"]
        if not isinstance(blocks, list):
            raise FormatError("inferences must be a list of step blocks")
        for b in blocks:
            check_steps(b, "each inference")
        flat = [step for block in blocks for step in block]
        return flat, [len(b) for b in blocks]
    if "steps" in obj:
        check_steps(obj["steps"], "steps")
        return obj["steps"], None
    raise FormatError("schedule needs a 'steps' or 'inferences' entry")


def _flatten(schedule: list[list], steps: int | None) -> list[list]:
    flat = [list(s) for s in schedule]
    if steps is not None:
        flat = flat[:steps] + [[] for _ in range(steps - len(flat))]
    return flat


def _cost_from(args) -> CostConfig:
    return CostConfig(
        energy_per_access=args.energy_per_access,
        cycles_per_row=args.cycles_per_row,
        clock_period=args.clock_ns,
    )


def _counter_fields(c, cycles_per_row: int) -> dict:
    return {
        "pointer_row_reads": c.pointer_row_reads,
        "synapse_row_reads": c.synapse_row_reads,
        "scan_cycles": c.neuron_scan_cycles,
        "hbm_accesses": c.hbm_accesses(),
        "total_cycles": c.total_cycles(cycles_per_row),
    }


def _load_run_sources(args):
    """(network or None, image or None) from --netlist / --image flags."""
    network = load_network(args.netlist) if args.netlist else None
    image = load_image(args.image) if getattr(args, "image", None) else None
    if network is None and image is None:
        raise SpikeCoreError("need --netlist or --image")
    return network, image


def cmd_compile(args) -> int:
    network = load_network(args.netlist)
    image = compile_network(network, capacity_rows=args.capacity_rows)
    image.save(args.image)
    g = image.geometry
    sections = [
        ("models", g.model_section),
        ("axon_pointers", g.axon_ptr_section),
        ("neuron_pointers", g.neuron_ptr_section),
        ("synapses", g.synapse_section),
    ]
    for name, (start, end) in sections:
        print(f"{name} rows={end - start}")
    pct = 100.0 * g.total_rows / g.capacity_rows
    print(f"total rows={g.total_rows} capacity={g.capacity_rows} occupancy={pct:.4f}%")
    print(f"axons={image.num_axons} neurons={image.num_neurons}")
    return 0


def cmd_run(args) -> int:
    network, image = _load_run_sources(args)
    schedule, lengths = load_schedule(args.schedule) if args.schedule else ([], None)
    if not args.schedule and args.steps is None:
        raise SpikeCoreError("need --schedule or --steps")
    cost = _cost_from(args)
    header = {
        "backend": args.backend,
        "seed": args.seed,
        "energy_per_access": cost.energy_per_access,
        "cycles_per_row": cost.cycles_per_row,
        "clock_period_ns": cost.clock_period,
    }

    if args.backend == "engine":
        if image is None:
            image = compile_network(network, capacity_rows=args.capacity_rows)
        result = run(
            image, schedule, seed=args.seed, cost=cost, block_lengths=lengths, steps=args.steps
        )
        report = result.report
        spikes = result.spikes
        rows = []
        for t, (s, c) in enumerate(zip(spikes, report.per_step)):
            rows.append(
                {"record": "step", "step": t, "spikes": s, **_counter_fields(c, cost.cycles_per_row)}
            )
        e_mean, e_sd = report.energy_mean_sd
        l_mean, l_sd = report.latency_mean_sd
        summary = {
            **_counter_fields(report.totals, cost.cycles_per_row),
            "energy_estimate": report.energy_estimate,
            "latency_estimate": report.latency_estimate,
            "output_spikes": sum(len(s) for s in spikes),
            "blocks": [
                {"steps": n, "energy": e, "latency": l} for n, e, l in report.blocks
            ],
            "energy_mean": e_mean,
            "energy_sd": e_sd,
            "latency_mean": l_mean,
            "latency_sd": l_sd,
        }
        header["num_axons"] = image.num_axons
        header["num_neurons"] = image.num_neurons
        print(f"steps={len(spikes)} output_spikes={summary['output_spikes']}")
        print(
            "hbm_accesses={} total_cycles={} energy={:.10g} latency={:.10g}".format(
                summary["hbm_accesses"],
                summary["total_cycles"],
                summary["energy_estimate"],
                summary["latency_estimate"],
            )
        )
        if len(report.blocks) > 1:
            print(
                "blocks={} energy_mean={:.10g} energy_sd={:.10g} latency_mean={:.10g} latency_sd={:.10g}".format(
                    len(report.blocks), e_mean, e_sd, l_mean, l_sd
                )
            )
    else:
        sim = Simulation(network=network, image=image, backend="oracle", seed=args.seed)
        flat = _flatten(schedule, args.steps)
        spikes = [sim.step(inputs) for inputs in flat]
        rows = [{"record": "step", "step": t, "spikes": s} for t, s in enumerate(spikes)]
        summary = {"output_spikes": sum(len(s) for s in spikes)}
        header["num_axons"] = sim.symtab.num_axons
        header["num_neurons"] = sim.symtab.num_neurons
        print(f"steps={len(spikes)} output_spikes={summary['output_spikes']}")

    if args.report:
        write_report(args.report, "run", header, rows, summary)
    return 0


def cmd_diff(args) -> int:
    network = load_network(args.netlist)
    image = load_image(args.image) if args.image else compile_network(network)
    oracle = Simulation(network=network, backend="oracle", seed=args.seed)
    engine = Simulation(image=image, backend="engine", seed=args.seed)
    schedule, _ = load_schedule(args.schedule) if args.schedule else ([], None)
    if not args.schedule and args.steps is None:
        raise SpikeCoreError("need --schedule or --steps")
    flat = _flatten(schedule, args.steps)

    spike_total = 0
    for t, inputs in enumerate(flat):
        sa, ma = oracle.step(inputs, membrane_potential=True)
        sb, mb = engine.step(inputs, membrane_potential=True)
        if sa != sb:
            print(f"DIVERGED step={t} field=spikes oracle={sa} engine={sb}")
            return 1
        if not np.array_equal(ma, mb):
            i = int(np.nonzero(ma != mb)[0][0])
            key = oracle.symtab.neuron_keys[i]
            print(
                f"DIVERGED step={t} field=membrane neuron={key!r} "
                f"oracle={int(ma[i])} engine={int(mb[i])}"
            )
            return 1
        spike_total += len(sa)
    print(f"OK steps={len(flat)} output_spikes={spike_total}")
    return 0


def cmd_convert(args) -> int:
    input_shape, layers = convert_mod.load_archive(args.model)
    options = convert_mod.ConvertOptions(
        neuron_kind=args.neuron,
        threshold=args.threshold,
        leak_shift=args.leak_shift,
        noise_shift=args.noise_shift,
        bias_strategy=args.bias_strategy,
        quant_alpha=args.quant_alpha,
    )
    result = convert_mod.convert_model(input_shape, layers, options)
    save_network(result.network, args.out)
    r = result.report
    print(f"axons={r.axons} neurons={r.neurons} params={r.params} synapses={r.synapses}")
    print("scales=" + ",".join(f"{s:.10g}" for s in result.scales))
    if result.bias_axons:
        print("bias_axons=" + ",".join(str(k) for k in result.bias_axons))
    return 0


def cmd_scaling(args) -> int:
    base = load_network(args.netlist)
    factors = [int(x) for x in args.factors.split(",") if x.strip()]
    if not factors or any(k < 1 for k in factors):
        raise SpikeCoreError(f"factors must be positive integers, got {args.factors!r}")
    schedule, lengths = load_schedule(args.schedule) if args.schedule else ([], None)
    if not args.schedule and args.steps is None:
        raise SpikeCoreError("need --schedule or --steps")
    flat = _flatten(schedule, args.steps)
    cost = _cost_from(args)

    rows = []
    points = []
    for k in factors:
        net = tile_network(base, k)
        sched = [[f"c{i}.{key}" for i in range(k) for key in step] for step in flat]
        image = compile_network(net, capacity_rows=args.capacity_rows)
        result = run(image, sched, seed=args.seed, cost=cost, block_lengths=lengths)
        totals = result.report.totals
        row = {
            "record": "point",
            "factor": k,
            "neurons": net.num_neurons,
            "steps": len(sched),
            **_counter_fields(totals, cost.cycles_per_row),
            "energy": result.report.energy_estimate,
        }
        rows.append(row)
        points.append(row)

    cols = [
        "factor",
        "neurons",
        "steps",
        "pointer_row_reads",
        "synapse_row_reads",
        "hbm_accesses",
        "total_cycles",
        "energy",
    ]
    print("\t".join(cols))
    for row in rows:
        print("\t".join(f"{row[c]:.10g}" if isinstance(row[c], float) else str(row[c]) for c in cols))

    fits = {}
    verdict = "linear"
    for metric in ("hbm_accesses", "total_cycles", "energy"):
        data = [(float(r["neurons"]), float(r[metric])) for r in points]
        try:
            fit = scaling_regression(data)
        except DegenerateInput as exc:
            print(f"fit {metric}: degenerate ({exc})")
            verdict = "degenerate"
            continue
        fits[metric] = {"slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared}
        print(
            f"fit {metric}: slope={fit.slope:.10g} intercept={fit.intercept:.10g} "
            f"r2={fit.r_squared:.10g}"
        )

    if args.report:
        header = {
            "seed": args.seed,
            "energy_per_access": cost.energy_per_access,
            "cycles_per_row": cost.cycles_per_row,
            "clock_period_ns": cost.clock_period,
            "factors": factors,
        }
        write_report(args.report, "scaling", header, rows, {"fits": fits, "verdict": verdict})
    return 0


def _env_defaults() -> dict:
    raw = os.environ.get(ENV_CONFIG)
    if not raw:
        return {}
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{ENV_CONFIG} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise FormatError(f"{ENV_CONFIG} must hold a JSON object")
    return obj


def _apply_env(sub: argparse.ArgumentParser, env: dict) -> None:
    # flags beat the environment; required arguments never come from it
    dests = {a.dest for a in sub._actions if not a.required}
    sub.set_defaults(**{k: v for k, v in env.items() if k in dests})


def _add_cost_flags(sub) -> None:
    sub.add_argument("--energy-per-access", type=float, default=1.0, help="energy units per row access")
    sub.add_argument("--cycles-per-row", type=int, default=1, help="cycles charged per row access")
    sub.add_argument("--clock-ns", type=float, default=1.0, help="clock period for latency estimates")


def build_parser(env: dict | None = None) -> argparse.ArgumentParser:
    env = env if env is not None else _env_defaults()
    parser = argparse.ArgumentParser(prog="spikecore", description=__doc__.splitlines()[0])
    parser.set_defaults(func=None)
    subs = parser.add_subparsers(dest="command")

    p = subs.add_parser("compile", help="compile a netlist into a memory image")
    p.add_argument("--netlist", required=True)
    p.add_argument("--image", required=True, help="output image path")
    p.add_argument("--capacity-rows", type=int, default=DEFAULT_CAPACITY_ROWS)
    p.set_defaults(func=cmd_compile)
    _apply_env(p, env)

    p = subs.add_parser("run", help="execute a spike schedule")
    p.add_argument("--netlist")
    p.add_argument("--image")
    p.add_argument("--schedule")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=("engine", "oracle"), default="engine")
    p.add_argument("--capacity-rows", type=int, default=DEFAULT_CAPACITY_ROWS)
    p.add_argument("--report", help="write a JSON-lines report here")
    _add_cost_flags(p)
    p.set_defaults(func=cmd_run)
    _apply_env(p, env)

    p = subs.add_parser("diff", help="compare the reference simulator against the engine")
    p.add_argument("--netlist", required=True)
    p.add_argument("--image", help="engine image; compiled from the netlist when omitted")
    p.add_argument("--schedule")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_diff)
    _apply_env(p, env)

    p = subs.add_parser("convert", help="convert a layered tensor archive to a netlist")
    p.add_argument("--model", required=True, help="tensor archive directory")
    p.add_argument("--out", required=True, help="output netlist path")
    p.add_argument("--neuron", choices=("binary", "lif"), default="binary")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--leak-shift", type=int, default=63)
    p.add_argument("--noise-shift", type=int, default=convert_mod.NOISE_OFF)
    p.add_argument("--quant-alpha", type=float, default=None)
    p.add_argument("--bias-strategy", choices=convert_mod.BIAS_STRATEGIES, default="threshold_shift")
    p.set_defaults(func=cmd_convert)
    _apply_env(p, env)

    p = subs.add_parser("scaling", help="tile a base network and fit cost against size")
    p.add_argument("--netlist", required=True)
    p.add_argument("--factors", required=True, help="comma-separated copy counts, e.g. 1,2,4,8")
    p.add_argument("--schedule")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--capacity-rows", type=int, default=DEFAULT_CAPACITY_ROWS)
    p.add_argument("--report", help="write a JSON-lines report here")
    _add_cost_flags(p)
    p.set_defaults(func=cmd_scaling)
    _apply_env(p, env)

    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.func is None:
            parser.print_help(sys.stderr)
            return 2
        return args.func(args)
    except SpikeCoreError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"FileNotFoundError: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Exit codes: 0 success, 1 input error, 2 no feasible schedule.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import bench
from .greedy import horizon as greedy_horizon
from .instance import InstanceError, load_instance
from .qubo import (
    PenaltyConfig,
    QuboFormatError,
    build_qubo,
    decode,
    energy,
    export_qubo,
    export_result,
    import_result,
    model_from_export,
)
from .schedule import (
    ScheduleShapeError,
    chain_delays,
    check_feasibility,
    format_gantt,
    save_schedule,
    total_delay,
)
from .solvers import AnnealParams, SearchTooLarge, exhaustive_schedule_oracle, simulated_annealing

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2


def _instance(args):
    inst = load_instance(Path(args.instance).read_text())
    if getattr(args, "slot_length", None) is not None:
        inst = replace(inst, slot_length=args.slot_length)
    if getattr(args, "horizon", None) is not None:
        inst = replace(inst, horizon_override=args.horizon)
    return inst


def _penalty(args) -> PenaltyConfig:
    return PenaltyConfig(base=args.penalty, printed_busy_duration=args.printed_busy_duration)


def _anneal(args) -> AnnealParams:
    return AnnealParams(
        reads=args.reads, sweeps=args.sweeps, beta_start=args.beta_start, beta_end=args.beta_end, seed=args.seed
    )


def cmd_solve(args) -> int:
    inst = _instance(args)
    config = bench.CaseConfig(
        args.name, inst, repeats=args.repeats, anneal=_anneal(args), penalty=_penalty(args), retry_cap=args.retry_cap
    )
    result = bench.run_case(config)
    print(bench.emit_table([result], "table3", "text"), end="")
    print()
    print(bench.emit_table([result], "table4", "text"), end="")
    for line in result.diagnostics:
        print(f"note: {line}")
    if result.schedule is not None:
        print()
        print(format_gantt(inst, result.schedule))
    if args.out:
        bench.write_outputs([result], args.out)
    return EXIT_OK if result.successful else EXIT_INFEASIBLE


def cmd_bench(args) -> int:
    path = Path(args.cases)
    configs = bench.load_cases(path.read_text(), path.parent)
    results = [bench.run_case(c) for c in configs]
    written = bench.write_outputs(results, args.out)
    print(bench.emit_table(results, "table3", "text"), end="")
    print()
    print(bench.emit_table(results, "table4", "text"), end="")
    print(f"wrote {len(written)} files to {args.out}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    inst = _instance(args)
    H = greedy_horizon(inst)
    found = exhaustive_schedule_oracle(inst, H, cap=args.cap)
    if found is None:
        print(f"no feasible schedule within horizon {H}")
        return EXIT_INFEASIBLE
    schedule, best = found
    print(f"horizon {H}: optimal total delay {best:g} s")
    print("chain delays: " + ", ".join(f"{d:g}" for d in chain_delays(inst, schedule)))
    print(format_gantt(inst, schedule))
    if args.out:
        Path(args.out).write_text(save_schedule(schedule))
    return EXIT_OK


def cmd_export(args) -> int:
    inst = _instance(args)
    model = build_qubo(inst, greedy_horizon(inst), _penalty(args))
    Path(args.out).write_text(export_qubo(model))
    print(f"wrote {model.n_vars}-variable QUBO (horizon {model.horizon}) to {args.out}")
    return EXIT_OK


def cmd_sample(args) -> int:
    model = model_from_export(Path(args.qubo).read_text())
    ss = simulated_annealing(model, _anneal(args))
    bits, e = ss.first
    Path(args.out).write_text(export_result(bits))
    print(f"lowest energy {e:.10g} written to {args.out}")
    return EXIT_OK


def cmd_import(args) -> int:
    model = model_from_export(Path(args.qubo).read_text())
    bits = import_result(model, Path(args.result).read_text())
    schedule, _ = decode(model, bits)
    report = check_feasibility(model.instance, schedule)
    print(f"energy {energy(model, bits):.10g}")
    if args.out:
        Path(args.out).write_text(save_schedule(schedule))
    if not report.feasible:
        counts = ", ".join(f"{k}={v}" for k, v in sorted(report.by_constraint().items()))
        print(f"infeasible: {counts}")
        return EXIT_INFEASIBLE
    print(f"feasible: total delay {total_delay(model.instance, schedule):g} s")
    print(format_gantt(model.instance, schedule))
    return EXIT_OK


def _add_model_options(p):
    p.add_argument("--penalty", type=float, default=None, help="penalty coefficient (default 100x objective bound)")
    p.add_argument("--printed-busy-duration", action="store_true", help="busy-duration penalty without x")
    p.add_argument("--horizon", type=int, default=None, help="fixed horizon instead of the greedy one")
    p.add_argument("--slot-length", type=float, default=None, help="override slot length in seconds")


def _add_anneal_options(p):
    p.add_argument("--reads", type=int, default=10)
    p.add_argument("--sweeps", type=int, default=1000)
    p.add_argument("--beta-start", type=float, default=None)
    p.add_argument("--beta-end", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vnfqubo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="greedy horizon + QUBO + repeated annealing on one instance")
    p.add_argument("instance")
    p.add_argument("--repeats", type=int, default=50)
    p.add_argument("--retry-cap", type=int, default=3)
    p.add_argument("--name", default="case")
    p.add_argument("--out", default=None, help="directory for table and histogram CSVs")
    _add_model_options(p)
    _add_anneal_options(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run every case in a cases file")
    p.add_argument("cases")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("oracle", help="exact optimum by enumeration")
    p.add_argument("instance")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--slot-length", type=float, default=None)
    p.add_argument("--cap", type=float, default=1e15, help="refuse search spaces larger than this")
    p.add_argument("--out", default=None, help="write the optimal schedule as JSON")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("export-qubo", help="write the QUBO in coordinate format")
    p.add_argument("instance")
    p.add_argument("--out", required=True)
    _add_model_options(p)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("sample-qubo", help="anneal an exported QUBO and write a result file")
    p.add_argument("qubo")
    p.add_argument("--out", required=True)
    _add_anneal_options(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("import-result", help="decode an external sampler's result file")
    p.add_argument("result")
    p.add_argument("--qubo", required=True, help="the exported QUBO file the result belongs to")
    p.add_argument("--out", default=None, help="write the decoded schedule as JSON")
    p.set_defaults(func=cmd_import)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (InstanceError, QuboFormatError, ScheduleShapeError, SearchTooLarge, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

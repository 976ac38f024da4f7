import argparse
import asyncio
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

from core.errors import ConfigError, SimulationError
from network.traffic import SyntheticTraceSpec, generate_synthetic_trace, write_trace
from scenario.config import parse_config
from scenario.output import PLOT_AXES, emit_plot_data, load_reports_csv, write_reports_csv
from scenario.runner import run_matrix, successful_reports


EXIT_OK = 0
EXIT_SCENARIO_FAILED = 1
EXIT_CONFIG_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mobiletv",
        description="Mobile TV over a WiMAX downlink: discrete-event scenario simulator",
    )
    parser.add_argument("--log-level", default=None,
                        help="DEBUG, INFO, WARNING or ERROR (default: $MOBILETV_LOG_LEVEL or INFO)")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run a scenario matrix and write results")
    run.add_argument("config", nargs="?", default=None, help="Scenario file (default matrix when omitted)")
    run.add_argument("--out", default="results", help="Output directory")
    run.add_argument("--parallel", type=int, default=None,
                     help="Worker processes (default: $MOBILETV_PARALLEL or 1)")
    run.add_argument("--duration", type=float, default=None, help="Simulated seconds per scenario")
    run.add_argument("--seed", type=int, default=None, help="Base seed")
    run.add_argument("--full", action="store_true", help="Run each scenario for the full trace length")
    run.add_argument("--only", nargs="*", default=None, help="Run only these scenario ids")

    gen = commands.add_parser("gen-trace", help="Write a synthetic frame-size trace")
    gen.add_argument("out", help="Trace file to write")
    gen.add_argument("--frames", type=int, default=SyntheticTraceSpec().frames)
    gen.add_argument("--fps", type=float, default=SyntheticTraceSpec().fps)
    gen.add_argument("--mean", type=float, default=SyntheticTraceSpec().mean_size)
    gen.add_argument("--min", dest="min_size", type=int, default=SyntheticTraceSpec().min_size)
    gen.add_argument("--max", dest="max_size", type=int, default=SyntheticTraceSpec().max_size)
    gen.add_argument("--seed", type=int, default=SyntheticTraceSpec().seed)

    plot = commands.add_parser("plot-data", help="Turn a results CSV into plottable data files")
    plot.add_argument("csv", help="Results CSV written by 'run'")
    plot.add_argument("--out", default=None, help="Output directory (default: next to the CSV)")
    plot.add_argument("--axis", choices=sorted(PLOT_AXES) + ["all"], default="all")

    validate = commands.add_parser("validate", help="Parse a scenario file without running it")
    validate.add_argument("config", nargs="?", default=None)

    return parser


async def cmd_run(args: argparse.Namespace) -> int:
    logger = logging.getLogger("mobiletv")
    matrix = parse_config(args.config, duration=args.duration, seed=args.seed, full=args.full or None)
    if args.only:
        unknown = [sid for sid in args.only if matrix.get(sid) is None]
        if unknown:
            raise ConfigError(f"Unknown scenario id(s): {', '.join(unknown)}")
        matrix = matrix.model_copy(update={"scenarios": [matrix.get(sid) for sid in args.only]})

    parallelism = args.parallel if args.parallel is not None else int(os.getenv("MOBILETV_PARALLEL", "1"))
    results = await run_matrix(matrix, parallelism)
    reports = successful_reports(results)

    out_dir = Path(args.out)
    await write_reports_csv(reports, out_dir / "results.csv")
    for axis in PLOT_AXES:
        if any(r.case == PLOT_AXES[axis][0] for r in reports):
            await emit_plot_data(reports, axis, out_dir / "plots")

    failed = [r for r in results if not r.success]
    for result in failed:
        logger.error(f"{result.scenario_id}: {result.error}")
    print(f"{len(reports)}/{len(results)} scenarios succeeded, results in {out_dir}")
    return EXIT_SCENARIO_FAILED if failed else EXIT_OK


async def cmd_gen_trace(args: argparse.Namespace) -> int:
    try:
        spec = SyntheticTraceSpec(frames=args.frames, fps=args.fps, mean_size=args.mean,
                                  min_size=args.min_size, max_size=args.max_size, seed=args.seed)
    except ValueError as e:
        raise ConfigError(str(e))
    trace = generate_synthetic_trace(spec)
    await write_trace(trace, args.out)
    stats = trace.stats
    print(f"{args.out}: {stats.frames} frames, mean {stats.mean_size:.3f} B, "
          f"min {stats.min_size} B, max {stats.max_size} B, {stats.mean_rate:.3f} Mbps")
    return EXIT_OK


async def cmd_plot_data(args: argparse.Namespace) -> int:
    reports = load_reports_csv(args.csv)
    out_dir = Path(args.out) if args.out else Path(args.csv).parent / "plots"
    axes = list(PLOT_AXES) if args.axis == "all" else [args.axis]
    written = []
    for axis in axes:
        written.extend(await emit_plot_data(reports, axis, out_dir))
    print(f"Wrote {len(written)} data files to {out_dir}")
    return EXIT_OK


async def cmd_validate(args: argparse.Namespace) -> int:
    matrix = parse_config(args.config)
    sizes = matrix.case_sizes()
    print(f"OK: {len(matrix)} scenarios " + ", ".join(f"case {k}: {v}" for k, v in sorted(sizes.items())))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "gen-trace": cmd_gen_trace,
    "plot-data": cmd_plot_data,
    "validate": cmd_validate,
}


async def main(argv: Optional[List[str]] = None) -> int:
    # Load environment variables
    load_dotenv()

    args = build_parser().parse_args(argv)
    level = (args.log_level or os.getenv("MOBILETV_LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    )

    try:
        return await COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"❌ Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except SimulationError as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_SCENARIO_FAILED


if __name__ == "__main__":
    sys.exit(asyncio.run(main()))

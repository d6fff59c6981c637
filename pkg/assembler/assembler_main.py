# --- assembler_main.py ---
from assembler.settings_manager import SettingsManager
from assembler.errors import AssemblerError
from assembler.replay_trace import ReplayTrace
from assembler.match_runner import run_simulations, validate
from assembler.metrics import compute_metrics, format_json, format_table
from assembler.display_manager import DisplayManager
import argparse
import logging
import os
import sys


def setup_logging(settings):
    """Setup logging configuration"""
    log_level = settings.get("log_level", "INFO")
    handlers = [logging.StreamHandler()]
    log_file = settings.get("log_file", "")
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, str(log_level).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
    )


def _trace_path(out, index, count):
    """One trace file per simulation; numbered when there are several"""
    if count == 1:
        return out
    root, ext = os.path.splitext(out)
    return f"{root}-{index + 1}{ext or '.jsonl'}"


def cmd_run(args, settings):
    config = settings.to_config()
    out = args.out or config.trace_path
    played = run_simulations(config, args.simulations, threaded=args.threaded)
    for index, (trace, outcome) in enumerate(played):
        path = _trace_path(out, index, len(played))
        trace.save(path)
        summary = trace.summary
        print(f"Simulation {index + 1}: seed {config.seed + index}, scores {summary['scores']}, "
              f"result {outcome}, {summary['seconds']}s -> {path}")
    return 0


def cmd_metrics(args, settings):
    trace = ReplayTrace.load(args.trace)
    reports = compute_metrics(trace)
    print(format_json(reports) if args.format == "json" else format_table(reports))
    return 0


def cmd_render(args, settings):
    trace = ReplayTrace.load(args.trace)
    display = DisplayManager(trace)
    print(display.render(args.step, args.agent))
    if args.png:
        display.save_png(args.step, args.png, args.agent)
    return 0


def cmd_validate(args, settings):
    trace = ReplayTrace.load(args.trace)
    validate(trace)
    print(f"Trace {args.trace} replays identically ({trace.steps} steps)")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="assembler", description="Grid-world assembly match simulator")
    parser.add_argument("--log-level", default=None, help="Override log_level from the settings")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="Play a match and write its replay trace")
    run_p.add_argument("--config", required=True, help="Settings JSON file")
    run_p.add_argument("--out", default=None, help="Trace output path (defaults to trace_path)")
    run_p.add_argument("--simulations", type=int, default=1, help="Matches to play with seeds seed, seed+1, ...")
    run_p.add_argument("--threaded", action="store_true", help="Ingest percepts on a background thread")
    run_p.set_defaults(func=cmd_run)

    metrics_p = sub.add_parser("metrics", help="Compute team metrics from a trace")
    metrics_p.add_argument("--trace", required=True)
    metrics_p.add_argument("--format", choices=("table", "json"), default="table")
    metrics_p.set_defaults(func=cmd_metrics)

    render_p = sub.add_parser("render", help="Print a frame of a trace")
    render_p.add_argument("--trace", required=True)
    render_p.add_argument("--step", type=int, required=True)
    render_p.add_argument("--agent", default=None, help="Agent whose map to show (default: ground truth)")
    render_p.add_argument("--png", default=None, help="Also write the frame as a PNG image")
    render_p.set_defaults(func=cmd_render)

    validate_p = sub.add_parser("validate", help="Re-simulate a trace and compare")
    validate_p.add_argument("--trace", required=True)
    validate_p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    """Command-line entry point; returns the process exit status"""
    args = build_parser().parse_args(argv)
    try:
        settings = SettingsManager(getattr(args, "config", None))
        if args.log_level:
            settings.set("log_level", args.log_level)
        setup_logging(settings)
        if getattr(args, "simulations", 1) < 1:
            raise AssemblerError("--simulations must be at least 1")
        return args.func(args, settings)
    except (AssemblerError, OSError) as e:
        logging.error(f"{args.command} failed: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

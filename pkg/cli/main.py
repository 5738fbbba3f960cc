"""
Command-line entry point.

    python -m cli.main generate --dataset spiral --seed 7 --out runs/spiral
    python -m cli.main train --out runs/spiral --set model.kind=vt --set train.epochs=30
    python -m cli.main certify --out runs/spiral --epsilon 1e-3 --cross-check
    python -m cli.main eval --out runs/spiral
    python -m cli.main export-grid --out runs/spiral --resolution 100 --mode hard
    python -m cli.main export-tessellation --out runs/spiral

Commands after generate start from the dataset section of the config.json
already in the output directory; --dataset, --config and --set still win.

Exit codes: 0 success, 1 usage error, 2 numeric failure, 3 IO failure.
"""

import argparse
import json
import sys
import os
from typing import List, Optional

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.errors import ArgumentError, ConfigError
from models.events import EventEmitter, JsonLinesEventWriter, emitter_callback
from cli.config import load_config, resolve_output_dir, saved_dataset_section
from cli.commands import CommandRunner
from cli.manifest import RunManifest

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_IO = 3

EVENTS_FILE = "events.jsonl"
COMMANDS = ("generate", "train", "certify", "eval", "export-grid", "export-tessellation")


class UsageParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors as ArgumentError instead of exiting with 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ArgumentError(message)


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ArithmeticError):
        return EXIT_NUMERIC
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, ValueError):
        return EXIT_USAGE
    raise exc


def build_parser() -> argparse.ArgumentParser:
    common = UsageParser(add_help=False)
    common.add_argument("--config", help="Experiment config (JSON)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="Override a config value, e.g. train.epochs=30 (repeatable)")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--dataset", help="Shortcut for --set dataset.name=...")
    common.add_argument("--seed", type=int, help="Shortcut for --set dataset.seed=...")
    common.add_argument("--quiet", action="store_true", help="Do not echo events to stderr")

    parser = UsageParser(prog="geopc", description="Geometry-gated probabilistic circuit experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("generate", parents=[common], help="Generate and split a synthetic dataset")

    train = sub.add_parser("train", parents=[common], help="Build and train a circuit")
    train.add_argument("--data", help="Directory with the dataset CSVs (default: output directory)")
    train.add_argument("--kind", choices=["baseline", "vt", "hfv"], help="Shortcut for --set model.kind=...")

    certify = sub.add_parser("certify", parents=[common], help="Certified bounds on the partition function")
    certify.add_argument("--model", help="Model file (default: <out>/model.json)")
    certify.add_argument("--epsilon", type=float)
    certify.add_argument("--max-iters", type=int)
    certify.add_argument("--padding", type=float, help="Domain padding around the training data")
    certify.add_argument("--cross-check", action="store_true", default=None,
                         help="Compare against quadrature (2-D) or Monte Carlo")

    evaluate = sub.add_parser("eval", parents=[common], help="Test-set log-likelihood")
    evaluate.add_argument("--model")
    evaluate.add_argument("--data")
    evaluate.add_argument("--max-iters", type=int)

    grid = sub.add_parser("export-grid", parents=[common], help="Density grid CSV (2-D models)")
    grid.add_argument("--model")
    grid.add_argument("--resolution", type=int, default=100)
    grid.add_argument("--mode", choices=["hard", "soft"], default="hard")
    grid.add_argument("--alpha", type=float)

    tess = sub.add_parser("export-tessellation", parents=[common], help="Tessellation overlay (2-D models)")
    tess.add_argument("--model")
    return parser


def shortcut_overrides(args: argparse.Namespace) -> List[str]:
    overrides = []
    if args.dataset is not None:
        overrides.append(f"dataset.name={json.dumps(args.dataset)}")
    if args.seed is not None:
        overrides.append(f"dataset.seed={args.seed}")
    if getattr(args, "kind", None) is not None:
        overrides.append(f"model.kind={json.dumps(args.kind)}")
    return overrides


def dispatch(runner: CommandRunner, args: argparse.Namespace):
    if args.command == "generate":
        return {"files": runner.generate()}
    if args.command == "train":
        return runner.train(args.data)
    if args.command == "certify":
        return runner.certify(args.model, args.epsilon, args.max_iters, args.padding, args.cross_check)
    if args.command == "eval":
        return runner.evaluate(args.model, args.data, args.max_iters)
    if args.command == "export-grid":
        return {"grid": runner.export_grid(args.model, args.resolution, args.mode, args.alpha)}
    return {"overlay": runner.export_tessellation(args.model)}


def load_run_config(args: argparse.Namespace):
    """Config for this command and its output directory.

    Anything but ``generate`` inherits the dataset section saved in the
    output directory, so ``train --out <dir>`` needs no ``--dataset``.
    """
    overrides = list(args.set) + shortcut_overrides(args)
    config = load_config(args.config, overrides)
    out_dir = resolve_output_dir(config, args.out)
    if args.command != "generate":
        saved = saved_dataset_section(out_dir)
        if saved is not None:
            config = load_config(args.config, overrides, base={"dataset": saved})
    return config, out_dir


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config, out_dir = load_run_config(args)
        os.makedirs(out_dir, exist_ok=True)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)

    emitter = EventEmitter(echo=not args.quiet)
    writer = JsonLinesEventWriter(os.path.join(out_dir, EVENTS_FILE))
    emitter.add_listener(writer)
    manifest = RunManifest(args.command, config.config_hash(), out_dir, emitter=emitter)
    emitter.run_start(args.command, {"output_dir": out_dir, "config_hash": manifest.config_hash})

    code = EXIT_OK
    try:
        runner = CommandRunner(config, out_dir, manifest, emit_event_callback=emitter_callback(emitter))
        runner.write_config()
        summary = dispatch(runner, args)
        print(json.dumps(summary, indent=2, sort_keys=True, default=str))
    except (ValueError, ArithmeticError, OSError) as exc:
        code = exit_code_for(exc)
        print(f"error: {exc}", file=sys.stderr)
    finally:
        emitter.run_complete(args.command, code)
        writer.close()
        manifest.record_events()
        try:
            manifest.write()
        except OSError as exc:
            print(f"error: could not write manifest: {exc}", file=sys.stderr)
            code = code or EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())

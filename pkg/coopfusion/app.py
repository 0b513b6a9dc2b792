"""
coopfusion - Command Line Application

Benchmark driver for late collaborative 3D object fusion:

    coopfusion run <config.json>     run the (noise x method) grid
    coopfusion gen <scene.json> <out> write pseudo-collaborative scenes
    coopfusion eval <pred> <gt>      evaluate fused predictions

Defaults for logging, output directory and worker count can come from a
.env file or the environment (COOPFUSION_LOG_LEVEL, COOPFUSION_LOG_DIR,
COOPFUSION_OUT_DIR, COOPFUSION_WORKERS); explicit flags win.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional, Sequence

from dotenv import load_dotenv

from . import __version__
from .core.logging_cfg import setup_logging
from .core.metrics import FpPenalties
from .core.model import CoopFusionError

APP_NAME = "coopfusion"
APP_VERSION = __version__

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


class BenchApplication:
    """Command dispatch with logging setup and error mapping."""

    def __init__(self):
        self.logger: Optional[logging.Logger] = None

    def setup_logging(self, log_level: str = "INFO", log_dir: Optional[str] = None) -> None:
        """Console logging always; rotating log files only when a log directory is set."""
        setup_logging(log_level=log_level, log_dir=log_dir, file_output=log_dir is not None)
        self.logger = logging.getLogger(__name__)
        self.logger.debug(f"Starting {APP_NAME} v{APP_VERSION}")
        self.logger.debug(f"Python version: {sys.version}")
        self.logger.debug(f"Working directory: {os.getcwd()}")

    def check_dependencies(self) -> bool:
        """Check that the numerical stack is importable."""
        try:
            import numpy
            import scipy
            self.logger.debug(f"NumPy version: {numpy.__version__}")
            self.logger.debug(f"SciPy version: {scipy.__version__}")
            return True
        except ImportError as e:
            self.logger.error(f"Missing dependency: {e}")
            return False

    def run(self, args: argparse.Namespace) -> int:
        """Dispatch a parsed command; CoopFusionError maps to exit status 1."""
        handlers = {"run": self.cmd_run, "gen": self.cmd_gen, "eval": self.cmd_eval}
        try:
            return handlers[args.command](args)
        except CoopFusionError as e:
            self.logger.error(f"{args.command} failed: {e}")
            print(f"error: {e}", file=sys.stderr)
            return 1
        except KeyboardInterrupt:
            self.logger.info("Interrupted by user")
            return 130

    def cmd_run(self, args: argparse.Namespace) -> int:
        from .bench.report import to_markdown
        from .bench.runner import run_experiment

        result = run_experiment(
            args.config,
            out_dir=args.out_dir,
            formats=args.format,
            seed=args.seed,
            workers=args.workers,
            fused_dir=args.fused_dir,
        )
        sys.stdout.write(to_markdown(result.rows, title=result.config.name))
        for path in result.files:
            self.logger.info(f"Wrote {path}")
        return 0

    def cmd_gen(self, args: argparse.Namespace) -> int:
        from .bench.runner import generate_datasets

        manifests = generate_datasets(args.scene_spec, args.out, seed=args.seed)
        print(f"Generated {len(manifests)} scenes in {args.out}")
        return 0

    def cmd_eval(self, args: argparse.Namespace) -> int:
        from .bench.report import ResultRow, to_markdown, write_reports
        from .bench.runner import evaluate_files

        penalties = FpPenalties(
            translation=args.fp_translation,
            scale=args.fp_scale,
            orientation_deg=args.fp_orientation,
        )
        report = evaluate_files(args.pred, args.gt, penalties)
        rows = [ResultRow(noise="-", method=os.path.basename(args.pred), report=report)]
        sys.stdout.write(to_markdown(rows))
        if args.out_dir:
            write_reports(rows, args.out_dir, args.format or ("csv",), name="eval")
        return 0

    def shutdown(self) -> None:
        """Flush log handlers before exit."""
        if self.logger:
            self.logger.debug("Shutting down")
        for handler in logging.getLogger().handlers:
            handler.flush()


def _env_int(name: str) -> Optional[int]:
    value = os.environ.get(name)
    if value is None or value.strip() == "":
        return None
    try:
        return int(value)
    except ValueError:
        return None


def parse_arguments(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        prog=APP_NAME,
        description=f"{APP_NAME} v{APP_VERSION} - late collaborative 3D object fusion benchmark",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python -m coopfusion run configs/default.json
  python -m coopfusion run configs/default.json --seed 7 --format csv --format json
  python -m coopfusion run configs/quick.json --fused-dir fused
  python -m coopfusion gen configs/scene.json data/mild
  python -m coopfusion eval fused.jsonl data/mild/scene000/gt.jsonl
        """
    )
    parser.add_argument("--version", action="version", version=f"{APP_NAME} v{APP_VERSION}")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    parser.add_argument(
        "--log-level",
        choices=LOG_LEVELS,
        default=os.environ.get("COOPFUSION_LOG_LEVEL", "INFO").upper(),
        help="Set logging level (default: INFO)"
    )
    parser.add_argument(
        "--log-dir",
        type=str,
        default=os.environ.get("COOPFUSION_LOG_DIR") or None,
        help="Directory for rotating log files (default: no log files)"
    )

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="Override the random seed")
    common.add_argument(
        "--out-dir",
        type=str,
        default=os.environ.get("COOPFUSION_OUT_DIR") or None,
        help="Output directory for result tables"
    )
    common.add_argument(
        "--format",
        action="append",
        choices=["csv", "md", "json"],
        help="Output format (repeatable)"
    )

    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="Run an experiment grid")
    run.add_argument("config", help="Experiment config (JSON)")
    run.add_argument(
        "--workers",
        type=int,
        default=_env_int("COOPFUSION_WORKERS"),
        help="Parallel grid cells"
    )
    run.add_argument(
        "--fused-dir",
        type=str,
        help="Write per-scene fused predictions (JSON-lines) under this directory"
    )

    gen = sub.add_parser("gen", parents=[common], help="Generate pseudo-collaborative scenes")
    gen.add_argument("scene_spec", help="Scene spec (JSON)")
    gen.add_argument("out", help="Output directory")

    ev = sub.add_parser("eval", parents=[common], help="Evaluate fused predictions")
    ev.add_argument("pred", help="Fused predictions (JSON-lines)")
    ev.add_argument("gt", help="Ground-truth annotations (JSON-lines)")
    ev.add_argument("--fp-translation", type=float, default=3.0, help="FP translation penalty in m")
    ev.add_argument("--fp-scale", type=float, default=1.0, help="FP scale penalty in m")
    ev.add_argument("--fp-orientation", type=float, default=90.0, help="FP orientation penalty in deg")

    return parser.parse_args(argv)


def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point."""
    load_dotenv()
    args = parse_arguments(argv)
    if args.debug:
        args.log_level = "DEBUG"

    app_instance = BenchApplication()
    try:
        app_instance.setup_logging(log_level=args.log_level, log_dir=args.log_dir)
        if not app_instance.check_dependencies():
            print("error: required dependencies are missing", file=sys.stderr)
            return 1
        return app_instance.run(args)
    finally:
        app_instance.shutdown()


if __name__ == "__main__":
    sys.exit(main())

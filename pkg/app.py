"""Command-line entry point for the PINN / GKPINN experiment runner."""

import argparse
import json
import logging
import logging.handlers
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from core import (
    ExperimentConfig,
    ExperimentController,
    MissingAnalyticError,
    RunReport,
    TrainingAbortedError,
    UnsupportedProblemError,
)

# Load environment variables from .env file
load_dotenv()

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG_ERROR = 2
EXIT_TRAINING_ABORTED = 3

WORKERS_ENV = "GKPINN_WORKERS"
_HANDLER_NAMES = ("spde-gkpinn-console", "spde-gkpinn-file")


def setup_logging(debug: bool = False, log_to_file: bool = True) -> None:
    """Setup logging configuration."""
    level = logging.DEBUG if debug else logging.INFO

    # Create formatter
    formatter = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")

    root_logger = logging.getLogger()
    for handler in list(root_logger.handlers):
        if handler.get_name() in _HANDLER_NAMES:
            root_logger.removeHandler(handler)
            handler.close()

    # Console handler
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.set_name(_HANDLER_NAMES[0])
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    # File handler (rotating)
    if log_to_file:
        from path import get_logs_directory

        log_file = get_logs_directory() / "spde-gkpinn.log"
        file_handler = logging.handlers.RotatingFileHandler(
            log_file, maxBytes=10 * 1024 * 1024, backupCount=5
        )
        file_handler.set_name(_HANDLER_NAMES[1])
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        root_logger.addHandler(file_handler)

    root_logger.setLevel(level)

    # Reduce noise from some libraries
    logging.getLogger("numba").setLevel(logging.WARNING)


def get_worker_count() -> int:
    """Worker threads for point evaluation, from GKPINN_WORKERS (default 1)."""
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        workers = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got '{raw}'") from None
    if workers < 1:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {workers}")
    return workers


def _on_off(value: str) -> bool:
    lowered = value.lower()
    if lowered not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return lowered == "on"


# (flag, config field, argparse kwargs) for every overridable setting
_OVERRIDES = [
    ("--mode", "mode", {"choices": ["pinn", "gkpinn"], "help": "Model: plain PINN or layer-augmented GKPINN"}),
    ("--epsilon", "epsilon", {"type": float, "help": "Perturbation parameter"}),
    ("--iters", "iterations", {"type": int, "help": "Adam iterations"}),
    ("--seed", "seed", {"type": int, "help": "Seed for sampling and initialization"}),
    ("--out-dir", "out_dir", {"type": str, "help": "Output directory"}),
    (
        "--reference",
        "reference",
        {"choices": ["auto", "analytic", "fd", "none"], "help": "Test-set ground truth"},
    ),
    ("--fd-n", "fd_n", {"type": int, "help": "FD mesh cells per axis"}),
    ("--fd-nt", "fd_nt", {"type": int, "help": "FD time steps (time problems)"}),
    ("--fd-scheme", "fd_scheme", {"choices": ["upwind", "hybrid"], "help": "FD stencil"}),
    ("--fd-min-epsilon", "fd_min_epsilon", {"type": float, "help": "Smallest eps for auto FD references"}),
    ("--fd-cache", "fd_cache", {"type": _on_off, "metavar": "{on,off}", "help": "Cache FD references"}),
    ("--rba", "rba_enabled", {"type": _on_off, "metavar": "{on,off}", "help": "Residual-based attention"}),
    ("--rba-form", "rba_form", {"choices": ["squared_product", "weighted_square"], "help": "RBA weighting"}),
    ("--eta-star", "eta_star", {"type": float, "help": "RBA learning rate"}),
    ("--rba-init", "rba_init", {"type": float, "help": "Initial RBA weight"}),
    ("--norm", "norm", {"choices": ["paper", "prediction", "exact"], "help": "L2 error denominator (paper is an alias of prediction)"}),
    ("--hidden-sizes", "hidden_sizes", {"type": int, "nargs": "+", "help": "Hidden layer widths"}),
    ("--activation", "activation", {"choices": ["sigmoid", "tanh"], "help": "Hidden activation"}),
    ("--n-interior", "n_interior", {"type": int, "help": "Collocation points"}),
    ("--n-boundary", "n_boundary", {"type": int, "help": "Boundary points"}),
    ("--n-initial", "n_initial", {"type": int, "help": "Initial points (time problems)"}),
    ("--n-test", "n_test", {"type": int, "help": "Test grid size"}),
    ("--lr", "lr", {"type": float, "help": "Adam learning rate"}),
    ("--beta1", "beta1", {"type": float, "help": "Adam first moment decay"}),
    ("--beta2", "beta2", {"type": float, "help": "Adam second moment decay"}),
    ("--eps-hat", "eps_hat", {"type": float, "help": "Adam stabilizer"}),
    ("--history-stride", "history_stride", {"type": int, "help": "Iterations between history rows"}),
    ("--eval-stride", "eval_stride", {"type": int, "help": "Iterations between test evaluations"}),
    ("--grid-resolution", "grid_resolution", {"type": int, "help": "Solution grid points per axis"}),
]


def _add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, help="JSON config file (flags take precedence)")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    for flag, dest, kwargs in _OVERRIDES:
        parser.add_argument(flag, dest=dest, default=None, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    """Create the command-line parser."""
    parser = argparse.ArgumentParser(
        description="PINN and GKPINN solvers for singularly perturbed convection-diffusion problems",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python app.py run --example 1 --mode gkpinn --epsilon 1e-3
  python app.py run --problem-file my_problem.json --iters 20000
  python app.py matrix --examples 1 2 3 --modes pinn gkpinn --epsilons 1e-3 1e-38
  python app.py rerun runs/example1_gkpinn_eps1e-03_seed0/report.json
        """,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Train and evaluate one model")
    source = run.add_mutually_exclusive_group()
    source.add_argument("--example", type=int, help="Benchmark problem 1-8")
    source.add_argument("--problem-file", type=str, help="JSON problem definition")
    _add_common_arguments(run)

    matrix = subparsers.add_parser("matrix", help="Run an example x mode x epsilon matrix")
    matrix.add_argument("--examples", type=int, nargs="*", default=list(range(1, 9)))
    matrix.add_argument("--modes", nargs="+", choices=["pinn", "gkpinn"], default=["pinn", "gkpinn"])
    matrix.add_argument("--epsilons", type=float, nargs="+", default=[1e-3, 1e-38])
    _add_common_arguments(matrix)

    rerun = subparsers.add_parser("rerun", help="Re-execute the config echoed in a report")
    rerun.add_argument("report", type=str, help="Path to report.json")
    rerun.add_argument("--out-dir", type=str, default=None, help="Output directory for the rerun")
    rerun.add_argument("--debug", action="store_true", help="Enable debug logging")

    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """
    Merge built-in defaults, an optional JSON config file and command-line flags.

    Later sources take precedence.
    """
    data: Dict[str, Any] = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)

    for _, dest, _ in _OVERRIDES:
        value = getattr(args, dest, None)
        if value is not None:
            data[dest] = value

    if getattr(args, "problem_file", None):
        data["problem_file"] = args.problem_file
        data["example"] = None
    elif getattr(args, "example", None) is not None:
        data["example"] = args.example
        data["problem_file"] = None

    return ExperimentConfig(**data)


def _format_validation_error(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        field = ".".join(str(loc) for loc in item["loc"]) or "config"
        parts.append(f"{field}: {item['msg']}")
    return "; ".join(parts)


def _run(args: argparse.Namespace, controller: ExperimentController) -> int:
    config = load_config(args)
    report = controller.run_experiment(config)
    _print_report(report)
    return EXIT_OK


def _matrix(args: argparse.Namespace, controller: ExperimentController) -> int:
    template = load_config(args)
    out_dir = Path(template.out_dir) if template.out_dir else None
    rows = controller.run_matrix(template, args.examples, args.modes, args.epsilons, out_dir)
    failed = [row for row in rows if row.status != "ok"]
    for row in rows:
        l2 = "x" if row.l2_test is None else f"{row.l2_test:.3e}"
        loss = "-" if row.loss_total is None else f"{row.loss_total:.3e}"
        print(f"example{row.example:<3} {row.mode:<7} eps={row.epsilon:<8.0e} loss={loss:<10} l2={l2:<10} {row.status}")
    return EXIT_FAILURE if failed else EXIT_OK


def _rerun(args: argparse.Namespace, controller: ExperimentController) -> int:
    report_path = Path(args.report)
    if not report_path.exists():
        raise FileNotFoundError(f"Report not found: {report_path}")
    previous = RunReport.load_from_file(report_path)
    data = previous.config.to_dict()
    data["out_dir"] = args.out_dir or str(report_path.parent / "rerun")
    report = controller.run_experiment(ExperimentConfig(**data))
    _print_report(report)
    if previous.loss.total != report.loss.total:
        logging.getLogger(__name__).warning(
            f"Rerun loss {report.loss.total:.17g} differs from recorded {previous.loss.total:.17g}"
        )
    return EXIT_OK


def _print_report(report: RunReport) -> None:
    l2 = "x" if report.l2_test is None else f"{report.l2_test:.3e}"
    print(
        f"{report.problem} {report.mode.value} eps={report.epsilon:g}: "
        f"loss={report.loss.total:.3e} l2_test={l2} ({report.wall_time_seconds:.1f}s)"
    )


def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    # Setup logging
    setup_logging(args.debug)
    logger = logging.getLogger(__name__)

    try:
        controller = ExperimentController(workers=get_worker_count())
        handler = {"run": _run, "matrix": _matrix, "rerun": _rerun}[args.command]
        return handler(args, controller)
    except ValidationError as e:
        message = _format_validation_error(e)
        logger.error(f"Invalid configuration: {message}")
        print(f"error: invalid configuration: {message}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except (UnsupportedProblemError, MissingAnalyticError, FileNotFoundError, ValueError) as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except TrainingAbortedError as e:
        logger.error(f"{e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_TRAINING_ABORTED
    except Exception as e:
        logger.exception(f"Run failed: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

"""Experiment controller: problem setup, training, reference solutions and outputs."""

from __future__ import annotations

import logging
import time
from pathlib import Path
from typing import List, Optional, Sequence

from .errors import MissingAnalyticError, TrainingAbortedError
from .evaluation import Reference, evaluate_run, export_solution_grid, make_error_probe
from .fdref import ReferenceSolution, solve_reference
from .io_csv import (
    SummaryRow,
    load_reference,
    save_grid,
    save_history,
    save_reference,
    save_summary,
)
from .layers import ModelMode, build_model
from .models import ExperimentConfig, ReferenceMode, RunReport
from .problems import PerturbedProblem, get_example, load_problem_file
from .sampling import sample_problem_points
from .training import train

CONFIG_FILE = "config.json"
HISTORY_FILE = "history.csv"
REPORT_FILE = "report.json"
GRID_FILE = "solution.csv"
SUMMARY_FILE = "summary.csv"


class ExperimentController:
    """
    Runs experiments end to end: sample, build, train, reference, evaluate, export.

    Intra-run parallelism is delegated to training and evaluation through `workers`.
    """

    def __init__(
        self,
        workers: int = 1,
        cache_dir: Optional[Path] = None,
        runs_dir: Optional[Path] = None,
    ):
        if workers < 1:
            raise ValueError(f"workers must be at least 1, got {workers}")
        self._workers = workers
        self._cache_dir = cache_dir
        self._runs_dir = runs_dir
        self._logger = logging.getLogger(__name__)

    @property
    def workers(self) -> int:
        return self._workers

    def load_problem(self, config: ExperimentConfig) -> PerturbedProblem:
        """Build the configured benchmark or custom problem."""
        if config.problem_file is not None:
            return load_problem_file(config.problem_file, config.epsilon)
        return get_example(config.example, config.epsilon)

    def resolve_reference_mode(
        self, problem: PerturbedProblem, config: ExperimentConfig
    ) -> ReferenceMode:
        """Turn `auto` into analytic, fd or none for this problem and epsilon."""
        if config.reference != ReferenceMode.AUTO:
            return config.reference
        if problem.has_analytic:
            return ReferenceMode.ANALYTIC
        if problem.epsilon >= config.fd_min_epsilon:
            return ReferenceMode.FD
        return ReferenceMode.NONE

    def build_reference(self, problem: PerturbedProblem, config: ExperimentConfig) -> Reference:
        """Analytic field, finite-difference solution (cached), or None."""
        mode = self.resolve_reference_mode(problem, config)
        if mode == ReferenceMode.NONE:
            self._logger.info(f"No reference for {problem.name} at eps={problem.epsilon:g}")
            return None
        if mode == ReferenceMode.ANALYTIC:
            if not problem.has_analytic:
                raise MissingAnalyticError(
                    f"Problem '{problem.name}' has no analytic solution; use --reference fd"
                )
            from fields.analytic import AnalyticField

            return AnalyticField(problem)
        return self._fd_reference(problem, config)

    def _cache_path(self, problem: PerturbedProblem, config: ExperimentConfig) -> Optional[Path]:
        # Only benchmark problems have a stable identity to key the cache on
        if not config.fd_cache or problem.example_id is None:
            return None
        if self._cache_dir is None:
            from path import get_cache_directory

            self._cache_dir = get_cache_directory()
        name = (
            f"example{problem.example_id}_eps{problem.epsilon:.6e}_n{config.fd_n}"
            f"_nt{config.fd_nt}_{config.fd_scheme.value}.csv"
        )
        return Path(self._cache_dir) / name

    def _fd_reference(
        self, problem: PerturbedProblem, config: ExperimentConfig
    ) -> ReferenceSolution:
        cache_file = self._cache_path(problem, config)
        if cache_file is not None and cache_file.exists():
            try:
                reference = load_reference(cache_file)
                self._logger.info(f"Loaded cached reference {cache_file.name}")
                return reference
            except (ValueError, KeyError) as e:
                self._logger.warning(f"Ignoring unreadable reference cache {cache_file}: {e}")

        started = time.perf_counter()
        reference = solve_reference(problem, config.fd_n, config.fd_nt, config.fd_scheme)
        self._logger.info(
            f"Solved FD reference for {problem.name} in {time.perf_counter() - started:.1f}s"
        )
        if cache_file is not None:
            try:
                cache_file.parent.mkdir(parents=True, exist_ok=True)
                save_reference(cache_file, reference)
            except OSError as e:
                self._logger.warning(f"Failed to cache reference: {e}")
        return reference

    def _default_runs_directory(self) -> Path:
        if self._runs_dir is None:
            from path import get_runs_directory

            self._runs_dir = get_runs_directory()
        return Path(self._runs_dir)

    def output_directory(self, config: ExperimentConfig) -> Path:
        """Directory for a run's files, created on demand."""
        if config.out_dir is not None:
            out_dir = Path(config.out_dir)
        else:
            out_dir = self._default_runs_directory() / config.run_label()
        out_dir.mkdir(parents=True, exist_ok=True)
        return out_dir

    def run_experiment(self, config: ExperimentConfig) -> RunReport:
        """
        Execute one run and write config.json, history.csv, solution.csv and report.json.

        Args:
            config: Experiment settings; kind-dependent defaults are resolved here

        Returns:
            The run report (also written to report.json)
        """
        started = time.perf_counter()
        problem = self.load_problem(config)
        config = config.resolved_for(problem.kind)
        out_dir = self.output_directory(config)
        config.save_to_file(out_dir / CONFIG_FILE)
        self._logger.info(
            f"Running {problem.name} ({config.mode.value}, eps={config.epsilon:g}) -> {out_dir}"
        )

        points = sample_problem_points(
            problem,
            config.n_interior,
            config.n_boundary,
            config.n_initial if problem.is_time_dependent else 0,
            config.seed,
            n_test=config.n_test,
        )
        model = build_model(problem, config.hidden_sizes, config.activation, config.seed, config.mode)
        reference = self.build_reference(problem, config)
        probe = make_error_probe(reference, points.test, config.norm, self._workers)

        train_config = config.train_config()
        try:
            trained, history = train(
                model, problem, points, train_config, workers=self._workers, evaluator=probe
            )
        except TrainingAbortedError as exc:
            save_history(out_dir / HISTORY_FILE, exc.history)
            self._logger.error(
                f"Saved {len(exc.history)} history rows before the abort to {out_dir / HISTORY_FILE}"
            )
            raise
        save_history(out_dir / HISTORY_FILE, history)

        grid = export_solution_grid(
            trained, problem, config.grid_resolution, reference, self._workers
        )
        save_grid(out_dir / GRID_FILE, grid)

        report = evaluate_run(
            trained,
            problem,
            reference,
            points.test,
            history[-1].summary(),
            config,
            wall_time_seconds=time.perf_counter() - started,
            workers=self._workers,
        )
        report.history_file = HISTORY_FILE
        report.grid_file = GRID_FILE
        report.save_to_file(out_dir / REPORT_FILE)
        self._logger.info(
            f"Finished {problem.name} ({config.mode.value}): loss={report.loss.total:.3e}, "
            f"l2_test={'x' if report.l2_test is None else f'{report.l2_test:.3e}'}"
        )
        return report

    def run_matrix(
        self,
        template: ExperimentConfig,
        examples: Sequence[int],
        modes: Sequence[ModelMode],
        epsilons: Sequence[float],
        out_dir: Optional[Path] = None,
    ) -> List[SummaryRow]:
        """
        Run every (example, mode, epsilon) combination and write summary.csv.

        Failed runs are recorded in their row and the matrix continues.

        Args:
            template: Settings shared by all runs
            examples: Benchmark indices
            modes: Model modes
            epsilons: Perturbation parameters
            out_dir: Matrix directory (default: template.out_dir or ./runs/matrix)

        Returns:
            One summary row per run
        """
        if out_dir is None:
            out_dir = template.out_dir or self._default_runs_directory() / "matrix"
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        rows: List[SummaryRow] = []
        modes = [ModelMode(mode) for mode in modes]
        for example in examples:
            for mode in modes:
                for epsilon in epsilons:
                    label = f"example{example}_{mode.value}_eps{epsilon:.0e}"
                    row = SummaryRow(
                        example=str(example), problem=f"example{example}", mode=mode.value, epsilon=epsilon
                    )
                    try:
                        data = template.to_dict()
                        data.update(
                            example=example,
                            problem_file=None,
                            mode=mode.value,
                            epsilon=epsilon,
                            out_dir=str(out_dir / label),
                        )
                        report = self.run_experiment(ExperimentConfig(**data))
                        row.loss_total = report.loss.total
                        row.l2_test = report.l2_test
                    except Exception as e:
                        self._logger.error(f"Run {label} failed: {e}")
                        row.status = f"failed: {type(e).__name__}: {e}"
                    rows.append(row)

        save_summary(out_dir / SUMMARY_FILE, rows)
        self._logger.info(f"Wrote {len(rows)} summary rows to {out_dir / SUMMARY_FILE}")
        return rows


def run_experiment(config: ExperimentConfig, workers: int = 1) -> RunReport:
    """Run one experiment with a default controller."""
    return ExperimentController(workers=workers).run_experiment(config)


def run_matrix(
    template: ExperimentConfig,
    examples: Sequence[int],
    modes: Sequence[ModelMode],
    epsilons: Sequence[float],
    out_dir: Optional[Path] = None,
    workers: int = 1,
) -> List[SummaryRow]:
    """Run an experiment matrix with a default controller."""
    return ExperimentController(workers=workers).run_matrix(
        template, examples, modes, epsilons, out_dir
    )

"""Test-set error metrics, run reports and solution grid export."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Union

import numpy as np
import pandas as pd

from fields.base import FieldEvaluator, as_points

from .fdref import ReferenceSolution
from .models import ExperimentConfig, LossSummary, NormMode, ReferenceMode, RunReport
from .problems import PerturbedProblem, ProblemKind

logger = logging.getLogger(__name__)

# Closed-form field, finite-difference grid, or nothing
Reference = Union[FieldEvaluator, ReferenceSolution, None]

COORDINATE_COLUMNS = {
    ProblemKind.STEADY_1D: ["x"],
    ProblemKind.STEADY_2D: ["x", "y"],
    ProblemKind.TIME_1D: ["x", "t"],
}


def l2_relative_error(pred, ref, norm: NormMode = NormMode.PREDICTION) -> float:
    """
    Relative L2 test error sqrt(sum|pred - ref|^2 / sum|u|^2).

    With the default norm u is the prediction; with ``exact`` it is the
    reference. A zero denominator yields +inf.

    Args:
        pred: Predicted values
        ref: Reference values
        norm: Which vector normalizes the error

    Returns:
        Relative error, or inf
    """
    pred = np.asarray(pred, dtype=np.float64).ravel()
    ref = np.asarray(ref, dtype=np.float64).ravel()
    if pred.shape != ref.shape:
        raise ValueError(f"Length mismatch: {pred.shape[0]} predictions vs {ref.shape[0]} references")
    if pred.size == 0:
        raise ValueError("Cannot compute an error over zero points")

    scale = pred if NormMode(norm) == NormMode.PREDICTION else ref
    denominator = float(np.sum(scale * scale))
    if denominator == 0.0:
        logger.warning(f"L2 error denominator ({NormMode(norm).value} norm) is zero, returning inf")
        return float("inf")
    diff = pred - ref
    return float(np.sqrt(np.sum(diff * diff) / denominator))


def predict(model: FieldEvaluator, points, workers: int = 1) -> np.ndarray:
    """Model values at the points, evaluated in ordered chunks on a thread pool."""
    pts = as_points(points, model.input_dim)
    if workers <= 1 or pts.shape[0] < 2 * workers:
        return model.values(pts)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(model.values, np.array_split(pts, workers)))
    return np.concatenate(parts)


def reference_values(reference: Reference, points) -> Optional[np.ndarray]:
    """Reference values at the points; None when there is no reference."""
    if reference is None:
        return None
    if isinstance(reference, ReferenceSolution):
        return reference.interpolate(points)
    return reference.values(points)


def reference_mode_of(reference: Reference) -> ReferenceMode:
    if reference is None:
        return ReferenceMode.NONE
    if isinstance(reference, ReferenceSolution):
        return ReferenceMode.FD
    return ReferenceMode.ANALYTIC


def make_error_probe(
    reference: Reference,
    test_points: np.ndarray,
    norm: NormMode = NormMode.PREDICTION,
    workers: int = 1,
) -> Optional[Callable[[FieldEvaluator], float]]:
    """Callable returning a model's test error, or None without a reference."""
    ref = reference_values(reference, test_points)
    if ref is None:
        return None

    def probe(model: FieldEvaluator) -> float:
        return l2_relative_error(predict(model, test_points, workers), ref, norm)

    return probe


def evaluate_run(
    model: FieldEvaluator,
    problem: PerturbedProblem,
    reference: Reference,
    test_points,
    loss: LossSummary,
    config: ExperimentConfig,
    wall_time_seconds: float = 0.0,
    workers: int = 1,
) -> RunReport:
    """
    Score a trained model and bundle the outcome with its configuration.

    Args:
        model: Trained field
        problem: Problem it was trained on
        reference: Analytic field, FD solution, or None (no test error)
        test_points: Evaluation grid
        loss: Final loss terms
        config: Experiment configuration echoed into the report
        wall_time_seconds: Elapsed run time
        workers: Threads for model evaluation

    Returns:
        RunReport; l2_test is None without a reference
    """
    pts = as_points(test_points, problem.dim)
    ref = reference_values(reference, pts)
    l2 = None
    if ref is not None:
        l2 = l2_relative_error(predict(model, pts, workers), ref, config.norm)
        logger.info(f"{problem.name}: l2_test = {l2:.3e} ({config.norm.value} norm)")
    else:
        logger.info(f"{problem.name}: no reference, l2_test omitted")

    return RunReport(
        problem=problem.name,
        example=problem.example_id,
        mode=config.mode,
        epsilon=problem.epsilon,
        loss=loss,
        l2_test=l2,
        reference=reference_mode_of(reference),
        norm=config.norm,
        wall_time_seconds=float(wall_time_seconds),
        iterations=config.iterations,
        config=config,
    )


def solution_grid(problem: PerturbedProblem, resolution: int) -> np.ndarray:
    """Dense grid: resolution points in 1D, resolution^2 with x varying fastest otherwise."""
    if resolution < 2:
        raise ValueError(f"resolution must be at least 2, got {resolution}")
    s = np.linspace(0.0, 1.0, resolution)
    if problem.dim == 1:
        return s[:, None]
    xx, yy = np.meshgrid(s, s)
    return np.column_stack([xx.ravel(), yy.ravel()])


def export_solution_grid(
    model: FieldEvaluator,
    problem: PerturbedProblem,
    resolution: int,
    reference: Reference = None,
    workers: int = 1,
) -> pd.DataFrame:
    """
    Tabulate model (and reference) values on a dense grid.

    Columns are the coordinates, ``u_pred`` and, with a reference, ``u_ref``
    and ``abs_error``.
    """
    grid = solution_grid(problem, resolution)
    frame = pd.DataFrame(grid, columns=COORDINATE_COLUMNS[problem.kind])
    frame["u_pred"] = predict(model, grid, workers)
    ref = reference_values(reference, grid)
    if ref is not None:
        frame["u_ref"] = ref
        frame["abs_error"] = np.abs(frame["u_pred"].to_numpy() - ref)
    return frame

"""Core package for the singularly perturbed PINN / GKPINN solvers."""

from .controller import ExperimentController, run_experiment, run_matrix
from .diffnet import Activation, MLPField, eval_jet, init_mlp
from .errors import (
    ConvergenceError,
    MissingAnalyticError,
    NonFiniteError,
    SingularSystemError,
    TrainingAbortedError,
    UnsupportedProblemError,
)
from .evaluation import evaluate_run, export_solution_grid, l2_relative_error
from .fdref import ReferenceSolution, shishkin_mesh, solve_reference
from .io_csv import load_history, save_history, save_summary
from .layers import BoundaryLayerSpec, CompositeModel, ModelMode, build_model, infer_layers
from .models import ExperimentConfig, LossSummary, RunReport, TrainConfig
from .problems import PerturbedProblem, ProblemKind, builtin_examples, get_example
from .sampling import PointSets, latin_hypercube, sample_problem_points
from .training import RBAWeights, adam_step, assemble_loss, rba_update, train

__all__ = [
    "ExperimentController",
    "run_experiment",
    "run_matrix",
    "Activation",
    "MLPField",
    "eval_jet",
    "init_mlp",
    "ConvergenceError",
    "MissingAnalyticError",
    "NonFiniteError",
    "SingularSystemError",
    "TrainingAbortedError",
    "UnsupportedProblemError",
    "evaluate_run",
    "export_solution_grid",
    "l2_relative_error",
    "ReferenceSolution",
    "shishkin_mesh",
    "solve_reference",
    "load_history",
    "save_history",
    "save_summary",
    "BoundaryLayerSpec",
    "CompositeModel",
    "ModelMode",
    "build_model",
    "infer_layers",
    "ExperimentConfig",
    "LossSummary",
    "RunReport",
    "TrainConfig",
    "PerturbedProblem",
    "ProblemKind",
    "builtin_examples",
    "get_example",
    "PointSets",
    "latin_hypercube",
    "sample_problem_points",
    "RBAWeights",
    "adam_step",
    "assemble_loss",
    "rba_update",
    "train",
]

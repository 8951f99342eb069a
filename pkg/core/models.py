"""Configuration and report models for solver experiments."""

from __future__ import annotations

import json
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .diffnet import Activation
from .layers import ModelMode
from .problems import ProblemKind


class ReferenceMode(str, Enum):
    """Source of the test-set ground truth."""

    AUTO = "auto"
    ANALYTIC = "analytic"
    FD = "fd"
    NONE = "none"


class NormMode(str, Enum):
    """Denominator of the relative L2 error: the prediction or the reference."""

    PREDICTION = "prediction"
    EXACT = "exact"

    @classmethod
    def _missing_(cls, value):
        # "paper" is the command-line name of the prediction-normalized error
        if isinstance(value, str) and value.lower() == "paper":
            return cls.PREDICTION
        return None


class RBAForm(str, Enum):
    """How residual weights enter the residual loss."""

    SQUARED_PRODUCT = "squared_product"  # (lambda*R)^2
    WEIGHTED_SQUARE = "weighted_square"  # lambda*R^2


class FDScheme(str, Enum):
    UPWIND = "upwind"
    HYBRID = "hybrid"


class TrainConfig(BaseModel):
    """Optimizer, attention weighting and loop settings of one training run."""

    iterations: int = 50000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    rba_enabled: bool = True
    eta_star: float = 1e-4
    rba_init: float = 1.0
    rba_form: RBAForm = RBAForm.SQUARED_PRODUCT
    seed: int = 0
    history_stride: int = 100
    eval_stride: int = 1000

    @field_validator("iterations")
    @classmethod
    def validate_iterations(cls, v: int) -> int:
        """Validate the iteration count is nonnegative."""
        if v < 0:
            raise ValueError("iterations must be nonnegative")
        return v

    @field_validator("lr", "eps_hat")
    @classmethod
    def validate_positive(cls, v: float) -> float:
        """Validate step size and stabilizer are positive."""
        if v <= 0:
            raise ValueError("must be positive")
        return v

    @field_validator("beta1", "beta2")
    @classmethod
    def validate_beta(cls, v: float) -> float:
        """Validate Adam moment decay rates lie in [0, 1)."""
        if not 0.0 <= v < 1.0:
            raise ValueError("must lie in [0, 1)")
        return v

    @field_validator("eta_star", "rba_init")
    @classmethod
    def validate_unit_interval(cls, v: float) -> float:
        """Validate RBA rate and initial weight lie in [0, 1]."""
        if not 0.0 <= v <= 1.0:
            raise ValueError("must lie in [0, 1]")
        return v

    @field_validator("history_stride", "eval_stride")
    @classmethod
    def validate_stride(cls, v: int) -> int:
        """Validate recording strides are positive."""
        if v < 1:
            raise ValueError("stride must be at least 1")
        return v


# Protocol defaults per problem kind
_KIND_DEFAULTS: Dict[ProblemKind, Dict[str, Any]] = {
    ProblemKind.STEADY_1D: {
        "activation": Activation.SIGMOID,
        "n_interior": 1000,
        "n_boundary": 50,
        "n_initial": 0,
        "grid_resolution": 401,
        "fd_n": 4096,
        "fd_nt": None,
    },
    ProblemKind.STEADY_2D: {
        "activation": Activation.TANH,
        "n_interior": 10000,
        "n_boundary": 100,
        "n_initial": 0,
        "grid_resolution": 101,
        "fd_n": 256,
        "fd_nt": None,
    },
    ProblemKind.TIME_1D: {
        "activation": Activation.TANH,
        "n_interior": 10000,
        "n_boundary": 100,
        "n_initial": 100,
        "grid_resolution": 101,
        "fd_n": 512,
        "fd_nt": 512,
    },
}


class ExperimentConfig(BaseModel):
    """
    Every setting of one experiment run.

    Fields left as None are filled per problem kind by `resolved_for`.
    """

    # Problem
    example: Optional[int] = 1
    problem_file: Optional[str] = None
    epsilon: float = 1e-3

    # Model
    mode: ModelMode = ModelMode.GKPINN
    hidden_sizes: List[int] = Field(default_factory=lambda: [100, 100])
    activation: Optional[Activation] = None

    # Sampling
    n_interior: Optional[int] = None
    n_boundary: Optional[int] = None
    n_initial: Optional[int] = None
    n_test: int = 400

    # Training
    iterations: int = 50000
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    rba_enabled: bool = True
    eta_star: float = 1e-4
    rba_init: float = 1.0
    rba_form: RBAForm = RBAForm.SQUARED_PRODUCT
    history_stride: int = 100
    eval_stride: int = 1000

    # Reference and evaluation
    reference: ReferenceMode = ReferenceMode.AUTO
    fd_n: Optional[int] = None
    fd_nt: Optional[int] = None
    fd_scheme: FDScheme = FDScheme.HYBRID
    fd_min_epsilon: float = 1e-12
    fd_cache: bool = True
    norm: NormMode = NormMode.PREDICTION
    grid_resolution: Optional[int] = None

    # Output
    out_dir: Optional[str] = None

    @field_validator("example")
    @classmethod
    def validate_example(cls, v: Optional[int]) -> Optional[int]:
        """Validate the benchmark index is 1-8."""
        if v is not None and not 1 <= v <= 8:
            raise ValueError("example must be between 1 and 8")
        return v

    @field_validator("epsilon")
    @classmethod
    def validate_epsilon(cls, v: float) -> float:
        """Validate the perturbation parameter is positive."""
        if not v > 0:
            raise ValueError("epsilon must be positive")
        return v

    @field_validator("hidden_sizes")
    @classmethod
    def validate_hidden_sizes(cls, v: List[int]) -> List[int]:
        """Validate there is at least one positive hidden width."""
        if not v or any(n < 1 for n in v):
            raise ValueError("hidden_sizes needs at least one positive width")
        return v

    @field_validator("n_interior", "n_boundary", "fd_n", "fd_nt")
    @classmethod
    def validate_positive_count(cls, v: Optional[int]) -> Optional[int]:
        """Validate point counts and mesh sizes are positive."""
        if v is not None and v < 1:
            raise ValueError("must be positive")
        return v

    @field_validator("n_initial")
    @classmethod
    def validate_initial_count(cls, v: Optional[int]) -> Optional[int]:
        """Validate the initial point count is nonnegative."""
        if v is not None and v < 0:
            raise ValueError("must be nonnegative")
        return v

    @field_validator("n_test", "grid_resolution")
    @classmethod
    def validate_grid(cls, v: Optional[int]) -> Optional[int]:
        """Validate evaluation grids have at least two points."""
        if v is not None and v < 2:
            raise ValueError("must be at least 2")
        return v

    @model_validator(mode="after")
    def validate_problem_source(self) -> ExperimentConfig:
        """Validate exactly one problem source is given and training settings are valid."""
        if self.problem_file is not None and "example" not in self.model_fields_set:
            self.example = None
        if (self.example is None) == (self.problem_file is None):
            raise ValueError("exactly one of example and problem_file must be set")
        # Reuse TrainConfig's field checks
        self.train_config()
        return self

    def train_config(self) -> TrainConfig:
        """Training settings carried by this experiment."""
        return TrainConfig(
            iterations=self.iterations,
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            eps_hat=self.eps_hat,
            rba_enabled=self.rba_enabled,
            eta_star=self.eta_star,
            rba_init=self.rba_init,
            rba_form=self.rba_form,
            seed=self.seed,
            history_stride=self.history_stride,
            eval_stride=self.eval_stride,
        )

    def resolved_for(self, kind: ProblemKind) -> ExperimentConfig:
        """Copy with every kind-dependent default filled in."""
        defaults = _KIND_DEFAULTS[ProblemKind(kind)]
        updates = {key: value for key, value in defaults.items() if getattr(self, key) is None}
        return self.model_copy(update=updates)

    def run_label(self) -> str:
        """Short directory-friendly name of the run."""
        if self.example is not None:
            source = f"example{self.example}"
        else:
            source = Path(self.problem_file).stem
        return f"{source}_{self.mode.value}_eps{self.epsilon:.0e}_seed{self.seed}"

    def to_dict(self) -> Dict[str, Any]:
        """Convert config to dictionary for JSON serialization."""
        return self.model_dump(mode="json")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> ExperimentConfig:
        """Create config from dictionary."""
        return cls(**data)

    def save_to_file(self, filepath: Union[str, Path]) -> None:
        """Save configuration to JSON file."""
        with open(filepath, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load_from_file(cls, filepath: Union[str, Path]) -> ExperimentConfig:
        """Load configuration from JSON file; missing or invalid files are errors."""
        path = Path(filepath)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        return cls.from_dict(data)


class LossSummary(BaseModel):
    """Final loss terms of a run."""

    l_ic: float
    l_bc: float
    l_r: float
    total: float


class RunReport(BaseModel):
    """Outcome of one experiment; `config` reproduces the run."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    problem: str
    example: Optional[int] = None
    mode: ModelMode
    epsilon: float
    loss: LossSummary
    l2_test: Optional[float] = None  # absent when there is no reference
    reference: ReferenceMode
    norm: NormMode = NormMode.PREDICTION
    wall_time_seconds: float
    iterations: int
    config: ExperimentConfig
    history_file: Optional[str] = None
    grid_file: Optional[str] = None

    @field_validator("l2_test")
    @classmethod
    def validate_l2(cls, v: Optional[float]) -> Optional[float]:
        """Validate the test error is nonnegative when present."""
        if v is not None and not v >= 0:
            raise ValueError("l2_test must be nonnegative")
        return v

    def to_dict(self) -> Dict[str, Any]:
        """Convert report to dictionary for JSON serialization."""
        return self.model_dump(mode="json")

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    @classmethod
    def from_json(cls, text: str) -> RunReport:
        return cls.model_validate_json(text)

    def save_to_file(self, filepath: Union[str, Path]) -> None:
        """Save report to JSON file."""
        with open(filepath, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def load_from_file(cls, filepath: Union[str, Path]) -> RunReport:
        """Load report from JSON file."""
        with open(filepath, "r", encoding="utf-8") as f:
            return cls.from_json(f.read())

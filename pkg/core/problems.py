"""Singularly perturbed problem definitions, the residual operator and the benchmark set."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from functools import partial
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, field_validator, model_validator

from fields.base import FieldEvaluator, FieldJet, as_points

from .errors import MissingAnalyticError

logger = logging.getLogger(__name__)

PI = np.pi
EDGE_TOLERANCE = 1e-14

# points (N, d) -> values (N,) or (N, 2)
PointFunction = Callable[[np.ndarray], np.ndarray]
# (points, epsilon) -> exact jet of the solution
AnalyticFunction = Callable[[np.ndarray, float], FieldJet]


class ProblemKind(str, Enum):
    """Dimensionality of a problem."""

    STEADY_1D = "steady1d"
    STEADY_2D = "steady2d"
    TIME_1D = "time1d"


@dataclass(frozen=True)
class OperatorCoefficients:
    """
    Residual written as a linear functional of the jet:

    R = value*u + sum_k grad[:, k]*u_k + sum_k hess[:, k]*u_kk - rhs
    """

    value: np.ndarray  # (N,)
    grad: np.ndarray  # (N, d)
    hess: np.ndarray  # (N, d)
    rhs: np.ndarray  # (N,)

    def apply(self, jet: FieldJet, homogeneous: bool = False) -> np.ndarray:
        r = (
            self.value * jet.value
            + (self.grad * jet.grad).sum(axis=1)
            + (self.hess * jet.diag_hess).sum(axis=1)
        )
        return r if homogeneous else r - self.rhs


@dataclass(frozen=True)
class PerturbedProblem:
    """
    A linear singularly perturbed convection-diffusion(-reaction) problem.

    The PDE is stored in its printed form:
        [u_t] + diffusion_sign*eps*Lap(u) + b.grad(u) + c*u = f
    on the unit interval/square, with time horizon (0, 1] for TIME_1D.
    """

    name: str
    kind: ProblemKind
    epsilon: float
    diffusion_sign: int
    convection: PointFunction  # b: (N,) for 1D/time, (N, 2) for 2D
    reaction: PointFunction  # c
    forcing: PointFunction  # f
    boundary: PointFunction  # Dirichlet data at boundary points
    initial: Optional[PointFunction] = None  # g(x) at t = 0, TIME_1D only
    analytic: Optional[AnalyticFunction] = None
    example_id: Optional[int] = None
    # rebuilds the problem at another epsilon; coefficient closures capture eps
    factory: Optional[Callable[[float], PerturbedProblem]] = field(
        default=None, compare=False, repr=False
    )

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.diffusion_sign not in (-1, 1):
            raise ValueError(f"diffusion_sign must be +1 or -1, got {self.diffusion_sign}")
        if self.kind == ProblemKind.TIME_1D and self.initial is None:
            raise ValueError("Time-dependent problems need initial data")
        if self.kind != ProblemKind.TIME_1D and self.initial is not None:
            raise ValueError("Initial data is only meaningful for time-dependent problems")

    @property
    def dim(self) -> int:
        """Number of input coordinates: x, (x, y) or (x, t)."""
        return 1 if self.kind == ProblemKind.STEADY_1D else 2

    @property
    def is_time_dependent(self) -> bool:
        return self.kind == ProblemKind.TIME_1D

    @property
    def has_analytic(self) -> bool:
        return self.analytic is not None

    def with_epsilon(self, epsilon: float) -> PerturbedProblem:
        if self.factory is not None:
            return self.factory(float(epsilon))
        logger.warning(
            f"Problem '{self.name}' has no factory; coefficients keep eps={self.epsilon}"
        )
        return replace(self, epsilon=float(epsilon))

    def convection_at(self, points: np.ndarray) -> np.ndarray:
        """Convection coefficient as an (N, n_axes) array; n_axes = 2 only for 2D."""
        pts = as_points(points, self.dim)
        n = pts.shape[0]
        b = np.asarray(self.convection(pts), dtype=np.float64)
        n_axes = 2 if self.kind == ProblemKind.STEADY_2D else 1
        if b.ndim <= 1:
            b = np.broadcast_to(b, (n,))[:, None]
        return np.broadcast_to(b, (n, n_axes)).copy()

    def operator_coefficients(self, points) -> OperatorCoefficients:
        """Coefficients of the residual at the given points."""
        pts = as_points(points, self.dim)
        n = pts.shape[0]
        b = self.convection_at(pts)
        c = _broadcast(self.reaction(pts), n)
        f = _broadcast(self.forcing(pts), n)
        diffusion = self.diffusion_sign * self.epsilon

        grad = np.zeros((n, self.dim))
        hess = np.zeros((n, self.dim))
        if self.kind == ProblemKind.STEADY_1D:
            grad[:, 0] = b[:, 0]
            hess[:, 0] = diffusion
        elif self.kind == ProblemKind.STEADY_2D:
            grad[:] = b
            hess[:] = diffusion
        else:
            # (x, t): diffusion and convection act on x, u_t enters with unit weight
            grad[:, 0] = b[:, 0]
            grad[:, 1] = 1.0
            hess[:, 0] = diffusion
        return OperatorCoefficients(value=c, grad=grad, hess=hess, rhs=f)

    def boundary_values(self, points) -> np.ndarray:
        pts = as_points(points, self.dim)
        return _broadcast(self.boundary(pts), pts.shape[0])

    def initial_values(self, x) -> np.ndarray:
        """Initial data g at the given x coordinates (t = 0)."""
        if self.initial is None:
            raise ValueError(f"Problem '{self.name}' has no initial data")
        xs = np.asarray(x, dtype=np.float64).reshape(-1)
        pts = np.column_stack([xs, np.zeros_like(xs)])
        return _broadcast(self.initial(pts), xs.shape[0])


def _broadcast(values, n: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(values, dtype=np.float64), (n,)).copy()


def residual(problem: PerturbedProblem, field: FieldEvaluator, points, homogeneous: bool = False) -> np.ndarray:
    """
    PDE residual (left-hand side minus right-hand side) of a field.

    Args:
        problem: Problem whose operator is applied
        field: Field supplying value and derivatives
        points: Interior points, shape (N, d)
        homogeneous: Omit the forcing term

    Returns:
        Residual at each point, shape (N,)
    """
    if field.input_dim != problem.dim:
        raise ValueError(
            f"Field has {field.input_dim} inputs but problem '{problem.name}' needs {problem.dim}"
        )
    pts = as_points(points, problem.dim)
    return problem.operator_coefficients(pts).apply(field.jet(pts), homogeneous=homogeneous)


def analytic_on_grid(problem: PerturbedProblem, points) -> np.ndarray:
    """Closed-form solution values at the points (overflow-safe forms only)."""
    if problem.analytic is None:
        raise MissingAnalyticError(f"Problem '{problem.name}' has no analytic solution")
    pts = as_points(points, problem.dim)
    return problem.analytic(pts, problem.epsilon).value


# Boundary data builders


def dirichlet_1d(left: float, right: float) -> PointFunction:
    """u(0) = left, u(1) = right."""

    def boundary(points: np.ndarray) -> np.ndarray:
        return np.where(points[:, 0] < 0.5, left, right)

    return boundary


def dirichlet_time(q0: PointFunction, q1: PointFunction) -> PointFunction:
    """u(0, t) = q0(t), u(1, t) = q1(t); q0/q1 receive the t column."""

    def boundary(points: np.ndarray) -> np.ndarray:
        t = points[:, 1]
        n = t.shape[0]
        return np.where(points[:, 0] < 0.5, _broadcast(q0(t), n), _broadcast(q1(t), n))

    return boundary


def _on(coord: np.ndarray, edge: float) -> np.ndarray:
    # Edge nodes are exact up to round-off (EDGE_TOLERANCE)
    return np.abs(coord - edge) <= EDGE_TOLERANCE


def dirichlet_2d(
    x0: PointFunction, x1: PointFunction, y0: PointFunction, y1: PointFunction
) -> PointFunction:
    """
    Edge data on the unit square. Edge functions receive the free coordinate.

    Vertical edges (x = 0, x = 1) take precedence at corners.
    """

    def boundary(points: np.ndarray) -> np.ndarray:
        x, y = points[:, 0], points[:, 1]
        n = x.shape[0]
        return np.select(
            [_on(x, 0.0), _on(x, 1.0), _on(y, 0.0), _on(y, 1.0)],
            [_broadcast(x0(y), n), _broadcast(x1(y), n), _broadcast(y0(x), n), _broadcast(y1(x), n)],
            default=np.nan,
        )

    return boundary


def _zero(points: np.ndarray) -> np.ndarray:
    return np.zeros(points.shape[0])


def _const(value: float) -> PointFunction:
    def func(points: np.ndarray) -> np.ndarray:
        return np.full(np.shape(points)[0], value, dtype=np.float64)

    return func


# Closed-form solutions, written so that exp() only sees non-positive arguments


def _example1_solution(points: np.ndarray, eps: float) -> FieldJet:
    x = points[:, 0]
    denom = -np.expm1(-1.0 / eps)  # 1 - e^{-1/eps}
    layer = np.exp((x - 1.0) / eps)
    shift = np.exp(-1.0 / eps)
    return FieldJet(
        value=np.sin(PI * x) + (layer - shift) / denom,
        grad=(PI * np.cos(PI * x) + (layer / eps) / denom)[:, None],
        diag_hess=(-PI**2 * np.sin(PI * x) + ((layer / eps) / eps) / denom)[:, None],
    )


def _example2_solution(points: np.ndarray, eps: float) -> FieldJet:
    x = points[:, 0]
    k = (1.0 + eps) / eps
    layer = np.exp(k * (x - 1.0))
    smooth = np.exp(-x)
    return FieldJet(
        value=smooth + layer,
        grad=(-smooth + k * layer)[:, None],
        diag_hess=(smooth + k * (k * layer))[:, None],
    )


def _example3_solution(points: np.ndarray, eps: float) -> FieldJet:
    x = points[:, 0]
    denom = np.exp(-1.0) - np.exp(-1.0 / eps)
    smooth = np.exp(-x)
    layer = np.exp(-x / eps)
    return FieldJet(
        value=(smooth - layer) / denom,
        grad=((-smooth + layer / eps) / denom)[:, None],
        diag_hess=((smooth - (layer / eps) / eps) / denom)[:, None],
    )


def _example1(eps: float) -> PerturbedProblem:
    def forcing(points: np.ndarray) -> np.ndarray:
        x = points[:, 0]
        return eps * PI**2 * np.sin(PI * x) + PI * np.cos(PI * x)

    return PerturbedProblem(
        name="example1",
        kind=ProblemKind.STEADY_1D,
        epsilon=eps,
        diffusion_sign=-1,
        convection=_const(1.0),
        reaction=_zero,
        forcing=forcing,
        boundary=dirichlet_1d(0.0, 1.0),
        analytic=_example1_solution,
        example_id=1,
    )


def _example2(eps: float) -> PerturbedProblem:
    # Left value follows the closed form exp(-x) + exp((1+eps)(x-1)/eps) at x = 0
    left = 1.0 + np.exp(-(1.0 + eps) / eps)
    return PerturbedProblem(
        name="example2",
        kind=ProblemKind.STEADY_1D,
        epsilon=eps,
        diffusion_sign=-1,
        convection=_const(1.0),
        reaction=_const(1.0 + eps),
        forcing=_zero,
        boundary=dirichlet_1d(left, 1.0 + np.exp(-1.0)),
        analytic=_example2_solution,
        example_id=2,
    )


def _example3(eps: float) -> PerturbedProblem:
    return PerturbedProblem(
        name="example3",
        kind=ProblemKind.STEADY_1D,
        epsilon=eps,
        diffusion_sign=1,
        convection=_const(1.0 + eps),
        reaction=_const(1.0),
        forcing=_zero,
        boundary=dirichlet_1d(0.0, 1.0),
        analytic=_example3_solution,
        example_id=3,
    )


def _sin_pi(s: np.ndarray) -> np.ndarray:
    return np.sin(PI * s)


def _two_sin_pi(s: np.ndarray) -> np.ndarray:
    return 2.0 * np.sin(PI * s)


def _zeros_like(s: np.ndarray) -> np.ndarray:
    return np.zeros_like(s)


def _vector(b1: float, b2: float) -> PointFunction:
    def convection(points: np.ndarray) -> np.ndarray:
        out = np.empty((points.shape[0], 2))
        out[:, 0] = b1
        out[:, 1] = b2
        return out

    return convection


def _example4(eps: float) -> PerturbedProblem:
    return PerturbedProblem(
        name="example4",
        kind=ProblemKind.STEADY_2D,
        epsilon=eps,
        diffusion_sign=-1,
        convection=_vector(1.0, 0.0),
        reaction=_zero,
        forcing=_zero,
        boundary=dirichlet_2d(_sin_pi, _two_sin_pi, _zeros_like, _zeros_like),
        example_id=4,
    )


def _example5(eps: float) -> PerturbedProblem:
    return PerturbedProblem(
        name="example5",
        kind=ProblemKind.STEADY_2D,
        epsilon=eps,
        diffusion_sign=1,
        convection=_vector(0.0, 1.0),
        reaction=_zero,
        forcing=_zero,
        boundary=dirichlet_2d(_zeros_like, _zeros_like, _sin_pi, _two_sin_pi),
        example_id=5,
    )


def _example6(eps: float) -> PerturbedProblem:
    return PerturbedProblem(
        name="example6",
        kind=ProblemKind.STEADY_2D,
        epsilon=eps,
        diffusion_sign=1,
        convection=_vector(1.0, 1.0),
        reaction=_zero,
        forcing=_zero,
        boundary=dirichlet_2d(_zeros_like, _zeros_like, _sin_pi, _two_sin_pi),
        example_id=6,
    )


def _example7(eps: float) -> PerturbedProblem:
    # u(0, 0) = cos(0) = 1 conflicts with u(0, t) = 0; kept as printed
    return PerturbedProblem(
        name="example7",
        kind=ProblemKind.TIME_1D,
        epsilon=eps,
        diffusion_sign=-1,
        convection=_const(-1.0),
        reaction=_const(-1.0),
        forcing=_zero,
        boundary=dirichlet_time(_zeros_like, np.ones_like),
        initial=lambda points: np.cos(2.0 * PI * points[:, 0]),
        example_id=7,
    )


def _example8(eps: float) -> PerturbedProblem:
    return PerturbedProblem(
        name="example8",
        kind=ProblemKind.TIME_1D,
        epsilon=eps,
        diffusion_sign=-1,
        convection=_const(1.0),
        reaction=_const(5.0),
        forcing=_zero,
        boundary=dirichlet_time(_zeros_like, np.ones_like),
        initial=lambda points: np.sin(2.0 * PI * points[:, 0]),
        example_id=8,
    )


_BUILDERS = [_example1, _example2, _example3, _example4, _example5, _example6, _example7, _example8]


def _make(builder: Callable[[float], PerturbedProblem], epsilon: float) -> PerturbedProblem:
    return replace(builder(float(epsilon)), factory=partial(_make, builder))


def builtin_examples(epsilon: float = 1e-3) -> List[PerturbedProblem]:
    """The eight benchmark problems at the given perturbation parameter."""
    return [_make(build, epsilon) for build in _BUILDERS]


def get_example(example_id: int, epsilon: float = 1e-3) -> PerturbedProblem:
    """Benchmark problem by its 1-based index."""
    if not 1 <= example_id <= len(_BUILDERS):
        raise ValueError(f"example must be between 1 and {len(_BUILDERS)}, got {example_id}")
    return _make(_BUILDERS[example_id - 1], epsilon)


# Custom problems from JSON


_NAMESPACE = {
    "pi": np.pi,
    "e": np.e,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "expm1": np.expm1,
    "log": np.log,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "abs": np.abs,
    "where": np.where,
    "minimum": np.minimum,
    "maximum": np.maximum,
}


def compile_expression(expression: str, variables: List[str]) -> Callable[..., np.ndarray]:
    """
    Compile an arithmetic expression over named variables and numpy functions.

    Args:
        expression: Expression text, e.g. "eps*pi**2*sin(pi*x)"
        variables: Allowed variable names in call order

    Returns:
        Function of the variables (as keyword arrays) returning an array
    """
    code = compile(expression, "<problem>", "eval")
    allowed = set(_NAMESPACE) | set(variables)
    unknown = [name for name in code.co_names if name not in allowed]
    if unknown:
        raise ValueError(f"Unknown names in expression '{expression}': {unknown}")

    def evaluate(**values) -> np.ndarray:
        scope = dict(_NAMESPACE)
        scope.update(values)
        return np.asarray(eval(code, {"__builtins__": {}}, scope), dtype=np.float64)

    return evaluate


class AnalyticDefinition(BaseModel):
    """Closed form with its exact first and pure second partials."""

    value: str
    grad: List[str]
    diag_hess: List[str]


class ProblemDefinition(BaseModel):
    """JSON schema for user-defined problems."""

    name: str = "custom"
    kind: ProblemKind
    diffusion_sign: int = -1
    convection: Union[str, List[str]]
    reaction: str = "0"
    forcing: str = "0"
    boundary: Dict[str, str]
    initial: Optional[str] = None
    analytic: Optional[AnalyticDefinition] = None

    @field_validator("diffusion_sign")
    @classmethod
    def validate_sign(cls, v: int) -> int:
        """Validate the diffusion sign is +1 or -1."""
        if v not in (-1, 1):
            raise ValueError("diffusion_sign must be +1 or -1")
        return v

    @model_validator(mode="after")
    def validate_shapes(self) -> ProblemDefinition:
        """Validate per-kind boundary keys and coefficient shapes."""
        required = {
            ProblemKind.STEADY_1D: {"left", "right"},
            ProblemKind.TIME_1D: {"left", "right"},
            ProblemKind.STEADY_2D: {"x0", "x1", "y0", "y1"},
        }[self.kind]
        if set(self.boundary) != required:
            raise ValueError(f"boundary must define exactly {sorted(required)}")
        n_axes = 2 if self.kind == ProblemKind.STEADY_2D else 1
        conv = self.convection if isinstance(self.convection, list) else [self.convection]
        if len(conv) != n_axes:
            raise ValueError(f"convection needs {n_axes} component(s)")
        if self.kind == ProblemKind.TIME_1D and self.initial is None:
            raise ValueError("initial is required for time1d problems")
        dim = 1 if self.kind == ProblemKind.STEADY_1D else 2
        if self.analytic is not None and (
            len(self.analytic.grad) != dim or len(self.analytic.diag_hess) != dim
        ):
            raise ValueError(f"analytic grad and diag_hess need {dim} component(s)")
        return self

    def build(self, epsilon: float) -> PerturbedProblem:
        """Compile the expressions into a PerturbedProblem."""
        names = {
            ProblemKind.STEADY_1D: ["x"],
            ProblemKind.STEADY_2D: ["x", "y"],
            ProblemKind.TIME_1D: ["x", "t"],
        }[self.kind]
        eps = float(epsilon)

        def field_fn(expr: str) -> PointFunction:
            compiled = compile_expression(expr, names + ["eps"])

            def func(points: np.ndarray) -> np.ndarray:
                env = {name: points[:, i] for i, name in enumerate(names)}
                return _broadcast(compiled(eps=eps, **env), points.shape[0])

            return func

        def edge_fn(expr: str, var: str) -> PointFunction:
            compiled = compile_expression(expr, [var, "eps"])

            def func(s: np.ndarray) -> np.ndarray:
                return _broadcast(compiled(eps=eps, **{var: s}), s.shape[0])

            return func

        conv_exprs = self.convection if isinstance(self.convection, list) else [self.convection]
        conv_fns = [field_fn(e) for e in conv_exprs]

        def convection(points: np.ndarray) -> np.ndarray:
            return np.column_stack([fn(points) for fn in conv_fns])

        if self.kind == ProblemKind.STEADY_1D:
            left = compile_expression(self.boundary["left"], ["eps"])(eps=eps)
            right = compile_expression(self.boundary["right"], ["eps"])(eps=eps)
            boundary = dirichlet_1d(float(left), float(right))
        elif self.kind == ProblemKind.TIME_1D:
            boundary = dirichlet_time(
                edge_fn(self.boundary["left"], "t"), edge_fn(self.boundary["right"], "t")
            )
        else:
            boundary = dirichlet_2d(
                edge_fn(self.boundary["x0"], "y"),
                edge_fn(self.boundary["x1"], "y"),
                edge_fn(self.boundary["y0"], "x"),
                edge_fn(self.boundary["y1"], "x"),
            )

        initial = field_fn(self.initial) if self.initial is not None else None

        analytic = None
        if self.analytic is not None:
            value_fn = field_fn(self.analytic.value)
            grad_fns = [field_fn(e) for e in self.analytic.grad]
            hess_fns = [field_fn(e) for e in self.analytic.diag_hess]

            def analytic(points: np.ndarray, _eps: float) -> FieldJet:
                return FieldJet(
                    value=value_fn(points),
                    grad=np.column_stack([fn(points) for fn in grad_fns]),
                    diag_hess=np.column_stack([fn(points) for fn in hess_fns]),
                )

        return PerturbedProblem(
            name=self.name,
            kind=self.kind,
            epsilon=eps,
            diffusion_sign=self.diffusion_sign,
            convection=convection,
            reaction=field_fn(self.reaction),
            forcing=field_fn(self.forcing),
            boundary=boundary,
            initial=initial,
            analytic=analytic,
            factory=self.build,
        )


def load_problem_file(filepath: Union[str, Path], epsilon: float) -> PerturbedProblem:
    """
    Load a custom problem from a JSON definition.

    Args:
        filepath: Path to the JSON file
        epsilon: Perturbation parameter

    Returns:
        The compiled problem
    """
    path = Path(filepath)
    if not path.exists():
        raise FileNotFoundError(f"Problem file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    definition = ProblemDefinition(**data)
    logger.info(f"Loaded custom problem '{definition.name}' ({definition.kind.value}) from {path}")
    return definition.build(epsilon)

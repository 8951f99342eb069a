"""
Boundary-layer inference and the layer-augmented composite model.

The composite field is u0(x) + sum_i u_i(x) * exp(-alpha_i(x)), where each
alpha_i = coeff * distance_to_layer_boundary / eps is fixed by the problem.
An empty term list is the plain PINN.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from fields.base import FieldJet, as_points

from .diffnet import (
    Activation,
    DifferentiableField,
    MLPGrads,
    MLPParams,
    MLPTape,
    init_mlp,
    mlp_backward,
    mlp_forward,
)
from .errors import UnsupportedProblemError
from .problems import PerturbedProblem

logger = logging.getLogger(__name__)

# exp(-745) is the last nonzero float64 (subnormal); beyond it the factor is exactly 0
UNDERFLOW_EXPONENT = 745.0
PROBE_POINTS = 101


class Axis(IntEnum):
    X = 0
    Y = 1


class Side(IntEnum):
    LEFT = 0
    RIGHT = 1


class ModelMode(str, Enum):
    PINN = "pinn"
    GKPINN = "gkpinn"


@dataclass(frozen=True)
class BoundaryLayerSpec:
    """Location and strength of one exponential boundary layer."""

    axis: Axis
    side: Side
    coeff: float  # |b| at the layer boundary

    def __post_init__(self):
        if not self.coeff > 0:
            raise ValueError(f"Layer coefficient must be positive, got {self.coeff}")

    def describe(self) -> str:
        coord = "x" if self.axis == Axis.X else "y"
        return f"{coord}={int(self.side)}"


@dataclass(frozen=True)
class ExponentialFactor:
    """exp(-alpha) with alpha = coeff * distance / eps, clamped to 0 on underflow."""

    spec: BoundaryLayerSpec
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def rate(self) -> float:
        """d(alpha)/d(distance) = coeff / eps."""
        return self.spec.coeff / self.epsilon

    def exponent(self, points) -> np.ndarray:
        """alpha at the points (nonnegative on the closed domain)."""
        pts = np.asarray(points, dtype=np.float64)
        coord = pts[:, int(self.spec.axis)]
        distance = coord if self.spec.side == Side.LEFT else 1.0 - coord
        return self.rate * distance

    def evaluate(self, points) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Factor and its derivatives along the layer axis.

        Returns:
            Tuple of (phi, d(phi)/d(axis), d2(phi)/d(axis)^2), each shape (N,)
        """
        alpha = self.exponent(points)
        phi = np.zeros_like(alpha)
        live = alpha <= UNDERFLOW_EXPONENT
        phi[live] = np.exp(-alpha[live])
        # Right layer: alpha decreases along the axis, so phi grows with the coordinate
        direction = 1.0 if self.spec.side == Side.RIGHT else -1.0
        dphi = direction * (self.rate * phi)
        d2phi = self.rate * (self.rate * phi)
        return phi, dphi, d2phi

    def __call__(self, points) -> np.ndarray:
        return self.evaluate(points)[0]


def build_factor(spec: BoundaryLayerSpec, epsilon: float) -> ExponentialFactor:
    """Exponential factor for a layer at the given perturbation parameter."""
    return ExponentialFactor(spec=spec, epsilon=float(epsilon))


def _probe_points(problem: PerturbedProblem) -> np.ndarray:
    s = np.linspace(0.0, 1.0, PROBE_POINTS)
    if problem.dim == 1:
        return s[:, None]
    xx, yy = np.meshgrid(s, s)
    return np.column_stack([xx.ravel(), yy.ravel()])


def _edge_midpoint(problem: PerturbedProblem, axis: Axis, side: Side) -> np.ndarray:
    if problem.dim == 1:
        return np.array([[float(side)]])
    point = np.array([[0.5, 0.5]])
    point[0, int(axis)] = float(side)
    return point


def infer_layers(problem: PerturbedProblem) -> List[BoundaryLayerSpec]:
    """
    Locate exponential boundary layers from the sign of the convection field.

    The equation is first brought to -eps*Lap(u) + b.grad(u) + c*u = f form. Per
    axis, b > 0 puts a layer on the right/top boundary, b < 0 on the left/bottom,
    b = 0 gives none. The time axis never carries a layer.

    Args:
        problem: Problem to analyse

    Returns:
        Layer specifications, X axis first
    """
    if problem.is_time_dependent and problem.diffusion_sign != -1:
        raise UnsupportedProblemError(
            f"Problem '{problem.name}': time-dependent problems need -eps*u_xx diffusion"
        )
    # +eps*Lap(u) forms flip every coefficient
    flip = -float(problem.diffusion_sign)
    probe = _probe_points(problem)
    b = flip * problem.convection_at(probe)

    layers = []
    for k in range(b.shape[1]):
        axis = Axis(k)
        component = b[:, k]
        if np.all(component == 0.0):
            continue
        if np.all(component > 0.0):
            side = Side.RIGHT
        elif np.all(component < 0.0):
            side = Side.LEFT
        else:
            raise UnsupportedProblemError(
                f"Problem '{problem.name}': convection component {axis.name} changes sign "
                f"(turning point), layer location is undefined"
            )
        coeff = abs(float(flip * problem.convection_at(_edge_midpoint(problem, axis, side))[0, k]))
        layers.append(BoundaryLayerSpec(axis=axis, side=side, coeff=coeff))

    logger.debug(
        f"Inferred layers for {problem.name}: {[spec.describe() for spec in layers] or 'none'}"
    )
    return layers


@dataclass
class LayerTerm:
    """One layer network paired with its fixed exponential factor."""

    network: MLPParams
    factor: ExponentialFactor


@dataclass
class _CompositeTape:
    smooth: MLPTape
    terms: List[Tuple[MLPTape, FieldJet, Tuple[np.ndarray, np.ndarray, np.ndarray]]] = field(
        default_factory=list
    )


class CompositeModel(DifferentiableField):
    """Smooth network plus layer networks weighted by exponential factors."""

    def __init__(self, smooth: MLPParams, layer_terms: Optional[Sequence[LayerTerm]] = None):
        self.smooth = smooth
        self.layer_terms = list(layer_terms or [])
        for term in self.layer_terms:
            if term.network.input_dim != smooth.input_dim:
                raise ValueError("All member networks must share the input dimension")

    @property
    def input_dim(self) -> int:
        return self.smooth.input_dim

    @property
    def mode(self) -> ModelMode:
        return ModelMode.GKPINN if self.layer_terms else ModelMode.PINN

    def networks(self) -> List[MLPParams]:
        return [self.smooth] + [term.network for term in self.layer_terms]

    def with_networks(self, networks: Sequence[MLPParams]) -> CompositeModel:
        """Same architecture and factors with replaced network parameters."""
        if len(networks) != 1 + len(self.layer_terms):
            raise ValueError("Network count does not match the model")
        terms = [LayerTerm(net, term.factor) for net, term in zip(networks[1:], self.layer_terms)]
        return CompositeModel(networks[0], terms)

    def copy(self) -> CompositeModel:
        return self.with_networks([net.copy() for net in self.networks()])

    def forward(self, points) -> Tuple[FieldJet, _CompositeTape]:
        pts = as_points(points, self.input_dim)
        jet, smooth_tape = mlp_forward(self.smooth, pts)
        if not self.layer_terms:
            return jet, _CompositeTape(smooth=smooth_tape)

        value = jet.value.copy()
        grad = jet.grad.copy()
        hess = jet.diag_hess.copy()
        tape = _CompositeTape(smooth=smooth_tape)
        for term in self.layer_terms:
            u, term_tape = mlp_forward(term.network, pts)
            phi, dphi, d2phi = term.factor.evaluate(pts)
            k = int(term.factor.spec.axis)
            # Product rule; off-axis derivatives of phi vanish
            value += u.value * phi
            grad += u.grad * phi[:, None]
            grad[:, k] += u.value * dphi
            hess += u.diag_hess * phi[:, None]
            hess[:, k] += 2.0 * u.grad[:, k] * dphi + u.value * d2phi
            tape.terms.append((term_tape, u, (phi, dphi, d2phi)))
        return FieldJet(value, grad, hess), tape

    def backward(self, tape: _CompositeTape, cotangent: FieldJet) -> List[MLPGrads]:
        grads = [mlp_backward(self.smooth, tape.smooth, cotangent)]
        for term, (term_tape, _, (phi, dphi, d2phi)) in zip(self.layer_terms, tape.terms):
            k = int(term.factor.spec.axis)
            gv, gg, gh = cotangent.value, cotangent.grad, cotangent.diag_hess
            term_cot = FieldJet(
                value=gv * phi + gg[:, k] * dphi + gh[:, k] * d2phi,
                grad=gg * phi[:, None],
                diag_hess=gh * phi[:, None],
            )
            term_cot.grad[:, k] += 2.0 * gh[:, k] * dphi
            grads.append(mlp_backward(term.network, term_tape, term_cot))
        return grads


def composite_jet(model: CompositeModel, points) -> FieldJet:
    """Value, gradient and diagonal Hessian of the composite field."""
    return model.jet(points)


def build_model(
    problem: PerturbedProblem,
    hidden_sizes: Sequence[int],
    activation: Activation,
    seed: int,
    mode: ModelMode,
) -> CompositeModel:
    """
    Build a plain PINN or a layer-augmented model for a problem.

    Args:
        problem: Target problem
        hidden_sizes: Hidden widths shared by every member network
        activation: Hidden activation
        seed: Seed of the smooth network; layer network i uses seed + i + 1
        mode: PINN (smooth network only) or GKPINN (one extra network per layer)

    Returns:
        CompositeModel ready for training
    """
    mode = ModelMode(mode)
    sizes = [problem.dim] + [int(h) for h in hidden_sizes] + [1]
    smooth = init_mlp(sizes, activation, seed)
    terms = []
    if mode == ModelMode.GKPINN:
        for i, spec in enumerate(infer_layers(problem)):
            network = init_mlp(sizes, activation, seed + i + 1)
            terms.append(LayerTerm(network, build_factor(spec, problem.epsilon)))
    logger.info(
        f"Built {mode.value} model for {problem.name}: {sizes}, "
        f"{len(terms)} layer term(s) {[t.factor.spec.describe() for t in terms]}"
    )
    return CompositeModel(smooth, terms)

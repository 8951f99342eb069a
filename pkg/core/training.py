"""
Physics-informed loss assembly, residual-based attention and Adam training.

The loss is L = L_ic + L_bc + L_r with mean-square initial, boundary and
residual terms. Residual weights follow an exponential moving average of the
normalized residual magnitude and are not differentiated.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from fields.base import FieldEvaluator, FieldJet

from .diffnet import MLPGrads, MLPParams, loss_param_gradient
from .errors import NonFiniteError, TrainingAbortedError
from .layers import CompositeModel
from .models import LossSummary, RBAForm, TrainConfig
from .problems import OperatorCoefficients, PerturbedProblem
from .sampling import PointSets

logger = logging.getLogger(__name__)


@dataclass
class RBAWeights:
    """Per-collocation-point residual weights."""

    lam: np.ndarray  # (N_r,)
    eta_star: float

    @classmethod
    def uniform(cls, n: int, eta_star: float, init: float = 1.0) -> RBAWeights:
        return cls(lam=np.full(n, float(init)), eta_star=float(eta_star))


def rba_update(weights: RBAWeights, residuals: np.ndarray) -> RBAWeights:
    """
    One attention step: lam <- (1 - eta)*lam + eta*|e|/max|e|.

    An all-zero residual leaves the weights unchanged.
    """
    e = np.abs(np.asarray(residuals, dtype=np.float64))
    if e.shape != weights.lam.shape:
        raise ValueError(f"residuals have shape {e.shape}, weights {weights.lam.shape}")
    e_max = e.max() if e.size else 0.0
    if e_max == 0.0:
        return weights
    eta = weights.eta_star
    return RBAWeights(lam=(1.0 - eta) * weights.lam + eta * (e / e_max), eta_star=eta)


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8

    @classmethod
    def from_config(cls, config: TrainConfig) -> AdamHyper:
        return cls(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps_hat=config.eps_hat)


@dataclass
class AdamState:
    """First/second moment estimates and the step counter of one network."""

    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, arrays: Sequence[np.ndarray]) -> AdamState:
        return cls(m=[np.zeros_like(a) for a in arrays], v=[np.zeros_like(a) for a in arrays])


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    hyper: AdamHyper,
) -> Tuple[List[np.ndarray], AdamState]:
    """
    Bias-corrected Adam update.

    Inputs are left untouched; new parameter and moment arrays are returned.

    Args:
        params: Parameter arrays
        grads: Gradients congruent to params
        state: Moments and step count
        hyper: Step size, decay rates and stabilizer

    Returns:
        Tuple of (updated params, updated state)
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and state must be congruent")
    t = state.t + 1
    bc1 = 1.0 - hyper.beta1**t
    bc2 = 1.0 - hyper.beta2**t

    new_params, new_m, new_v = [], [], []
    for theta, g, m, v in zip(params, grads, state.m, state.v):
        m = hyper.beta1 * m + (1.0 - hyper.beta1) * g
        v = hyper.beta2 * v + (1.0 - hyper.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        new_params.append(theta - hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps_hat))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(m=new_m, v=new_v, t=t)


@dataclass
class LossBreakdown:
    """Loss terms of one evaluation, plus the raw interior residuals."""

    l_ic: float
    l_bc: float
    l_r: float
    total: float
    residuals: np.ndarray

    def check_finite(self) -> None:
        for name in ("l_ic", "l_bc", "l_r", "total"):
            if not np.isfinite(getattr(self, name)):
                raise NonFiniteError(f"loss term {name}")

    def summary(self) -> LossSummary:
        return LossSummary(l_ic=self.l_ic, l_bc=self.l_bc, l_r=self.l_r, total=self.total)


@dataclass
class LossTargets:
    """Quantities of the loss that depend only on the problem and the fixed points."""

    interior: np.ndarray
    boundary: np.ndarray
    initial: np.ndarray
    coefficients: OperatorCoefficients
    boundary_values: np.ndarray
    initial_values: np.ndarray

    @classmethod
    def prepare(cls, problem: PerturbedProblem, points: PointSets) -> LossTargets:
        if points.interior.shape[1] != problem.dim or points.boundary.shape[1] != problem.dim:
            raise ValueError(f"Point sets do not match the dimension of '{problem.name}'")
        if points.n_initial and not problem.is_time_dependent:
            raise ValueError(f"Steady problem '{problem.name}' takes no initial points")
        initial_values = (
            problem.initial_values(points.initial[:, 0]) if points.n_initial else np.empty(0)
        )
        return cls(
            interior=points.interior,
            boundary=points.boundary,
            initial=points.initial,
            coefficients=problem.operator_coefficients(points.interior),
            boundary_values=problem.boundary_values(points.boundary),
            initial_values=initial_values,
        )

    def batches(self) -> List[np.ndarray]:
        out = [self.interior, self.boundary]
        if self.initial.shape[0]:
            out.append(self.initial)
        return out


def _residual_weights(rba: Optional[RBAWeights], form: RBAForm, n: int) -> np.ndarray:
    # Multiplier w in L_r = mean(w * R^2)
    if rba is None:
        return np.ones(n)
    if form == RBAForm.SQUARED_PRODUCT:
        return rba.lam * rba.lam
    return rba.lam.copy()


def _loss_from_jets(
    jets: Sequence[FieldJet],
    targets: LossTargets,
    rba: Optional[RBAWeights],
    form: RBAForm,
) -> Tuple[LossBreakdown, List[FieldJet]]:
    coeffs = targets.coefficients
    interior_jet, boundary_jet = jets[0], jets[1]

    r = coeffs.apply(interior_jet)
    n_r = r.shape[0]
    w = _residual_weights(rba, RBAForm(form), n_r)
    l_r = float(np.mean(w * r * r))
    g_r = 2.0 * w * r / n_r
    interior_cot = FieldJet(
        value=g_r * coeffs.value,
        grad=g_r[:, None] * coeffs.grad,
        diag_hess=g_r[:, None] * coeffs.hess,
    )

    e_bc = boundary_jet.value - targets.boundary_values
    l_bc = float(np.mean(e_bc * e_bc))
    boundary_cot = FieldJet.zeros(e_bc.shape[0], boundary_jet.dim)
    boundary_cot.value[:] = 2.0 * e_bc / e_bc.shape[0]
    cotangents = [interior_cot, boundary_cot]

    l_ic = 0.0
    if len(jets) > 2:
        e_ic = jets[2].value - targets.initial_values
        l_ic = float(np.mean(e_ic * e_ic))
        initial_cot = FieldJet.zeros(e_ic.shape[0], jets[2].dim)
        initial_cot.value[:] = 2.0 * e_ic / e_ic.shape[0]
        cotangents.append(initial_cot)

    breakdown = LossBreakdown(
        l_ic=l_ic, l_bc=l_bc, l_r=l_r, total=l_ic + l_bc + l_r, residuals=r
    )
    return breakdown, cotangents


def assemble_loss(
    model: FieldEvaluator,
    problem: PerturbedProblem,
    points: PointSets,
    rba: Optional[RBAWeights] = None,
    rba_form: RBAForm = RBAForm.SQUARED_PRODUCT,
) -> LossBreakdown:
    """
    Evaluate the physics-informed loss of any field.

    Args:
        model: Field (network, composite model or closed form)
        problem: Problem supplying operator and data
        points: Training point sets
        rba: Residual weights; None means unit weights
        rba_form: How weights enter the residual term

    Returns:
        LossBreakdown with raw residuals for the attention update
    """
    targets = LossTargets.prepare(problem, points)
    jets = [model.jet(batch) for batch in targets.batches()]
    for jet in jets:
        jet.check_finite("model jet")
    breakdown, _ = _loss_from_jets(jets, targets, rba, rba_form)
    breakdown.check_finite()
    return breakdown


def loss_and_gradient(
    model: CompositeModel,
    targets: LossTargets,
    rba: Optional[RBAWeights],
    rba_form: RBAForm,
    workers: int = 1,
) -> Tuple[LossBreakdown, List[MLPGrads]]:
    """Loss breakdown and exact gradients for every member network."""
    captured = {}

    def loss_fn(jets):
        breakdown, cotangents = _loss_from_jets(jets, targets, rba, rba_form)
        captured["breakdown"] = breakdown
        return breakdown.total, cotangents

    _, grads = loss_param_gradient(model, targets.batches(), loss_fn, workers=workers)
    breakdown = captured["breakdown"]
    breakdown.check_finite()
    return breakdown, grads


@dataclass
class HistoryRow:
    iteration: int
    l_ic: float
    l_bc: float
    l_r: float
    total: float
    l2_test: Optional[float] = None

    def summary(self) -> LossSummary:
        return LossSummary(l_ic=self.l_ic, l_bc=self.l_bc, l_r=self.l_r, total=self.total)


def _history_row(iteration: int, loss: LossBreakdown, l2: Optional[float]) -> HistoryRow:
    return HistoryRow(
        iteration=iteration,
        l_ic=loss.l_ic,
        l_bc=loss.l_bc,
        l_r=loss.l_r,
        total=loss.total,
        l2_test=l2,
    )


def train(
    model: CompositeModel,
    problem: PerturbedProblem,
    points: PointSets,
    config: TrainConfig,
    workers: int = 1,
    evaluator: Optional[Callable[[CompositeModel], float]] = None,
) -> Tuple[CompositeModel, List[HistoryRow]]:
    """
    Train every member network jointly with full-batch Adam.

    History rows hold the loss at the parameters before the update of that
    iteration, every `history_stride` steps, plus a final row at
    `iteration == config.iterations` for the returned parameters. When an
    evaluator is given, rows at multiples of `eval_stride` (and the final row)
    carry its test error.

    Args:
        model: Initial model; not modified
        problem: Problem to solve
        points: Fixed training points
        config: Optimizer and loop settings
        workers: Threads for point chunk evaluation
        evaluator: Maps a model to its test error

    Returns:
        Tuple of (trained model, history rows)

    Raises:
        TrainingAbortedError: On a non-finite loss or gradient; carries the rows
            recorded so far
    """
    targets = LossTargets.prepare(problem, points)
    hyper = AdamHyper.from_config(config)
    rba = (
        RBAWeights.uniform(points.n_interior, config.eta_star, config.rba_init)
        if config.rba_enabled
        else None
    )
    networks: List[MLPParams] = [net.copy() for net in model.networks()]
    states = [AdamState.zeros_like(net.arrays()) for net in networks]
    current = model.with_networks(networks)
    history: List[HistoryRow] = []

    def test_error(iteration: int, final: bool = False) -> Optional[float]:
        if evaluator is None or not (final or iteration % config.eval_stride == 0):
            return None
        return float(evaluator(current))

    progress_stride = config.history_stride * 10
    started = time.perf_counter()
    logger.info(
        f"Training {current.mode.value} on {problem.name} (eps={problem.epsilon:g}) for "
        f"{config.iterations} iterations, rba={'on' if rba is not None else 'off'}, "
        f"workers={workers}"
    )

    for iteration in range(config.iterations):
        try:
            loss, grads = loss_and_gradient(current, targets, rba, config.rba_form, workers)
        except NonFiniteError as exc:
            logger.error(f"Non-finite loss or gradient at iteration {iteration}: {exc}")
            raise TrainingAbortedError(iteration, exc, history) from exc

        if iteration % config.history_stride == 0:
            history.append(_history_row(iteration, loss, test_error(iteration)))
        if iteration % progress_stride == 0:
            logger.info(
                f"iter {iteration}: total={loss.total:.3e} (ic={loss.l_ic:.3e}, "
                f"bc={loss.l_bc:.3e}, r={loss.l_r:.3e})"
            )

        updated = []
        for i, (net, grad) in enumerate(zip(networks, grads)):
            arrays, states[i] = adam_step(net.arrays(), grad.arrays(), states[i], hyper)
            updated.append(net.with_arrays(arrays))
        networks = updated
        current = model.with_networks(networks)
        if rba is not None:
            rba = rba_update(rba, loss.residuals)

    try:
        final = assemble_loss(current, problem, points, rba, config.rba_form)
    except NonFiniteError as exc:
        raise TrainingAbortedError(config.iterations, exc, history) from exc
    history.append(_history_row(config.iterations, final, test_error(config.iterations, True)))

    elapsed = time.perf_counter() - started
    logger.info(
        f"Training finished after {config.iterations} iterations in {elapsed:.1f}s: "
        f"total={final.total:.3e}"
    )
    return current, history

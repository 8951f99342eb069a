"""Closed-form fields used as exact references and test doubles."""

from __future__ import annotations

from typing import TYPE_CHECKING, Callable, Tuple

import numpy as np

from core.errors import MissingAnalyticError

from .base import FieldEvaluator, FieldJet, as_points

if TYPE_CHECKING:
    from core.problems import PerturbedProblem


class AnalyticField(FieldEvaluator):
    """
    Field backed by a problem's closed-form solution.

    Derivatives come from the closed form itself, never from differencing.
    """

    def __init__(self, problem: PerturbedProblem):
        if problem.analytic is None:
            raise MissingAnalyticError(f"Problem '{problem.name}' has no analytic solution")
        self._problem = problem

    @property
    def input_dim(self) -> int:
        return self._problem.dim

    def jet(self, points) -> FieldJet:
        pts = as_points(points, self.input_dim)
        return self._problem.analytic(pts, self._problem.epsilon)


class ConstantField(FieldEvaluator):
    """u(x) = c everywhere."""

    def __init__(self, constant: float, dim: int = 1):
        self._constant = float(constant)
        self._dim = dim

    @property
    def input_dim(self) -> int:
        return self._dim

    def jet(self, points) -> FieldJet:
        pts = as_points(points, self._dim)
        jet = FieldJet.zeros(pts.shape[0], self._dim)
        jet.value[:] = self._constant
        return jet


class CallableField(FieldEvaluator):
    """Field defined by a user function returning (value, grad, diag_hess)."""

    def __init__(
        self,
        func: Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]],
        dim: int = 1,
    ):
        self._func = func
        self._dim = dim

    @property
    def input_dim(self) -> int:
        return self._dim

    def jet(self, points) -> FieldJet:
        pts = as_points(points, self._dim)
        value, grad, hess = self._func(pts)
        return FieldJet(
            value=np.asarray(value, dtype=np.float64),
            grad=np.asarray(grad, dtype=np.float64).reshape(-1, self._dim),
            diag_hess=np.asarray(hess, dtype=np.float64).reshape(-1, self._dim),
        )


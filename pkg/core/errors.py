"""Exception types raised by the solver library."""

from __future__ import annotations

from typing import Any, List, Optional, Sequence


class UnsupportedProblemError(ValueError):
    """Problem lies outside what layer inference or the reference solvers handle."""


class MissingAnalyticError(ValueError):
    """An analytic solution was requested from a problem that has none."""


class NonFiniteError(FloatingPointError):
    """NaN or Inf appeared in a jet, loss or gradient."""

    def __init__(self, quantity: str, iteration: Optional[int] = None):
        self.quantity = quantity
        self.iteration = iteration
        where = f" at iteration {iteration}" if iteration is not None else ""
        super().__init__(f"Non-finite values in {quantity}{where}")


class TrainingAbortedError(RuntimeError):
    """Training stopped because a loss or gradient became non-finite."""

    def __init__(
        self,
        iteration: int,
        cause: NonFiniteError,
        history: Optional[Sequence[Any]] = None,
    ):
        self.iteration = iteration
        self.cause = cause
        # Rows recorded before the abort
        self.history: List[Any] = list(history or [])
        super().__init__(f"Training aborted at iteration {iteration}: {cause}")


class SingularSystemError(ArithmeticError):
    """Zero pivot encountered while solving a tridiagonal system."""


class ConvergenceError(RuntimeError):
    """Iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, iterations: int, residual: float, tolerance: float):
        self.iterations = iterations
        self.residual = residual
        self.tolerance = tolerance
        super().__init__(
            f"SOR did not converge in {iterations} sweeps "
            f"(residual {residual:.3e} > tolerance {tolerance:.1e})"
        )

"""Field evaluation contract shared by networks, composite models and closed forms."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from core.errors import NonFiniteError


def as_points(points, dim: int) -> np.ndarray:
    """
    Coerce user input into a float64 point array of shape (N, dim).

    Args:
        points: Scalar, 1-D or 2-D array-like of coordinates
        dim: Spatial (or space-time) dimension of the field

    Returns:
        Contiguous float64 array of shape (N, dim)
    """
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, dim)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"points must have shape (N, {dim}), got {arr.shape}")
    return np.ascontiguousarray(arr)


@dataclass
class FieldJet:
    """Value, first partials and pure second partials of a scalar field at N points."""

    value: np.ndarray  # (N,)
    grad: np.ndarray  # (N, d)
    diag_hess: np.ndarray  # (N, d)

    @property
    def n_points(self) -> int:
        return self.value.shape[0]

    @property
    def dim(self) -> int:
        return self.grad.shape[1]

    @classmethod
    def zeros(cls, n_points: int, dim: int) -> FieldJet:
        """Create an all-zero jet."""
        return cls(
            value=np.zeros(n_points),
            grad=np.zeros((n_points, dim)),
            diag_hess=np.zeros((n_points, dim)),
        )

    @classmethod
    def concatenate(cls, jets: Sequence[FieldJet]) -> FieldJet:
        """Stack jets evaluated on consecutive point chunks."""
        return cls(
            value=np.concatenate([j.value for j in jets]),
            grad=np.concatenate([j.grad for j in jets]),
            diag_hess=np.concatenate([j.diag_hess for j in jets]),
        )

    def take(self, index) -> FieldJet:
        """Select a subset of points."""
        return FieldJet(self.value[index], self.grad[index], self.diag_hess[index])

    def is_finite(self) -> bool:
        return bool(
            np.isfinite(self.value).all()
            and np.isfinite(self.grad).all()
            and np.isfinite(self.diag_hess).all()
        )

    def check_finite(self, quantity: str = "field jet") -> None:
        """Raise NonFiniteError if any entry is NaN or Inf."""
        if not self.is_finite():
            raise NonFiniteError(quantity)


class FieldEvaluator(ABC):
    """Abstract scalar field: points -> FieldJet."""

    @property
    @abstractmethod
    def input_dim(self) -> int:
        """Number of input coordinates (1 or 2)."""
        pass

    @abstractmethod
    def jet(self, points) -> FieldJet:
        """
        Evaluate value and derivatives at the given points.

        Args:
            points: Array-like of shape (N, input_dim)

        Returns:
            FieldJet with N rows
        """
        pass

    def values(self, points) -> np.ndarray:
        """Evaluate only the field values."""
        return self.jet(points).value

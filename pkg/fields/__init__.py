"""Scalar field evaluators: the shared contract and closed-form implementations."""

from .analytic import AnalyticField, CallableField, ConstantField
from .base import FieldEvaluator, FieldJet, as_points

__all__ = [
    "FieldEvaluator",
    "FieldJet",
    "as_points",
    "AnalyticField",
    "CallableField",
    "ConstantField",
]

"""Correlation metrics, the evolutionary fitness function, and baselines.

Fitness is the absolute correlation between predictions and the human
ground truth: the search maximizes agreement and a perfectly
anti-correlated formula is as useful as a correlated one once its sign is
known.  Degenerate predictions (non-finite values or zero variance) carry
no correlation signal and are reported as invalid rather than scored 0,
which keeps them out of selection entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._core import average_ranks, pearson_r
from .expressions import ExpressionTree, evaluate

METRICS = ("pcc", "srcc")


class LengthMismatch(ValueError):
    pass


class SingularDesign(ValueError):
    pass


class EmptySubset(ValueError):
    pass


@dataclass(frozen=True)
class FitnessReport:
    """Outcome of one correlation measurement.

    ``fitness`` is ``abs(rho)`` in [0, 1], or None when ``degenerate``
    (zero-variance or non-finite input, carrying ``rho`` = nan).
    """

    metric: str
    rho: float
    fitness: float | None
    degenerate: bool


def _as_vector(values, name: str) -> np.ndarray:
    out = np.ascontiguousarray(values, dtype=np.float64)
    if out.ndim != 1:
        raise ValueError(f"{name} must be 1-D")
    return out


def _check_pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = _as_vector(y, "y")
    yhat = _as_vector(yhat, "yhat")
    if y.shape[0] != yhat.shape[0]:
        raise LengthMismatch(f"length {y.shape[0]} vs {yhat.shape[0]}")
    if y.shape[0] < 3:
        raise ValueError("correlation needs at least 3 observations")
    return y, yhat


def _report(metric: str, rho: float) -> FitnessReport:
    if math.isnan(rho):
        return FitnessReport(metric=metric, rho=rho, fitness=None, degenerate=True)
    return FitnessReport(metric=metric, rho=rho, fitness=abs(rho), degenerate=False)


def pearson(y, yhat) -> FitnessReport:
    """Product-moment correlation between two equal-length vectors."""
    y, yhat = _check_pair(y, yhat)
    return _report("pcc", pearson_r(y, yhat))


def spearman(y, yhat) -> FitnessReport:
    """Rank correlation: Pearson over fractional ranks, ties averaged."""
    y, yhat = _check_pair(y, yhat)
    return _report("srcc", pearson_r(average_ranks(y), average_ranks(yhat)))


def _check_metric(metric: str) -> str:
    metric = metric.lower()
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    return metric


def ensemble_fitness(expr: ExpressionTree, features, truth, metric: str) -> FitnessReport:
    """Score a formula against ground truth on one side of a split."""
    metric = _check_metric(metric)
    prediction = evaluate(expr, features)
    if not prediction.finite_flag:
        return FitnessReport(metric=metric, rho=float("nan"), fitness=None, degenerate=True)
    if metric == "pcc":
        return pearson(truth, prediction.values)
    return spearman(truth, prediction.values)


def fitness_function(features, truth, metric: str) -> Callable[[ExpressionTree], float | None]:
    """Build the per-individual training-fitness closure for the engine.

    Precomputes the target (ranks for srcc) once; the closure returns
    ``abs(rho)`` or None for invalid predictions.  Equivalent to
    ``ensemble_fitness(...).fitness`` on every input.
    """
    metric = _check_metric(metric)
    matrix = np.ascontiguousarray(features, dtype=np.float64)
    target = _as_vector(truth, "truth")
    if matrix.shape[0] != target.shape[0]:
        raise LengthMismatch(f"{matrix.shape[0]} feature rows vs {target.shape[0]} truth values")
    ranked = metric == "srcc"
    if ranked:
        target = average_ranks(target)

    def score(expr: ExpressionTree) -> float | None:
        prediction = evaluate(expr, matrix)
        if not prediction.finite_flag:
            return None
        values = average_ranks(prediction.values) if ranked else prediction.values
        rho = pearson_r(target, values)
        if math.isnan(rho):
            return None
        return abs(rho)

    return score


@dataclass(frozen=True)
class RegressionModel:
    """Ordinary least squares fit: one coefficient per feature plus intercept."""

    coefficients: np.ndarray
    intercept: float

    def predict(self, features) -> np.ndarray:
        matrix = np.ascontiguousarray(features, dtype=np.float64)
        return matrix @ self.coefficients + self.intercept


def fit_linear_regression(features, truth) -> RegressionModel:
    """Least-squares fit of truth on the feature columns, with intercept.

    Solved by orthogonal decomposition (lstsq); raises
    :class:`SingularDesign` when the design matrix is rank-deficient at
    relative tolerance 1e-10 (duplicate or constant feature columns).
    """
    matrix = np.ascontiguousarray(features, dtype=np.float64)
    target = _as_vector(truth, "truth")
    if matrix.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    rows, cols = matrix.shape
    if rows != target.shape[0]:
        raise LengthMismatch(f"{rows} feature rows vs {target.shape[0]} truth values")
    if rows < cols + 1:
        raise ValueError(f"need at least {cols + 1} rows to fit {cols} features")
    design = np.column_stack([np.ones(rows), matrix])
    solution, _, rank, _ = np.linalg.lstsq(design, target, rcond=1e-10)
    if rank < cols + 1:
        raise SingularDesign(f"design matrix rank {rank} < {cols + 1}")
    return RegressionModel(coefficients=solution[1:], intercept=float(solution[0]))


def mean_ensemble(features, subset) -> np.ndarray:
    """Row-wise arithmetic mean of the selected feature columns."""
    indices = list(subset)
    if not indices:
        raise EmptySubset("subset of feature columns is empty")
    matrix = np.ascontiguousarray(features, dtype=np.float64)
    return matrix[:, indices].mean(axis=1)

"""Evaluation metrics for fitted coefficients: squared error, classification accuracy and AUC."""

from __future__ import annotations

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from osmac.datamodel import Dataset, class_counts
from osmac.errors import DegenerateClassesError


def squared_error(beta: np.ndarray, target: np.ndarray) -> float:
    """||beta - target||^2."""
    diff = np.asarray(beta, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.dot(diff, diff))


def classify(beta: np.ndarray, data: Dataset, threshold: float = 0.5) -> tuple[np.ndarray, float]:
    """
    Predict y = 1 when p_i(beta) is strictly larger than ``threshold``.

    Returns
    -------
    tuple of (ndarray of uint8, float)
        Predictions and the fraction matching ``data.y``.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    p = expit(data.x @ np.asarray(beta, dtype=np.float64))
    predictions = (p > threshold).astype(np.uint8)
    return predictions, float(np.mean(predictions == data.y))


def auc(beta: np.ndarray, data: Dataset) -> float:
    """
    Area under the ROC curve of the scores x_i^T beta, by the Mann-Whitney
    rank statistic (ties count one half).

    Raises
    ------
    DegenerateClassesError
        One class is empty.
    """
    n0, n1 = class_counts(data)
    if n0 == 0 or n1 == 0:
        raise DegenerateClassesError(f"AUC needs both classes, got n0={n0}, n1={n1}")
    ranks = rankdata(data.x @ np.asarray(beta, dtype=np.float64), method="average")
    rank_sum = float(np.sum(ranks[data.y == 1]))
    return (rank_sum - n1 * (n1 + 1) / 2.0) / (n0 * n1)

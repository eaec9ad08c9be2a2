"""Accuracy, F1 and rank-based AUC for binary fault labels (1 = faulty)."""

from __future__ import annotations

import numpy as np

from . import _core
from .errors import ConfigError


def _pair(labels, truth) -> tuple[np.ndarray, np.ndarray]:
    labels = np.asarray(labels).astype(np.int64)
    truth = np.asarray(truth).astype(np.int64)
    if labels.shape != truth.shape or labels.ndim != 1:
        raise ConfigError(f"length mismatch: {labels.shape} vs {truth.shape}")
    if len(labels) == 0:
        raise ConfigError("metrics need at least one sample")
    return labels, truth


def confusion(labels, truth) -> dict[str, int]:
    labels, truth = _pair(labels, truth)
    return {
        "tp": int(np.sum((labels == 1) & (truth == 1))),
        "fp": int(np.sum((labels == 1) & (truth == 0))),
        "fn": int(np.sum((labels == 0) & (truth == 1))),
        "tn": int(np.sum((labels == 0) & (truth == 0))),
    }


def accuracy(labels, truth) -> float:
    labels, truth = _pair(labels, truth)
    return float(np.mean(labels == truth))


def f1_score(labels, truth) -> float:
    """Harmonic mean of precision and recall; 0.0 when both are zero."""
    c = confusion(labels, truth)
    tp, fp, fn = c["tp"], c["fp"], c["fn"]
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def false_alarm_rate(labels, truth) -> float:
    c = confusion(labels, truth)
    healthy = c["fp"] + c["tn"]
    return c["fp"] / healthy if healthy else 0.0


def auc(scores, truth) -> float:
    """Mann-Whitney AUC with midranks for ties."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth).astype(np.int64)
    if scores.shape != truth.shape or scores.ndim != 1:
        raise ConfigError(f"length mismatch: {scores.shape} vs {truth.shape}")
    n_pos = int(truth.sum())
    if n_pos == 0 or n_pos == len(truth):
        raise ConfigError("AUC is undefined unless both classes are present")
    return float(_core.rank_auc(scores, truth))

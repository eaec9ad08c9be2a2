"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def window_min(s: np.ndarray, window: int) -> np.ndarray:
    s = np.ascontiguousarray(s, dtype=np.float64)
    return sliding_window_view(s, window).min(axis=1)


def rbf_gram(x: np.ndarray, y: np.ndarray, gammas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Multi-bandwidth RBF Gram matrix and its distance-derivative weights.

    Returns ``K = mean_b exp(-g_b * d2)`` and ``G = mean_b g_b * exp(-g_b * d2)``
    so that ``dK_ij / dx_i = -2 * G_ij * (x_i - y_j)``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    gammas = np.asarray(gammas, dtype=np.float64)
    d2 = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2)
    k = np.zeros_like(d2)
    g = np.zeros_like(d2)
    for gamma in gammas:
        e = np.exp(-gamma * d2)
        k += e
        g += gamma * e
    nb = len(gammas)
    return k / nb, g / nb


def rank_auc(scores: np.ndarray, truth: np.ndarray) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth).astype(bool)
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores), dtype=np.float64)
    # midranks for tied runs
    _, start, counts = np.unique(sorted_scores, return_index=True, return_counts=True)
    mid = start + (counts + 1) / 2.0
    ranks[order] = np.repeat(mid, counts)
    n_pos = int(truth.sum())
    n_neg = len(truth) - n_pos
    u = ranks[truth].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))

"""Residual scoring and fault decisions.

Chain: relative residual per sensor -> per-sample anomaly score (mean plus
max over sensors) -> forward min-window smoothing -> threshold at
``alpha * threshold_base``, where the base is the mean smoothed score on
healthy target data.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _core
from .errors import ConfigError, UsageError

log = logging.getLogger(__name__)

SCALE_FLOOR = 1e-9
THRESHOLD_FLOOR = 1e-9
SCORE_VARIANTS = ("mean_max", "literal")


def sensor_scale(raw_sensors: np.ndarray) -> np.ndarray:
    """Per-sensor mean absolute level, floored so it can divide."""
    scale = np.abs(np.asarray(raw_sensors, dtype=np.float64)).mean(axis=0)
    return floor_scale(scale)


def floor_scale(scale: np.ndarray) -> np.ndarray:
    scale = np.asarray(scale, dtype=np.float64)
    low = scale < SCALE_FLOOR
    if np.any(low):
        log.warning("sensor scale below %g for column(s) %s; flooring", SCALE_FLOOR, np.flatnonzero(low).tolist())
        scale = np.where(low, SCALE_FLOOR, scale)
    return scale


@dataclass
class ScoringConfig:
    sensor_scale: np.ndarray
    threshold_base: float = THRESHOLD_FLOOR
    window: int = 10
    alpha: float = 1.0
    variant: str = "mean_max"

    def __post_init__(self):
        self.sensor_scale = floor_scale(self.sensor_scale)
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if self.alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.variant not in SCORE_VARIANTS:
            raise ConfigError(f"unknown score variant {self.variant!r}")
        self.threshold_base = max(float(self.threshold_base), THRESHOLD_FLOOR)

    @property
    def threshold(self) -> float:
        return self.alpha * self.threshold_base

    def to_dict(self) -> dict:
        return {"sensor_scale": self.sensor_scale.tolist(), "threshold_base": self.threshold_base,
                "window": self.window, "alpha": self.alpha, "variant": self.variant}

    @classmethod
    def from_dict(cls, d: dict) -> "ScoringConfig":
        return cls(np.asarray(d["sensor_scale"], dtype=np.float64), float(d["threshold_base"]),
                   int(d["window"]), float(d["alpha"]), d.get("variant", "mean_max"))


def relative_residual(pred: np.ndarray, actual: np.ndarray, scale: np.ndarray) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if pred.shape != actual.shape:
        raise ConfigError(f"prediction {pred.shape} and measurement {actual.shape} shapes differ")
    scale = floor_scale(scale)
    if pred.shape[-1] != scale.shape[0]:
        raise ConfigError(f"{pred.shape[-1]} sensor columns but {scale.shape[0]} scale entries")
    return np.abs(pred - actual) / scale


def anomaly_score(r: np.ndarray, variant: str = "mean_max") -> np.ndarray | float:
    """Mean plus max of the relative residuals of each row.

    ``variant='literal'`` replaces the max term with the plain sum over sensors.
    A 1-D input is one row and gives a float.
    """
    r = np.asarray(r, dtype=np.float64)
    one_row = r.ndim == 1
    r2 = r[None, :] if one_row else r
    if variant == "mean_max":
        s = r2.mean(axis=1) + r2.max(axis=1)
    elif variant == "literal":
        s = r2.mean(axis=1) + r2.sum(axis=1)
    else:
        raise ConfigError(f"unknown score variant {variant!r}")
    return float(s[0]) if one_row else s


def smooth_scores(s: np.ndarray, window: int) -> np.ndarray:
    """Forward min-window: ``out[i] = min(s[i], ..., s[i + window - 1])``."""
    s = np.asarray(s, dtype=np.float64)
    if window < 1:
        raise ConfigError(f"window must be >= 1, got {window}")
    if len(s) < window:
        raise UsageError(f"series of length {len(s)} is shorter than the window {window}")
    return _core.window_min(s, window)


def detect(smoothed: np.ndarray, threshold_base: float, alpha: float = 1.0) -> np.ndarray:
    return (np.asarray(smoothed, dtype=np.float64) > alpha * threshold_base).astype(np.int8)


def compute_threshold_base(healthy_scores: Sequence[np.ndarray] | np.ndarray, window: int) -> float:
    """Mean smoothed score over one or more healthy raw-score series."""
    if isinstance(healthy_scores, np.ndarray) and healthy_scores.ndim == 1:
        healthy_scores = [healthy_scores]
    smoothed = [smooth_scores(s, window) for s in healthy_scores if len(s) >= window]
    if not smoothed:
        raise UsageError("no healthy validation series long enough to compute a threshold")
    return max(float(np.concatenate(smoothed).mean()), THRESHOLD_FLOOR)


@dataclass
class ScoreTrace:
    """Raw and smoothed scores of one series; the last ``window - 1`` rows have no smoothed value."""

    raw: np.ndarray
    smoothed: np.ndarray
    labels: np.ndarray
    threshold: float
    truth: np.ndarray | None = None
    name: str = ""
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.smoothed) != len(self.labels):
            raise ConfigError("labels must align with smoothed scores")
        if len(self.smoothed) > len(self.raw):
            raise ConfigError("more smoothed values than raw scores")

    @property
    def scored_truth(self) -> np.ndarray | None:
        return None if self.truth is None else np.asarray(self.truth)[: len(self.smoothed)]

    def to_csv(self, path) -> None:
        n_s = len(self.smoothed)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "s_raw", "s_smooth", "threshold", "label", "truth"])
            for i, raw in enumerate(self.raw):
                smooth = repr(float(self.smoothed[i])) if i < n_s else ""
                label = str(int(self.labels[i])) if i < n_s else ""
                truth = "" if self.truth is None else str(int(self.truth[i]))
                w.writerow([i, repr(float(raw)), smooth, repr(float(self.threshold)), label, truth])


def score_series(pred_raw: np.ndarray, actual_raw: np.ndarray, cfg: ScoringConfig,
                 truth: np.ndarray | None = None, name: str = "") -> ScoreTrace:
    r = relative_residual(pred_raw, actual_raw, cfg.sensor_scale)
    raw = anomaly_score(r, cfg.variant)
    smoothed = smooth_scores(raw, cfg.window)
    return ScoreTrace(raw, smoothed, detect(smoothed, cfg.threshold_base, cfg.alpha), cfg.threshold, truth, name)

"""Threshold ensemble leak classifier and its differentiable smoothing.

The exact classifier flags a leak when any residual exceeds its node
threshold. The smooth variant replaces each indicator with a sharp sigmoid
and shifts the ensemble vote by an offset, which keeps the surrogate
differentiable for gradient-based training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ThresholdVector:
    """Positive per-node residual thresholds."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError("threshold vector must not be empty")
        if any(v <= 0 for v in self.values):
            raise ValueError(f"all thresholds must be positive, got {self.values}")

    @classmethod
    def from_array(cls, values: np.ndarray) -> "ThresholdVector":
        return cls(tuple(float(v) for v in values))

    def __len__(self) -> int:
        return len(self.values)

    def __array__(self, dtype=None, copy=None) -> np.ndarray:
        return np.array(self.values, dtype=dtype or float)


@dataclass(frozen=True)
class SmoothingConfig:
    """Sigmoid sharpness b and ensemble vote offset T."""

    sharpness: float = 100.0
    offset: float = 0.8

    def __post_init__(self) -> None:
        if self.sharpness <= 0:
            raise ValueError("sharpness must be positive")
        if not 0.0 <= self.offset <= 1.0:
            raise ValueError("offset must lie in [0, 1]")


def stable_sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    """Logistic function computed without overflow for large |x|."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    expx = np.exp(x[~pos])
    out[~pos] = expx / (1.0 + expx)
    return out if out.ndim else float(out)


def sigmoid_slope(x: np.ndarray | float) -> np.ndarray | float:
    """sigma(x) * (1 - sigma(x)), evaluated stably as exp(-|x|) / (1 + exp(-|x|))^2."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    out = e / (1.0 + e) ** 2
    return out if out.ndim else float(out)


def _check_dims(residuals: np.ndarray | list, thresholds) -> tuple[np.ndarray, np.ndarray]:
    r = np.asarray(residuals, dtype=float)
    theta = np.asarray(thresholds, dtype=float)
    if theta.ndim != 1:
        raise ValueError("thresholds must be one-dimensional")
    if r.shape[-1] != theta.shape[0]:
        raise ValueError(
            f"residual row length {r.shape[-1]} does not match "
            f"{theta.shape[0]} thresholds"
        )
    return r, theta


def classify_exact(residuals, thresholds) -> int | np.ndarray:
    """1 iff any residual strictly exceeds its threshold (rows stay rows)."""
    r, theta = _check_dims(residuals, thresholds)
    fired = (r > theta).any(axis=-1).astype(int)
    return fired if fired.ndim else int(fired)


def smooth_scores(residuals, thresholds, cfg: SmoothingConfig = SmoothingConfig()):
    """Smoothed leak score in (0, 1) per row."""
    r, theta = _check_dims(residuals, thresholds)
    votes = stable_sigmoid(cfg.sharpness * (r - theta))
    inner = np.asarray(votes).sum(axis=-1) - cfg.offset
    scores = stable_sigmoid(cfg.sharpness * inner)
    return scores


def smooth_score_gradients(
    residuals, thresholds, cfg: SmoothingConfig = SmoothingConfig()
) -> tuple[np.ndarray, np.ndarray]:
    """Scores and their per-row gradients w.r.t. each threshold.

    d score / d theta_j = -b^2 * score(1-score) * sigma_j(1-sigma_j), where
    sigma_j is the node-j vote; matches central finite differences.
    """
    r, theta = _check_dims(residuals, thresholds)
    z = cfg.sharpness * (r - theta)
    votes = stable_sigmoid(z)
    inner = np.asarray(votes).sum(axis=-1) - cfg.offset
    scores = stable_sigmoid(cfg.sharpness * inner)
    outer_slope = sigmoid_slope(cfg.sharpness * inner)
    grads = -(cfg.sharpness**2) * np.asarray(outer_slope)[..., None] * sigmoid_slope(z)
    return np.asarray(scores), np.asarray(grads)


def classify_smooth(residuals, thresholds, cfg: SmoothingConfig = SmoothingConfig()) -> float:
    """Smoothed score for a single residual row."""
    r = np.asarray(residuals, dtype=float)
    if r.ndim != 1:
        raise ValueError("classify_smooth expects a single residual row")
    return float(smooth_scores(r, thresholds, cfg))


def smooth_gradient(residuals, thresholds, cfg: SmoothingConfig = SmoothingConfig()) -> np.ndarray:
    """Gradient of the smoothed score of one row w.r.t. the thresholds."""
    r = np.asarray(residuals, dtype=float)
    if r.ndim != 1:
        raise ValueError("smooth_gradient expects a single residual row")
    _, grads = smooth_score_gradients(r, thresholds, cfg)
    return grads

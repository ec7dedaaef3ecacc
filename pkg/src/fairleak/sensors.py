"""Leak-free virtual pressure sensors and residual computation.

Each sensor node gets a linear regression predicting its pressure from the
rolling means of the other sensors; the absolute prediction errors are the
residuals that all detectors consume.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .hydrosim import PressureDataset


class LeakFreeDataError(ValueError):
    """Raised when virtual-sensor training data is unusable."""


@dataclass(frozen=True)
class PreprocessConfig:
    """Rolling-mean window: each input averages ``window + 1`` samples."""

    window: int = 2

    def __post_init__(self) -> None:
        if self.window < 0:
            raise ValueError("window must be nonnegative")


@dataclass(frozen=True)
class VirtualSensor:
    """Linear predictor of one sensor's pressure from the others' rolling means."""

    target_node: int
    target_index: int
    weights: np.ndarray
    intercept: float

    def __post_init__(self) -> None:
        self.weights.setflags(write=False)


@dataclass(frozen=True)
class ResidualDataset:
    """Nonnegative residual matrix with leak and group labels per row."""

    residuals: np.ndarray
    labels: np.ndarray
    group_labels: np.ndarray
    times: np.ndarray
    sensor_ids: tuple[int, ...]

    def __post_init__(self) -> None:
        n = len(self.labels)
        if self.residuals.shape[0] != n or self.group_labels.shape[0] != n:
            raise ValueError("row counts of residuals and labels disagree")
        if self.times.shape != (n,):
            raise ValueError("times length does not match labels")
        if np.any(self.residuals < 0):
            raise ValueError("residuals must be nonnegative")
        for name in ("residuals", "labels", "group_labels", "times"):
            getattr(self, name).setflags(write=False)

    @property
    def n_rows(self) -> int:
        return len(self.labels)

    @property
    def group_count(self) -> int:
        return self.group_labels.shape[1]


def rolling_mean(series: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean over ``window + 1`` rows; the first ``window`` rows drop out."""
    series = np.asarray(series, dtype=float)
    if window < 0:
        raise ValueError("window must be nonnegative")
    if series.shape[0] < window + 1:
        raise LeakFreeDataError(
            f"need at least {window + 1} rows for a window of {window}, "
            f"got {series.shape[0]}"
        )
    if window == 0:
        return series.copy()
    view = np.lib.stride_tricks.sliding_window_view(series, window + 1, axis=0)
    return view.mean(axis=-1)


def _as_dataset_list(
    leak_free: PressureDataset | Sequence[PressureDataset],
) -> list[PressureDataset]:
    if isinstance(leak_free, PressureDataset):
        return [leak_free]
    datasets = list(leak_free)
    if not datasets:
        raise LeakFreeDataError("no leak-free training data given")
    return datasets


def _ols(inputs: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, float]:
    """Least squares via centered normal equations, ridge 1e-8 when near-singular."""
    x_mean = inputs.mean(axis=0)
    y_mean = float(target.mean())
    centered = inputs - x_mean
    gram = centered.T @ centered
    rhs = centered.T @ (target - y_mean)
    needs_ridge = not np.all(np.isfinite(gram)) or np.linalg.cond(gram) > 1e12
    if needs_ridge:
        gram = gram + 1e-8 * np.eye(gram.shape[0])
    try:
        weights = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        gram = gram + 1e-8 * np.eye(gram.shape[0])
        weights = np.linalg.solve(gram, rhs)
    intercept = y_mean - float(x_mean @ weights)
    return weights, intercept


def fit_virtual_sensors(
    leak_free: PressureDataset | Sequence[PressureDataset],
    cfg: PreprocessConfig = PreprocessConfig(),
) -> list[VirtualSensor]:
    """Fit one predictor per sensor node on pooled leak-free scenarios.

    Every row of the training data must be leak free; rolling means never
    cross scenario boundaries.
    """
    datasets = _as_dataset_list(leak_free)
    sensor_ids = datasets[0].sensor_ids
    means: list[np.ndarray] = []
    targets: list[np.ndarray] = []
    for ds in datasets:
        if ds.sensor_ids != sensor_ids:
            raise LeakFreeDataError("training scenarios disagree on sensor ids")
        if np.any(ds.labels != 0):
            raise LeakFreeDataError(
                f"scenario {ds.scenario_id!r} contains leak rows; "
                "virtual sensors train on leak-free data only"
            )
        means.append(rolling_mean(ds.pressures, cfg.window))
        targets.append(ds.pressures[cfg.window :, :])
    design = np.vstack(means)
    observed = np.vstack(targets)

    sensors: list[VirtualSensor] = []
    d = len(sensor_ids)
    for j in range(d):
        other = [i for i in range(d) if i != j]
        weights, intercept = _ols(design[:, other], observed[:, j])
        sensors.append(
            VirtualSensor(
                target_node=sensor_ids[j],
                target_index=j,
                weights=weights,
                intercept=intercept,
            )
        )
    return sensors


def compute_residuals(
    vsensors: Sequence[VirtualSensor],
    data: PressureDataset,
    cfg: PreprocessConfig = PreprocessConfig(),
) -> ResidualDataset:
    """Absolute prediction errors per retained step; labels carry through."""
    d = len(data.sensor_ids)
    if len(vsensors) != d:
        raise ValueError(f"expected {d} virtual sensors, got {len(vsensors)}")
    for j, vs in enumerate(vsensors):
        if vs.target_index != j or vs.target_node != data.sensor_ids[j]:
            raise ValueError("virtual sensor ordering does not match the dataset")
        if vs.weights.shape != (d - 1,):
            raise ValueError(f"virtual sensor {vs.target_node}: weight length mismatch")

    means = rolling_mean(data.pressures, cfg.window)
    observed = data.pressures[cfg.window :, :]
    residuals = np.empty_like(observed)
    for j, vs in enumerate(vsensors):
        other = [i for i in range(d) if i != j]
        predicted = means[:, other] @ vs.weights + vs.intercept
        residuals[:, j] = np.abs(observed[:, j] - predicted)
    return ResidualDataset(
        residuals=residuals,
        labels=data.labels[cfg.window :].copy(),
        group_labels=data.group_labels[cfg.window :, :].copy(),
        times=data.times[cfg.window :].copy(),
        sensor_ids=data.sensor_ids,
    )


def concat_residuals(datasets: Sequence[ResidualDataset]) -> ResidualDataset:
    """Pool residual datasets row-wise (same sensors and group count)."""
    if not datasets:
        raise ValueError("nothing to concatenate")
    first = datasets[0]
    for ds in datasets[1:]:
        if ds.sensor_ids != first.sensor_ids or ds.group_count != first.group_count:
            raise ValueError("residual datasets disagree on sensors or groups")
    return ResidualDataset(
        residuals=np.vstack([ds.residuals for ds in datasets]),
        labels=np.concatenate([ds.labels for ds in datasets]),
        group_labels=np.vstack([ds.group_labels for ds in datasets]),
        times=np.concatenate([ds.times for ds in datasets]),
        sensor_ids=first.sensor_ids,
    )


def save_virtual_sensors(path: str | Path, vsensors: Sequence[VirtualSensor]) -> None:
    """Persist sensors as CSV with 17 significant digits (lossless for float64)."""
    if not vsensors:
        raise ValueError("no virtual sensors to save")
    width = len(vsensors[0].weights)
    header = ["node_id", "intercept"] + [f"w_{i}" for i in range(1, width + 1)]
    lines = [",".join(header)]
    for vs in vsensors:
        row = [str(vs.target_node), format(vs.intercept, ".17g")]
        row += [format(float(w), ".17g") for w in vs.weights]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_virtual_sensors(path: str | Path) -> list[VirtualSensor]:
    lines = Path(path).read_text().splitlines()
    if len(lines) < 2:
        raise ValueError(f"{path}: no virtual sensor rows")
    sensors: list[VirtualSensor] = []
    for index, line in enumerate(lines[1:]):
        parts = line.split(",")
        sensors.append(
            VirtualSensor(
                target_node=int(parts[0]),
                target_index=index,
                weights=np.array([float(v) for v in parts[2:]]),
                intercept=float(parts[1]),
            )
        )
    return sensors

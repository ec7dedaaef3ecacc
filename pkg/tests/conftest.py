"""Shared fixtures: a small seven-node network and experiment configs."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from fairleak.hydrosim import PressureDataset
from fairleak.network import parse_inp

TINY_INP = """\
[RESERVOIRS]
1 60.0

[JUNCTIONS]
2 0.0 0.02
3 0.0 0.015
4 0.0 0.01
5 0.0 0.02
6 0.0 0.015
7 0.0 0.01

[PIPES]
1 1 2 300.0 0.3  130.0
2 2 3 200.0 0.25 130.0
3 3 4 200.0 0.2  130.0
4 2 5 250.0 0.25 130.0
5 5 6 200.0 0.2  130.0
6 6 4 150.0 0.15 130.0
7 5 7 180.0 0.15 130.0
"""

TINY_GROUPS = """\
sensors = 3, 5
group.1 = 2, 3, 4
group.2 = 5, 6, 7
"""

TINY_CFG = """\
network = tiny.inp
groups = tiny_groups.cfg
seed = 7
timestep = 600
horizon = 40
amplitude = 0.10
noise_sigma = 0.02
leak_free_scenarios = 2
leak_diameters = 0.05
leak_nodes = all
scenario_repeats = 2
window = 2
train_fraction = 0.40
methods = H, T-F-PR, ACC, T-F-PR+F, ACC+F, DI+ACC
barrier_schedule = 0.01, 0.001
c_start = 0.005
lambda_start = 1.0
sweep_step = 0.01
sweep_max_steps = 3
max_iterations = 200
"""


@pytest.fixture()
def tiny_net():
    return parse_inp(TINY_INP, name="tiny")


@pytest.fixture()
def tiny_config_dir(tmp_path: Path) -> Path:
    (tmp_path / "tiny.inp").write_text(TINY_INP)
    (tmp_path / "tiny_groups.cfg").write_text(TINY_GROUPS)
    (tmp_path / "tiny.cfg").write_text(TINY_CFG)
    return tmp_path


def make_pressure_dataset(
    pressures: np.ndarray,
    labels: np.ndarray | None = None,
    group_labels: np.ndarray | None = None,
    sensor_ids: tuple[int, ...] | None = None,
    scenario_id: str = "synthetic",
) -> PressureDataset:
    """Wrap raw arrays in a PressureDataset with consistent defaults."""
    pressures = np.asarray(pressures, dtype=float)
    n, d = pressures.shape
    if labels is None:
        labels = np.zeros(n, dtype=int)
    if group_labels is None:
        group_labels = np.zeros((n, 1), dtype=int)
        group_labels[:, 0] = labels
    if sensor_ids is None:
        sensor_ids = tuple(range(1, d + 1))
    return PressureDataset(
        scenario_id=scenario_id,
        sensor_ids=sensor_ids,
        times=600.0 * np.arange(n, dtype=float),
        pressures=pressures,
        labels=np.asarray(labels, dtype=int),
        group_labels=np.asarray(group_labels, dtype=int),
    )

"""Steady-state hydraulic simulation of demand and leak scenarios.

Each timestep is solved as an independent steady state: damped Newton
iteration on the junction heads, with pipe flows from the inverted
Hazen-Williams relation and a pressure-dependent orifice term for leaks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .network import Network, GroupAssignment, NetworkError, Pipe, SensorSet

GRAVITY = 9.81
HAZEN_WILLIAMS_COEFF = 10.667
FLOW_EXPONENT = 1.852
DIAMETER_EXPONENT = 4.871
# |head difference| below this band uses a linear conductance so the Newton
# Jacobian stays finite at zero flow; the induced energy-balance error is
# bounded by the band itself.
_HEAD_LINEAR_BAND = 1e-9


class SolverError(RuntimeError):
    """Steady-state solve failed to converge."""


class ScenarioRejectedError(RuntimeError):
    """A scenario produced a physically invalid (negative-pressure) state."""


@dataclass(frozen=True)
class SimulationConfig:
    """Demand model, sampling grid, and leak coefficient for one run."""

    timestep: float = 600.0
    horizon: int = 144
    amplitude: float = 0.10
    noise_sigma: float = 0.05
    rng_seed: int = 42
    discharge_coeff: float = 0.75

    def __post_init__(self) -> None:
        if self.timestep <= 0:
            raise ValueError("timestep must be positive")
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2 steps")
        if not 0.0 <= self.amplitude < 1.0:
            raise ValueError("amplitude must lie in [0, 1)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if self.discharge_coeff <= 0:
            raise ValueError("discharge_coeff must be positive")


@dataclass(frozen=True)
class ScenarioSpec:
    """One scenario: optionally a leak at a node over a step window."""

    scenario_id: str
    index: int
    leak_node: int | None = None
    leak_diameter: float = 0.0
    leak_start_step: int = 0
    leak_end_step: int = 0

    def __post_init__(self) -> None:
        if self.leak_node is not None:
            if self.leak_diameter <= 0:
                raise ValueError(f"{self.scenario_id}: leak diameter must be positive")
            if not 0 <= self.leak_start_step < self.leak_end_step:
                raise ValueError(
                    f"{self.scenario_id}: need 0 <= leak_start_step < leak_end_step"
                )


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PressureDataset:
    """Sensor pressure heads with leak and group labels for one scenario."""

    scenario_id: str
    sensor_ids: tuple[int, ...]
    times: np.ndarray
    pressures: np.ndarray
    labels: np.ndarray
    group_labels: np.ndarray
    leak_node: int | None = None
    leak_diameter: float = 0.0

    def __post_init__(self) -> None:
        n = len(self.times)
        if self.pressures.shape != (n, len(self.sensor_ids)):
            raise ValueError("pressure matrix shape does not match times/sensors")
        if self.labels.shape != (n,) or self.group_labels.shape[0] != n:
            raise ValueError("label shapes do not match times")
        if not np.array_equal(self.group_labels.sum(axis=1), self.labels):
            raise ValueError("group labels must mark exactly one group per leak row")
        for name in ("times", "pressures", "labels", "group_labels"):
            _frozen(getattr(self, name))

    @property
    def n_steps(self) -> int:
        return len(self.times)

    @property
    def group_count(self) -> int:
        return self.group_labels.shape[1]


def headloss_hazen_williams(flow: float, pipe: Pipe) -> float:
    """Signed Hazen-Williams head loss (m) for a signed flow (m^3/s)."""
    k = HAZEN_WILLIAMS_COEFF * pipe.length / (
        pipe.roughness ** FLOW_EXPONENT * pipe.diameter ** DIAMETER_EXPONENT
    )
    return math.copysign(k * abs(flow) ** FLOW_EXPONENT, flow)


def leak_flow(pressure_head: float, diameter: float, discharge_coeff: float = 0.75) -> float:
    """Orifice outflow (m^3/s) through a circular hole under a pressure head."""
    if diameter <= 0:
        raise ValueError("leak diameter must be positive")
    if pressure_head <= 0:
        return 0.0
    area = math.pi * diameter * diameter / 4.0
    return discharge_coeff * area * math.sqrt(2.0 * GRAVITY * pressure_head)


class _Hydraulics:
    """Incidence matrix and pipe constants reused across Newton solves."""

    def __init__(self, net: Network):
        self.net = net
        self.junction_ids = [n.id for n in net.nodes]
        self.jindex = {nid: i for i, nid in enumerate(self.junction_ids)}
        self.n_junctions = len(self.junction_ids)
        self.elevations = np.array([n.elevation for n in net.nodes])
        self.reservoir_heads = np.array([r.head for r in net.reservoirs])
        # full head vector layout: junctions first, reservoirs appended
        offset = self.n_junctions
        full = dict(self.jindex)
        for i, res in enumerate(net.reservoirs):
            full[res.id] = offset + i
        self.a_idx = np.array([full[p.from_node] for p in net.pipes])
        self.b_idx = np.array([full[p.to_node] for p in net.pipes])
        # signed incidence over junction rows: -1 where the pipe leaves,
        # +1 where it enters; reservoir endpoints have no row
        n_pipes = len(net.pipes)
        self.incidence = np.zeros((self.n_junctions, n_pipes))
        for p, (a, b) in enumerate(zip(self.a_idx, self.b_idx)):
            if a < offset:
                self.incidence[a, p] = -1.0
            if b < offset:
                self.incidence[b, p] = 1.0
        self.k_pipe = np.array(
            [
                HAZEN_WILLIAMS_COEFF * p.length
                / (p.roughness ** FLOW_EXPONENT * p.diameter ** DIAMETER_EXPONENT)
                for p in net.pipes
            ]
        )
        inv_exp = 1.0 / FLOW_EXPONENT
        self.g_linear = (_HEAD_LINEAR_BAND / self.k_pipe) ** inv_exp / _HEAD_LINEAR_BAND

    def flows(self, heads: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pipe flows and their derivatives w.r.t. the head difference."""
        full = np.concatenate([heads, self.reservoir_heads])
        dh = full[self.a_idx] - full[self.b_idx]
        abs_dh = np.abs(dh)
        inv_exp = 1.0 / FLOW_EXPONENT
        safe = np.maximum(abs_dh, _HEAD_LINEAR_BAND)
        ratio = safe / self.k_pipe
        q_big = np.sign(dh) * ratio ** inv_exp
        dq_big = (inv_exp / self.k_pipe) * ratio ** (inv_exp - 1.0)
        small = abs_dh <= _HEAD_LINEAR_BAND
        q = np.where(small, dh * self.g_linear, q_big)
        dq = np.where(small, self.g_linear, dq_big)
        return q, dq


@dataclass(frozen=True)
class SteadyState:
    """One converged steady state, with enough detail to audit balances."""

    junction_ids: tuple[int, ...]
    heads: np.ndarray
    pressure_heads: np.ndarray
    pipe_flows: np.ndarray
    leak_outflow: float
    iterations: int
    worst_imbalance: float

    def __post_init__(self) -> None:
        for name in ("heads", "pressure_heads", "pipe_flows"):
            _frozen(getattr(self, name))

    @property
    def has_negative_pressure(self) -> bool:
        return bool(np.any(self.pressure_heads < 0))

    def head_of(self, node_id: int) -> float:
        return float(self.heads[self.junction_ids.index(node_id)])


def solve_steady_state(
    net: Network,
    demands: np.ndarray | Sequence[float],
    leak: tuple[int, float, float] | None = None,
    *,
    initial_heads: np.ndarray | None = None,
    tolerance: float = 1e-9,
    max_iterations: int = 200,
) -> SteadyState:
    """Solve junction heads such that mass balances close at every junction.

    Parameters
    ----------
    demands:
        Nonnegative junction demands (m^3/s) in ``net.nodes`` order.
    leak:
        Optional ``(node_id, hole_diameter, discharge_coeff)`` orifice leak.

    Raises
    ------
    SolverError
        If the Newton iteration does not reach ``tolerance`` (max junction
        mass imbalance, m^3/s) within ``max_iterations``.
    """
    hyd = _Hydraulics(net)
    demands = np.asarray(demands, dtype=float)
    if demands.shape != (hyd.n_junctions,):
        raise ValueError(
            f"expected {hyd.n_junctions} junction demands, got shape {demands.shape}"
        )
    if np.any(demands < 0):
        raise ValueError("demands must be nonnegative")

    leak_row = -1
    leak_coeff = 0.0
    if leak is not None:
        leak_node, leak_diameter, discharge = leak
        if leak_node not in hyd.jindex:
            raise NetworkError(f"leak node {leak_node} is not a junction")
        if leak_diameter <= 0:
            raise ValueError("leak diameter must be positive")
        leak_row = hyd.jindex[leak_node]
        leak_coeff = discharge * math.pi * leak_diameter * leak_diameter / 4.0

    def leak_terms(heads: np.ndarray) -> tuple[float, float]:
        if leak_row < 0:
            return 0.0, 0.0
        pressure = heads[leak_row] - hyd.elevations[leak_row]
        if pressure <= 0:
            return 0.0, 0.0
        outflow = leak_coeff * math.sqrt(2.0 * GRAVITY * pressure)
        slope = leak_coeff * math.sqrt(2.0 * GRAVITY) * 0.5 / math.sqrt(max(pressure, 1e-8))
        return outflow, slope

    def residual(heads: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, float, float]:
        q, dq = hyd.flows(heads)
        f = hyd.incidence @ q - demands
        outflow, slope = leak_terms(heads)
        if leak_row >= 0:
            f[leak_row] -= outflow
        return f, q, dq, outflow, slope

    if initial_heads is not None:
        heads = np.asarray(initial_heads, dtype=float).copy()
        if heads.shape != (hyd.n_junctions,):
            raise ValueError("initial_heads has the wrong shape")
    else:
        heads = np.full(hyd.n_junctions, float(hyd.reservoir_heads.max()) - 1.0)

    f, q, dq, outflow, slope = residual(heads)
    for iteration in range(1, max_iterations + 1):
        worst = float(np.max(np.abs(f)))
        if worst <= tolerance:
            return SteadyState(
                junction_ids=tuple(hyd.junction_ids),
                heads=heads,
                pressure_heads=heads - hyd.elevations,
                pipe_flows=q,
                leak_outflow=outflow,
                iterations=iteration - 1,
                worst_imbalance=worst,
            )
        # conductance Laplacian restricted to junction rows, plus the leak slope
        g = (hyd.incidence * dq) @ hyd.incidence.T
        if leak_row >= 0:
            g[leak_row, leak_row] += slope
        try:
            step = np.linalg.solve(g, f)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular Jacobian at iteration {iteration}: {exc}") from exc

        alpha = 1.0
        while True:
            trial = heads + alpha * step
            f_new, q_new, dq_new, out_new, slope_new = residual(trial)
            if np.max(np.abs(f_new)) < worst or alpha <= 2.0 ** -20:
                break
            alpha *= 0.5
        heads = trial
        f, q, dq, outflow, slope = f_new, q_new, dq_new, out_new, slope_new

    raise SolverError(
        f"no convergence after {max_iterations} iterations; "
        f"worst junction imbalance {float(np.max(np.abs(f))):.3e} m^3/s"
    )


def simulate_scenario(
    net: Network,
    sensors: SensorSet,
    groups: GroupAssignment,
    spec: ScenarioSpec,
    cfg: SimulationConfig,
    *,
    return_states: bool = False,
) -> PressureDataset | tuple[PressureDataset, list[SteadyState]]:
    """Simulate one scenario and record sensor pressure heads plus labels.

    Demands follow a diurnal sinusoid with multiplicative lognormal noise,
    drawn from a counter-based stream keyed by ``(cfg.rng_seed, spec.index)``
    so results are a pure function of the inputs. Scenarios that reach a
    negative junction pressure are rejected rather than clamped.
    """
    sensors.validate_against(net)
    if spec.leak_node is not None and spec.leak_end_step > cfg.horizon:
        raise ValueError(f"{spec.scenario_id}: leak window exceeds the horizon")
    leak_group = 0
    if spec.leak_node is not None:
        if spec.leak_node not in set(net.junction_ids):
            raise NetworkError(f"{spec.scenario_id}: leak node {spec.leak_node} unknown")
        leak_group = groups.group_of(spec.leak_node)

    rng = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(cfg.rng_seed, spawn_key=(0, spec.index)))
    )
    base = np.array([n.base_demand for n in net.nodes])
    n_junctions = len(base)
    jindex = {nid: i for i, nid in enumerate(net.junction_ids)}
    sensor_rows = [jindex[s] for s in sensors.node_ids]
    k_groups = groups.group_count

    times = np.empty(cfg.horizon)
    pressures = np.empty((cfg.horizon, len(sensor_rows)))
    labels = np.zeros(cfg.horizon, dtype=int)
    group_labels = np.zeros((cfg.horizon, k_groups), dtype=int)
    states: list[SteadyState] = []

    previous: np.ndarray | None = None
    for step in range(cfg.horizon):
        t = step * cfg.timestep
        diurnal = 1.0 + cfg.amplitude * math.sin(2.0 * math.pi * ((t % 86400.0) / 86400.0))
        noise = rng.lognormal(mean=0.0, sigma=cfg.noise_sigma, size=n_junctions)
        demands = base * diurnal * noise
        active = (
            spec.leak_node is not None
            and spec.leak_start_step <= step < spec.leak_end_step
        )
        leak = (
            (spec.leak_node, spec.leak_diameter, cfg.discharge_coeff) if active else None
        )
        try:
            state = solve_steady_state(net, demands, leak, initial_heads=previous)
        except SolverError as exc:
            raise SolverError(f"scenario {spec.scenario_id!r} step {step}: {exc}") from exc
        if state.has_negative_pressure:
            bad = [
                nid
                for nid, p in zip(state.junction_ids, state.pressure_heads)
                if p < 0
            ]
            raise ScenarioRejectedError(
                f"scenario {spec.scenario_id!r} step {step}: "
                f"negative pressure at junctions {bad}"
            )
        times[step] = t
        pressures[step] = state.pressure_heads[sensor_rows]
        if active:
            labels[step] = 1
            group_labels[step, leak_group - 1] = 1
        if return_states:
            states.append(state)
        previous = state.heads

    dataset = PressureDataset(
        scenario_id=spec.scenario_id,
        sensor_ids=tuple(sensors.node_ids),
        times=times,
        pressures=pressures,
        labels=labels,
        group_labels=group_labels,
        leak_node=spec.leak_node,
        leak_diameter=spec.leak_diameter,
    )
    if return_states:
        return dataset, states
    return dataset


def export_dataset_csv(path: str | Path, datasets: Sequence[PressureDataset]) -> None:
    """Write pooled scenarios as CSV; pressures carry 9 significant digits."""
    if not datasets:
        raise ValueError("no datasets to export")
    sensor_ids = datasets[0].sensor_ids
    k_groups = datasets[0].group_count
    for ds in datasets:
        if ds.sensor_ids != sensor_ids or ds.group_count != k_groups:
            raise ValueError("datasets disagree on sensors or group count")
    header = (
        ["time"]
        + [f"p_{nid}" for nid in sensor_ids]
        + ["y"]
        + [f"s_{k}" for k in range(1, k_groups + 1)]
        + ["scenario_id"]
    )
    lines = [",".join(header)]
    for ds in datasets:
        for i in range(ds.n_steps):
            row = [repr(float(ds.times[i]))]
            row += [format(float(p), ".9g") for p in ds.pressures[i]]
            row.append(str(int(ds.labels[i])))
            row += [str(int(v)) for v in ds.group_labels[i]]
            row.append(ds.scenario_id)
            lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def import_dataset_csv(path: str | Path) -> list[PressureDataset]:
    """Read a dataset CSV back into per-scenario datasets."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    header = lines[0].split(",")
    if header[0] != "time" or header[-1] != "scenario_id" or "y" not in header:
        raise ValueError(f"{path}: unexpected header {lines[0]!r}")
    y_col = header.index("y")
    sensor_ids = tuple(int(name[2:]) for name in header[1:y_col])
    k_groups = len(header) - y_col - 2

    datasets: list[PressureDataset] = []
    current: str | None = None
    rows: list[list[str]] = []

    def flush() -> None:
        if current is None:
            return
        times = np.array([float(r[0]) for r in rows])
        pressures = np.array([[float(v) for v in r[1:y_col]] for r in rows])
        labels = np.array([int(r[y_col]) for r in rows])
        group_labels = np.array(
            [[int(v) for v in r[y_col + 1 : y_col + 1 + k_groups]] for r in rows]
        )
        datasets.append(
            PressureDataset(
                scenario_id=current,
                sensor_ids=sensor_ids,
                times=times,
                pressures=pressures,
                labels=labels,
                group_labels=group_labels,
            )
        )

    for line in lines[1:]:
        if not line:
            continue
        parts = line.split(",")
        if parts[-1] != current:
            flush()
            current = parts[-1]
            rows = []
        rows.append(parts)
    flush()
    return datasets

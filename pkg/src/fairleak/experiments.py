"""End-to-end experiment pipelines behind the CLI subcommands.

Every pipeline is a pure function of the experiment config and the master
seed: scenario simulations draw from per-scenario counter-based streams,
train/test splits from per-diameter streams, and all workers return results
that are collected in a fixed order, so output files are byte-identical
regardless of the worker count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .configio import ConfigError, parse_float_list, parse_int_list, parse_str_list, read_key_values
from .detector import SmoothingConfig, ThresholdVector, classify_exact
from .fairness import (
    FairnessReport,
    H_METHOD_REFERENCE,
    REPORT_CSV_HEADER,
    di_from_eo,
    eo_from_di,
    evaluate_fairness,
    report_csv_row,
)
from .hydrosim import (
    PressureDataset,
    ScenarioSpec,
    SimulationConfig,
    export_dataset_csv,
    simulate_scenario,
)
from .network import (
    GroupAssignment,
    Network,
    SensorSet,
    assign_groups,
    load_group_config,
    parse_inp_file,
)
from .optimize import (
    COVARIANCE_METHODS,
    METHOD_KINDS,
    MethodSpec,
    TrainedModel,
    exact_accuracy,
    train,
    trivial_model,
)
from .plots import render_pareto_panel
from .sensors import (
    PreprocessConfig,
    ResidualDataset,
    VirtualSensor,
    compute_residuals,
    concat_residuals,
    fit_virtual_sensors,
    save_virtual_sensors,
)

log = logging.getLogger(__name__)

SWEEP_PARTNER = {"T-F-PR+F": "T-F-PR", "ACC+F": "ACC", "DI+ACC": "ACC"}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs: network, scenario plan, methods, budgets."""

    network_path: Path
    groups_path: Path
    seed: int = 42
    timestep: float = 600.0
    horizon: int = 144
    amplitude: float = 0.10
    noise_sigma: float = 0.02
    discharge_coeff: float = 0.75
    leak_free_scenarios: int = 4
    leak_diameters: tuple[float, ...] = (0.05, 0.10, 0.15)
    leak_nodes: tuple[int, ...] | None = None
    scenario_repeats: int = 1
    leak_start_step: int | None = None
    leak_end_step: int | None = None
    window: int = 2
    train_fraction: float = 0.40
    methods: tuple[str, ...] = METHOD_KINDS
    sigmoid_sharpness: float = 100.0
    ensemble_offset: float = 0.8
    barrier_schedule: tuple[float, ...] = (1.0, 0.1, 0.01)
    c_start: float = 0.01
    lambda_start: float = 1.0
    sweep_step: float = 0.01
    sweep_max_steps: int = 200
    max_iterations: int = 500
    tolerance: float = 1e-8

    def __post_init__(self) -> None:
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.sweep_step <= 0:
            raise ConfigError("sweep_step must be positive")
        if self.sweep_max_steps < 1:
            raise ConfigError("sweep_max_steps must be positive")
        if self.leak_free_scenarios < 1:
            raise ConfigError("at least one leak-free scenario is required")
        if self.scenario_repeats < 1:
            raise ConfigError("scenario_repeats must be positive")
        for m in self.methods:
            if m not in METHOD_KINDS:
                raise ConfigError(f"unknown method {m!r}")

    @property
    def simulation(self) -> SimulationConfig:
        return SimulationConfig(
            timestep=self.timestep,
            horizon=self.horizon,
            amplitude=self.amplitude,
            noise_sigma=self.noise_sigma,
            rng_seed=self.seed,
            discharge_coeff=self.discharge_coeff,
        )

    @property
    def preprocess(self) -> PreprocessConfig:
        return PreprocessConfig(window=self.window)

    @property
    def smoothing(self) -> SmoothingConfig:
        return SmoothingConfig(sharpness=self.sigmoid_sharpness, offset=self.ensemble_offset)

    def method_spec(self, kind: str, fairness_param: float | None = None) -> MethodSpec:
        return MethodSpec(
            kind=kind,
            fairness_param=fairness_param,
            smoothing=self.smoothing,
            barrier_schedule=self.barrier_schedule,
            max_iterations=self.max_iterations,
            tolerance=self.tolerance,
        )


def load_experiment_config(path: str | Path, seed_override: int | None = None) -> ExperimentConfig:
    """Read a ``key = value`` experiment config; paths resolve relative to it."""
    path = Path(path)
    values = read_key_values(path)
    base = path.parent

    def need(key: str) -> str:
        if key not in values:
            raise ConfigError(f"{path}: missing required key {key!r}")
        return values[key]

    kwargs: dict = {
        "network_path": (base / need("network")).resolve(),
        "groups_path": (base / need("groups")).resolve(),
    }
    scalar_keys: dict[str, Callable[[str], object]] = {
        "seed": int,
        "timestep": float,
        "horizon": int,
        "amplitude": float,
        "noise_sigma": float,
        "discharge_coeff": float,
        "leak_free_scenarios": int,
        "scenario_repeats": int,
        "leak_start_step": int,
        "leak_end_step": int,
        "window": int,
        "train_fraction": float,
        "sigmoid_sharpness": float,
        "ensemble_offset": float,
        "c_start": float,
        "lambda_start": float,
        "sweep_step": float,
        "sweep_max_steps": int,
        "max_iterations": int,
        "tolerance": float,
    }
    for key, parse in scalar_keys.items():
        if key in values:
            try:
                kwargs[key] = parse(values[key])
            except ValueError as exc:
                raise ConfigError(f"{path}: bad value for {key!r}: {values[key]!r}") from exc
    if "leak_diameters" in values:
        kwargs["leak_diameters"] = parse_float_list(values["leak_diameters"])
    if "leak_nodes" in values:
        raw = values["leak_nodes"]
        kwargs["leak_nodes"] = None if raw.strip().lower() == "all" else parse_int_list(raw)
    if "methods" in values:
        kwargs["methods"] = parse_str_list(values["methods"])
    if "barrier_schedule" in values:
        kwargs["barrier_schedule"] = parse_float_list(values["barrier_schedule"])
    if seed_override is not None:
        kwargs["seed"] = seed_override
    return ExperimentConfig(**kwargs)


def _parallel_map(fn: Callable, items: Sequence, jobs: int) -> list:
    """Order-preserving map over a thread pool (order keeps outputs stable)."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def build_scenario_plan(cfg: ExperimentConfig, net: Network) -> list[ScenarioSpec]:
    """Leak-free scenarios first, then leak scenarios per (diameter, node).

    ``scenario_repeats`` independent realisations are generated per pair so
    that a scenario-level split can still expose every leak location on both
    sides.
    """
    nodes = cfg.leak_nodes if cfg.leak_nodes is not None else tuple(sorted(net.junction_ids))
    junctions = set(net.junction_ids)
    for nid in nodes:
        if nid not in junctions:
            raise ConfigError(f"leak node {nid} is not a junction")
    start = cfg.leak_start_step if cfg.leak_start_step is not None else cfg.horizon // 2
    end = cfg.leak_end_step if cfg.leak_end_step is not None else cfg.horizon
    plan: list[ScenarioSpec] = []
    index = 0
    for i in range(cfg.leak_free_scenarios):
        plan.append(ScenarioSpec(scenario_id=f"leakfree_{i:02d}", index=index))
        index += 1
    for diameter in cfg.leak_diameters:
        for repeat in range(cfg.scenario_repeats):
            for node in nodes:
                suffix = f"_r{repeat}" if cfg.scenario_repeats > 1 else ""
                plan.append(
                    ScenarioSpec(
                        scenario_id=f"d{diameter:g}_n{node}{suffix}",
                        index=index,
                        leak_node=node,
                        leak_diameter=diameter,
                        leak_start_step=start,
                        leak_end_step=end,
                    )
                )
                index += 1
    if len(plan) == cfg.leak_free_scenarios:
        raise ConfigError("no scenarios: empty leak diameter or node plan")
    return plan


@dataclass
class PreparedData:
    """Simulated scenarios plus the residual substrate ready for training."""

    net: Network
    sensors: SensorSet
    groups: GroupAssignment
    scenarios: list[PressureDataset]
    vsensors: list[VirtualSensor]
    splits: dict[float, tuple[ResidualDataset, ResidualDataset]]


def _load_network(cfg: ExperimentConfig) -> tuple[Network, SensorSet, GroupAssignment]:
    net = parse_inp_file(cfg.network_path)
    group_map, sensors = load_group_config(cfg.groups_path)
    sensors.validate_against(net)
    groups = assign_groups(net, group_map)
    return net, sensors, groups


def simulate_all(cfg: ExperimentConfig, jobs: int = 1) -> tuple[Network, SensorSet, GroupAssignment, list[PressureDataset]]:
    net, sensors, groups = _load_network(cfg)
    plan = build_scenario_plan(cfg, net)
    sim_cfg = cfg.simulation
    run = lambda spec: simulate_scenario(net, sensors, groups, spec, sim_cfg)
    log.info("simulating %d scenarios (%d leak-free)", len(plan), cfg.leak_free_scenarios)
    datasets = _parallel_map(run, plan, jobs)
    return net, sensors, groups, datasets


def _split_scenarios(
    cfg: ExperimentConfig,
    diameter_index: int,
    residual_sets: list[ResidualDataset],
) -> tuple[ResidualDataset, ResidualDataset]:
    """Seeded scenario-level split; no scenario contributes rows to both sides.

    Deterministically reshuffles (bounded attempts) until every group and
    both classes appear on each side, so downstream metrics are defined.
    """
    n = len(residual_sets)
    n_train = min(max(1, round(cfg.train_fraction * n)), n - 1)
    for attempt in range(32):
        rng = np.random.Generator(
            np.random.Philox(
                np.random.SeedSequence(cfg.seed, spawn_key=(1, diameter_index, attempt))
            )
        )
        order = rng.permutation(n)
        train_idx = sorted(order[:n_train].tolist())
        test_idx = sorted(order[n_train:].tolist())
        train_rd = concat_residuals([residual_sets[i] for i in train_idx])
        test_rd = concat_residuals([residual_sets[i] for i in test_idx])
        sides_ok = all(
            rd.labels.sum() > 0
            and rd.labels.sum() < rd.n_rows
            and np.all(rd.group_labels.sum(axis=0) > 0)
            for rd in (train_rd, test_rd)
        )
        if sides_ok:
            if attempt:
                log.debug("diameter %d: split accepted on attempt %d", diameter_index, attempt)
            return train_rd, test_rd
    raise ConfigError(
        "could not build a train/test split covering every group; "
        "add scenarios or adjust the grouping"
    )


def prepare(cfg: ExperimentConfig, jobs: int = 1) -> PreparedData:
    """Simulate, fit virtual sensors on leak-free data, split residuals."""
    net, sensors, groups, datasets = simulate_all(cfg, jobs)
    leak_free = [ds for ds in datasets if ds.leak_node is None]
    vsensors = fit_virtual_sensors(leak_free, cfg.preprocess)

    splits: dict[float, tuple[ResidualDataset, ResidualDataset]] = {}
    for diameter_index, diameter in enumerate(cfg.leak_diameters):
        scenario_sets = [
            compute_residuals(vsensors, ds, cfg.preprocess)
            for ds in datasets
            if ds.leak_node is not None and ds.leak_diameter == diameter
        ]
        splits[diameter] = _split_scenarios(cfg, diameter_index, scenario_sets)
    return PreparedData(
        net=net,
        sensors=sensors,
        groups=groups,
        scenarios=datasets,
        vsensors=vsensors,
        splits=splits,
    )


# ---------------------------------------------------------------------------
# report writers


def _write_lines(path: Path, lines: Iterable[str]) -> None:
    path.write_text("\n".join(lines) + "\n")


def write_table1_csv(path: Path, rows: list[tuple[float, float, FairnessReport]]) -> None:
    lines = ["d,ACC,max_k,min_k,DI,EO,tilde_DI,tilde_EO"]
    for diameter, acc, report in rows:
        lines.append(
            ",".join(
                [
                    repr(float(diameter)),
                    repr(float(acc)),
                    repr(report.max_rate),
                    repr(report.min_rate),
                    repr(report.di),
                    repr(report.eo),
                    repr(report.tilde_di),
                    repr(report.tilde_eo),
                ]
            )
        )
    _write_lines(path, lines)


def write_models_csv(path: Path, entries: list[tuple[str, float, float | None, TrainedModel]]) -> None:
    lines = ["method,d,c_or_lambda,thetas,iterations,final_objective"]
    header_width = max((len(m.theta) for _, _, _, m in entries), default=0)
    lines[0] = "method,d,c_or_lambda," + ",".join(
        f"theta_{j}" for j in range(1, header_width + 1)
    ) + ",iterations,final_objective"
    for method, diameter, hyper, model in entries:
        row = [method, repr(float(diameter)), "" if hyper is None else repr(float(hyper))]
        row += [repr(float(v)) for v in model.theta.values]
        row += [""] * (header_width - len(model.theta))
        row += [str(model.iterations), repr(float(model.final_objective))]
        lines.append(",".join(row))
    _write_lines(path, lines)


@dataclass(frozen=True)
class SweepPoint:
    method: str
    diameter: float
    hyper: float | None
    acc: float
    di: float


def write_pareto_csv(path: Path, points: list[SweepPoint]) -> None:
    lines = ["method,d,hyper,ACC,DI"]
    for p in points:
        hyper = "" if p.hyper is None else repr(float(p.hyper))
        lines.append(
            ",".join([p.method, repr(float(p.diameter)), hyper, repr(p.acc), repr(p.di)])
        )
    _write_lines(path, lines)


def write_methods_csv(path: Path, rows: list[tuple[str, float, float, FairnessReport]]) -> None:
    lines = [REPORT_CSV_HEADER]
    for method, diameter, acc, report in rows:
        lines.append(report_csv_row(method, diameter, acc, report))
    _write_lines(path, lines)


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    lhs: float
    rhs: float
    tolerance: float

    @property
    def abs_error(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def passed(self) -> bool:
        return self.abs_error <= self.tolerance


def write_identities_csv(path: Path, checks: list[IdentityCheck]) -> None:
    lines = ["check,lhs,rhs,abs_error,tolerance,pass"]
    for c in checks:
        lines.append(
            ",".join(
                [c.name, repr(c.lhs), repr(c.rhs), repr(c.abs_error), repr(c.tolerance),
                 str(c.passed).lower()]
            )
        )
    _write_lines(path, lines)


# ---------------------------------------------------------------------------
# pipelines


def evaluate_on(theta: ThresholdVector, data: ResidualDataset) -> tuple[float, FairnessReport]:
    preds = classify_exact(data.residuals, theta)
    acc = float(np.mean(preds == data.labels))
    return acc, evaluate_fairness(preds, data.group_labels, data.labels)


def run_simulate(cfg: ExperimentConfig, out_dir: Path, jobs: int = 1) -> Path:
    """Simulate the scenario plan and write ``dataset.csv``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    _, _, _, datasets = simulate_all(cfg, jobs)
    target = out_dir / "dataset.csv"
    export_dataset_csv(target, datasets)
    log.info("wrote %s", target)
    return target


def _train_h_per_diameter(
    prepared: PreparedData, cfg: ExperimentConfig
) -> dict[float, TrainedModel]:
    models = {}
    for diameter in cfg.leak_diameters:
        train_rd, _ = prepared.splits[diameter]
        models[diameter] = train(cfg.method_spec("H"), train_rd)
    return models


def run_baseline(cfg: ExperimentConfig, out_dir: Path, jobs: int = 1) -> Path:
    """Train the grid baseline per diameter and write the score table."""
    out_dir.mkdir(parents=True, exist_ok=True)
    prepared = prepare(cfg, jobs)
    export_dataset_csv(out_dir / "dataset.csv", prepared.scenarios)
    save_virtual_sensors(out_dir / "sensors.csv", prepared.vsensors)

    h_models = _train_h_per_diameter(prepared, cfg)
    rows: list[tuple[float, float, FairnessReport]] = []
    model_rows = []
    for diameter in cfg.leak_diameters:
        _, test_rd = prepared.splits[diameter]
        model = h_models[diameter]
        acc, report = evaluate_on(model.theta, test_rd)
        rows.append((diameter, acc, report))
        model_rows.append(("H", diameter, None, model))
        log.info(
            "H d=%g: ACC=%.4f DI=%.4f EO=%.4f", diameter, acc, report.di, report.eo
        )
    write_table1_csv(out_dir / "table1.csv", rows)
    write_models_csv(out_dir / "models.csv", model_rows)
    return out_dir / "table1.csv"


def _hyper_sequence(cfg: ExperimentConfig, kind: str) -> Iterable[float]:
    """Sweep from the maximal-fairness end: c grows from c_start, lambda
    shrinks from lambda_start, in sweep_step increments."""
    for k in range(cfg.sweep_max_steps):
        if kind == "DI+ACC":
            value = round(cfg.lambda_start - k * cfg.sweep_step, 12)
            if value < 0:
                return
        else:
            value = round(cfg.c_start + k * cfg.sweep_step, 12)
        yield value


def _trivial_start_feasible(
    spec: MethodSpec, train_rd: ResidualDataset, acc_opt: float | None
) -> bool:
    """Whether a constant predictor satisfies the method's constraints."""
    if spec.kind in COVARIANCE_METHODS:
        candidate = trivial_model(spec, train_rd)
        return float(np.min(candidate.constraint_slacks)) > 0
    if spec.kind == "DI+ACC" and acc_opt is not None:
        candidate = trivial_model(spec, train_rd)
        floor = (1.0 - spec.fairness_param) * acc_opt
        return exact_accuracy(candidate.theta, train_rd) > floor
    return False


def _run_sweep_lane(
    kind: str,
    diameter: float,
    prepared: PreparedData,
    cfg: ExperimentConfig,
    theta0: ThresholdVector,
    partner_di: float,
    partner_acc: float,
    acc_opt: float | None,
) -> tuple[list[SweepPoint], list[tuple[str, float, float | None, TrainedModel]], list[tuple[str, float, float, FairnessReport]]]:
    train_rd, test_rd = prepared.splits[diameter]
    points: list[SweepPoint] = []
    models = []
    reports = []
    for step, hyper in enumerate(_hyper_sequence(cfg, kind)):
        spec = cfg.method_spec(kind, fairness_param=hyper)
        try:
            if step == 0 and _trivial_start_feasible(spec, train_rd, acc_opt):
                # the sweep starts at the fair extreme, which the protocol
                # realizes with the trivial predictor whenever feasible
                model = trivial_model(spec, train_rd)
            else:
                model = train(spec, train_rd, theta0, acc_opt=acc_opt)
        except Exception as exc:  # noqa: BLE001 - a lane stops, the sweep survives
            log.warning("%s d=%g stops at hyper=%g: %s", kind, diameter, hyper, exc)
            break
        acc, report = evaluate_on(model.theta, test_rd)
        points.append(SweepPoint(kind, diameter, hyper, acc, report.di))
        models.append((kind, diameter, hyper, model))
        reports.append((kind, diameter, acc, report))
        # the sweep ends once it reaches the baseline's operating point:
        # fairness no better and accuracy no worse (a DI dip at lower
        # accuracy is a stray local optimum, not the endpoint; once the
        # bound stops binding the trained model equals the baseline exactly,
        # so the rule always terminates)
        if report.di <= partner_di + 1e-12 and acc >= partner_acc - 1e-9:
            break
    return points, models, reports


def run_sweep(cfg: ExperimentConfig, out_dir: Path, jobs: int = 1) -> Path:
    """Sweep the fairness hyperparameters and write the pareto reports."""
    out_dir.mkdir(parents=True, exist_ok=True)
    fairness_methods = [m for m in cfg.methods if m in SWEEP_PARTNER]
    if not fairness_methods:
        raise ConfigError("sweep needs at least one fairness-enhancing method")
    for method in fairness_methods:
        if SWEEP_PARTNER[method] not in cfg.methods:
            raise ConfigError(
                f"{method} requires its baseline partner {SWEEP_PARTNER[method]!r} "
                "in the method list"
            )

    prepared = prepare(cfg, jobs)
    h_models = _train_h_per_diameter(prepared, cfg)

    baseline_kinds = sorted({SWEEP_PARTNER[m] for m in fairness_methods})

    def train_baseline(task: tuple[float, str]) -> tuple[float, str, TrainedModel]:
        diameter, kind = task
        train_rd, _ = prepared.splits[diameter]
        model = train(cfg.method_spec(kind), train_rd, h_models[diameter].theta)
        return diameter, kind, model

    baseline_tasks = [(d, k) for d in cfg.leak_diameters for k in baseline_kinds]
    baselines: dict[tuple[float, str], TrainedModel] = {}
    for diameter, kind, model in _parallel_map(train_baseline, baseline_tasks, jobs):
        baselines[(diameter, kind)] = model

    baseline_eval: dict[tuple[float, str], tuple[float, FairnessReport]] = {}
    for (diameter, kind), model in baselines.items():
        baseline_eval[(diameter, kind)] = evaluate_on(
            model.theta, prepared.splits[diameter][1]
        )

    def run_lane(task: tuple[float, str]):
        diameter, kind = task
        partner = SWEEP_PARTNER[kind]
        partner_acc, partner_report = baseline_eval[(diameter, partner)]
        acc_opt = None
        if kind == "DI+ACC":
            acc_model = baselines[(diameter, "ACC")]
            acc_opt = exact_accuracy(acc_model.theta, prepared.splits[diameter][0])
        return _run_sweep_lane(
            kind,
            diameter,
            prepared,
            cfg,
            h_models[diameter].theta,
            partner_report.di,
            partner_acc,
            acc_opt,
        )

    lanes = [(d, m) for d in cfg.leak_diameters for m in fairness_methods]
    lane_results = _parallel_map(run_lane, lanes, jobs)

    points: list[SweepPoint] = []
    model_rows: list[tuple[str, float, float | None, TrainedModel]] = []
    report_rows: list[tuple[str, float, float, FairnessReport]] = []
    for diameter in cfg.leak_diameters:
        for kind in baseline_kinds:
            acc, report = baseline_eval[(diameter, kind)]
            points.append(SweepPoint(kind, diameter, None, acc, report.di))
            model_rows.append((kind, diameter, None, baselines[(diameter, kind)]))
            report_rows.append((kind, diameter, acc, report))
    for (diameter, kind), result in zip(lanes, lane_results):
        lane_points, lane_models, lane_reports = result
        points.extend(lane_points)
        model_rows.extend(lane_models)
        report_rows.extend(lane_reports)
        log.info("%s d=%g: %d sweep points", kind, diameter, len(lane_points))

    write_pareto_csv(out_dir / "pareto.csv", points)
    write_models_csv(out_dir / "models.csv", model_rows)
    write_methods_csv(out_dir / "methods.csv", report_rows)

    for panel, diameter in enumerate(cfg.leak_diameters, start=1):
        sweep_by_method = {
            m: [(p.di, p.acc) for p in points if p.method == m and p.diameter == diameter and p.hyper is not None]
            for m in fairness_methods
        }
        crosses = {
            kind: (baseline_eval[(diameter, kind)][1].di, baseline_eval[(diameter, kind)][0])
            for kind in baseline_kinds
        }
        render_pareto_panel(diameter, panel, sweep_by_method, crosses, out_dir)
    return out_dir / "pareto.csv"


def reference_identity_checks() -> list[IdentityCheck]:
    """Corollary-style conversions evaluated on the reference score table."""
    checks: list[IdentityCheck] = []
    for row in H_METHOD_REFERENCE:
        checks.append(
            IdentityCheck(
                f"reference_d{row.diameter_cm}_eo_from_di",
                eo_from_di(row.di, row.max_rate),
                row.tilde_eo,
                5e-5,
            )
        )
        checks.append(
            IdentityCheck(
                f"reference_d{row.diameter_cm}_di_from_eo",
                di_from_eo(row.tilde_eo, row.max_rate),
                row.tilde_di,
                5e-5,
            )
        )
        # raw published eo column; the 5 cm row is the documented discrepancy
        checks.append(
            IdentityCheck(
                f"reference_d{row.diameter_cm}_di_from_raw_eo",
                di_from_eo(row.eo, row.max_rate),
                row.tilde_di,
                5e-5,
            )
        )
    return checks


def run_identities(cfg: ExperimentConfig, out_dir: Path, jobs: int = 1) -> Path:
    """Check the conversion identities on reference values and trained models."""
    out_dir.mkdir(parents=True, exist_ok=True)
    checks = reference_identity_checks()

    prepared = prepare(cfg, jobs)
    h_models = _train_h_per_diameter(prepared, cfg)
    for diameter in cfg.leak_diameters:
        _, test_rd = prepared.splits[diameter]
        _, report = evaluate_on(h_models[diameter].theta, test_rd)
        checks.append(
            IdentityCheck(
                f"model_H_d{diameter:g}_eo_identity",
                report.eo,
                eo_from_di(report.di, report.max_rate) if report.max_rate > 0 else 0.0,
                1e-12,
            )
        )
        checks.append(
            IdentityCheck(
                f"model_H_d{diameter:g}_di_identity",
                report.di,
                di_from_eo(report.eo, report.max_rate) if report.max_rate > 0 else 1.0,
                1e-12,
            )
        )
    write_identities_csv(out_dir / "identities.csv", checks)
    failed = [c.name for c in checks if not c.passed]
    expected_failures = {"reference_d5_di_from_raw_eo"}
    unexpected = [name for name in failed if name not in expected_failures]
    if unexpected:
        log.warning("identity checks failed: %s", unexpected)
    return out_dir / "identities.csv"

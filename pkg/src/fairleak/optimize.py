"""Training methods for the threshold ensemble.

Six methods are supported: the grid-tuned baseline "H"; the smoothed-loss
methods "T-F-PR" (false-positive minus true-positive rate) and "ACC"
(negative accuracy) solved with BFGS; their fairness-constrained variants
"T-F-PR+F" and "ACC+F", which bound the empirical covariance between each
group membership and the smoothed prediction via a log-barrier; and
"DI+ACC", which maximizes the exact disparate-impact score under an
accuracy floor with Nelder-Mead.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .detector import SmoothingConfig, ThresholdVector, classify_exact, smooth_scores, smooth_score_gradients
from .fairness import disparate_impact
from .sensors import ResidualDataset

log = logging.getLogger(__name__)

METHOD_KINDS = ("H", "T-F-PR", "ACC", "T-F-PR+F", "ACC+F", "DI+ACC")
COVARIANCE_METHODS = frozenset({"T-F-PR+F", "ACC+F"})
# sup |cov(s, f)| over binary s and scores f in [0, 1]; constraints with a
# bound at or above this can never bind and are dropped before optimizing
COVARIANCE_BOUND = 0.25
# bound shrink factor per outer continuation stage of the +F methods; a
# gentle decay keeps the warm-started solutions on the loss ridge
CONTINUATION_DECAY = 0.8


class TrainingError(RuntimeError):
    """Raised when a training method cannot produce a model."""


class InfeasibleStartError(TrainingError):
    """No interior starting point found for a constrained method."""


@dataclass(frozen=True)
class MethodSpec:
    """Which method to train and with what budget.

    ``fairness_param`` is the covariance bound c for the +F methods and the
    accuracy slack lambda for DI+ACC; it is unused otherwise.
    """

    kind: str
    fairness_param: float | None = None
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    barrier_schedule: tuple[float, ...] = (1.0, 0.1, 0.01)
    max_iterations: int = 500
    tolerance: float = 1e-8

    def __post_init__(self) -> None:
        if self.kind not in METHOD_KINDS:
            raise ValueError(f"unknown method kind {self.kind!r}")
        if self.kind in COVARIANCE_METHODS:
            if self.fairness_param is None or self.fairness_param < 0:
                raise ValueError(f"{self.kind} needs a covariance bound c >= 0")
        if self.kind == "DI+ACC":
            if self.fairness_param is None or not 0.0 <= self.fairness_param <= 1.0:
                raise ValueError("DI+ACC needs lambda in [0, 1]")
        mus = self.barrier_schedule
        if not mus or any(m <= 0 for m in mus) or any(
            later >= earlier for earlier, later in zip(mus, mus[1:])
        ):
            raise ValueError("barrier schedule must be positive and strictly decreasing")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True)
class TrainedModel:
    """A trained threshold vector with training diagnostics.

    ``final_objective`` is the method's own loss evaluated with exact
    predictions on the training data (-DI for DI+ACC). ``constraint_slacks``
    holds the exact-prediction constraint values at the solution for
    constrained methods.
    """

    method: MethodSpec
    theta: ThresholdVector
    iterations: int
    final_objective: float
    constraint_slacks: tuple[float, ...] = ()


# ---------------------------------------------------------------------------
# losses and constraints


def _check_classes(data: ResidualDataset) -> tuple[int, int]:
    n_pos = int(data.labels.sum())
    n_neg = data.n_rows - n_pos
    if n_pos == 0 or n_neg == 0:
        raise TrainingError("training data must contain both classes")
    return n_pos, n_neg


def _scores(theta, data: ResidualDataset, smooth: bool, cfg: SmoothingConfig) -> np.ndarray:
    if smooth:
        return np.asarray(smooth_scores(data.residuals, theta, cfg))
    return classify_exact(data.residuals, theta).astype(float)


def loss_l1(
    theta,
    data: ResidualDataset,
    smooth: bool = False,
    cfg: SmoothingConfig = SmoothingConfig(),
) -> float:
    """False-positive rate minus true-positive rate (lower is better)."""
    _check_classes(data)
    f = _scores(theta, data, smooth, cfg)
    y = data.labels
    return float(f[y == 0].mean() - f[y == 1].mean())


def loss_l2(
    theta,
    data: ResidualDataset,
    smooth: bool = False,
    cfg: SmoothingConfig = SmoothingConfig(),
) -> float:
    """Negative (smoothed) accuracy."""
    f = _scores(theta, data, smooth, cfg)
    y = data.labels
    return float(-np.mean(y * f + (1 - y) * (1.0 - f)))


def _l1_row_weights(labels: np.ndarray) -> np.ndarray:
    n_pos = labels.sum()
    n_neg = labels.size - n_pos
    return np.where(labels == 1, -1.0 / n_pos, 1.0 / n_neg)


def _l2_row_weights(labels: np.ndarray) -> np.ndarray:
    return -(2.0 * labels - 1.0) / labels.size


def loss_l1_gradient(
    theta, data: ResidualDataset, cfg: SmoothingConfig = SmoothingConfig()
) -> np.ndarray:
    """Gradient of the smoothed L1 loss w.r.t. the thresholds."""
    _check_classes(data)
    _, grads = smooth_score_gradients(data.residuals, theta, cfg)
    return _l1_row_weights(data.labels) @ grads


def loss_l2_gradient(
    theta, data: ResidualDataset, cfg: SmoothingConfig = SmoothingConfig()
) -> np.ndarray:
    """Gradient of the smoothed L2 loss w.r.t. the thresholds."""
    _, grads = smooth_score_gradients(data.residuals, theta, cfg)
    return _l2_row_weights(data.labels) @ grads


def _covariances(scores: np.ndarray, groups: np.ndarray) -> np.ndarray:
    n = scores.size
    return (groups.T @ scores) / n - groups.mean(axis=0) * scores.mean()


def smooth_covariances(
    theta, data: ResidualDataset, cfg: SmoothingConfig = SmoothingConfig()
) -> np.ndarray:
    """Covariance of each group membership with the smoothed prediction."""
    f = np.asarray(smooth_scores(data.residuals, theta, cfg))
    return _covariances(f, data.group_labels.astype(float))


def covariance_constraints(
    theta,
    data: ResidualDataset,
    bound: float,
    smooth: bool = False,
    cfg: SmoothingConfig = SmoothingConfig(),
) -> np.ndarray:
    """Constraint values [bound - cov_k, bound + cov_k] for every group k.

    All 2K values must be nonnegative for the covariance box to hold.
    """
    f = _scores(theta, data, smooth, cfg)
    covs = _covariances(f, data.group_labels.astype(float))
    return np.concatenate([bound - covs, bound + covs])


# ---------------------------------------------------------------------------
# barrier transform


def barrier_objective(
    loss: Callable[[np.ndarray], float],
    constraints: Sequence[Callable[[np.ndarray], float]],
    mu: float,
) -> Callable[[np.ndarray], float]:
    """Log-barrier transform: loss(x) - mu * sum(log C_k(x)).

    Returns +inf outside the strict interior so derivative-free optimizers
    can probe infeasible points safely.
    """
    if not constraints:
        return lambda x: loss(x)

    def objective(x: np.ndarray) -> float:
        values = np.array([c(x) for c in constraints])
        if np.any(values <= 0):
            return math.inf
        return loss(x) - mu * float(np.log(values).sum())

    return objective


def barrier_gradient(
    loss_grad: Callable[[np.ndarray], np.ndarray],
    constraints: Sequence[Callable[[np.ndarray], float]],
    constraint_grads: Sequence[Callable[[np.ndarray], np.ndarray]],
    mu: float,
) -> Callable[[np.ndarray], np.ndarray]:
    """Gradient of :func:`barrier_objective`; only valid at interior points."""

    def gradient(x: np.ndarray) -> np.ndarray:
        g = np.asarray(loss_grad(x), dtype=float).copy()
        for c, cg in zip(constraints, constraint_grads):
            g -= mu * np.asarray(cg(x)) / c(x)
        return g

    return gradient


# ---------------------------------------------------------------------------
# optimizers


@dataclass
class OptimizeResult:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool


def bfgs_minimize(
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    *,
    max_iterations: int = 500,
    tolerance: float = 1e-8,
) -> OptimizeResult:
    """Quasi-Newton minimization with a backtracking Armijo line search.

    Stops at gradient norm <= tolerance or when the budget is exhausted;
    never returns a point worse than the start. Objective values of +inf
    during the line search simply shorten the step, which makes the routine
    usable on barrier objectives.
    """
    x = np.asarray(x0, dtype=float).copy()
    fx = float(objective(x))
    g = np.asarray(gradient(x), dtype=float)
    if not np.isfinite(fx) or not np.all(np.isfinite(g)):
        raise ValueError("objective and gradient must be finite at the start")

    n = x.size
    h = np.eye(n)
    best_x, best_f = x.copy(), fx
    converged = False
    iteration = 0
    for iteration in range(1, max_iterations + 1):
        if np.linalg.norm(g) <= tolerance:
            converged = True
            iteration -= 1
            break
        direction = -h @ g
        slope = float(direction @ g)
        if slope >= 0:  # stale curvature; restart from steepest descent
            h = np.eye(n)
            direction = -g
            slope = -float(g @ g)
        alpha = 1.0
        accepted = False
        while alpha > 1e-16:
            trial = x + alpha * direction
            f_trial = float(objective(trial))
            if np.isfinite(f_trial) and f_trial <= fx + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        step = alpha * direction
        g_new = np.asarray(gradient(trial), dtype=float)
        if not np.all(np.isfinite(g_new)):
            break
        y = g_new - g
        sy = float(step @ y)
        if sy > 1e-12 * np.linalg.norm(step) * np.linalg.norm(y):
            rho = 1.0 / sy
            hy = h @ y
            h = (
                h
                - rho * (np.outer(step, hy) + np.outer(hy, step))
                + rho * rho * (float(y @ hy) + sy) * np.outer(step, step)
            )
        x, fx, g = trial, f_trial, g_new
        if fx < best_f:
            best_x, best_f = x.copy(), fx
        if np.linalg.norm(g) <= tolerance:
            converged = True
            break
    return OptimizeResult(x=best_x, value=best_f, iterations=iteration, converged=converged)


def nelder_mead_minimize(
    objective: Callable[[np.ndarray], float],
    x0: np.ndarray,
    *,
    max_iterations: int = 500,
    tolerance: float = 1e-8,
    initial_step: float = 0.05,
) -> OptimizeResult:
    """Downhill-simplex minimization; tolerates +inf away from the start.

    Standard reflection/expansion/contraction/shrink coefficients
    (1, 2, 0.5, 0.5); terminates when the simplex diameter drops to
    ``tolerance`` or the iteration budget runs out. The returned value never
    exceeds the objective at ``x0``.
    """
    x0 = np.asarray(x0, dtype=float)

    def safe(x: np.ndarray) -> float:
        value = float(objective(x))
        return value if not math.isnan(value) else math.inf

    f0 = safe(x0)
    if not math.isfinite(f0):
        raise ValueError("objective must be finite at the starting point")

    n = x0.size
    simplex = [x0.copy()]
    for i in range(n):
        vertex = x0.copy()
        vertex[i] += initial_step * abs(vertex[i]) if vertex[i] != 0 else 0.00025
        simplex.append(vertex)
    values = [f0] + [safe(v) for v in simplex[1:]]

    iteration = 0
    converged = False
    for iteration in range(1, max_iterations + 1):
        order = np.argsort(values, kind="stable")
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        spread = max(
            float(np.linalg.norm(v - simplex[0])) for v in simplex[1:]
        )
        if spread <= tolerance:
            converged = True
            iteration -= 1
            break
        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]
        reflected = centroid + (centroid - worst)
        f_reflected = safe(reflected)
        if f_reflected < values[0]:
            expanded = centroid + 2.0 * (centroid - worst)
            f_expanded = safe(expanded)
            if f_expanded < f_reflected:
                simplex[-1], values[-1] = expanded, f_expanded
            else:
                simplex[-1], values[-1] = reflected, f_reflected
        elif f_reflected < values[-2]:
            simplex[-1], values[-1] = reflected, f_reflected
        else:
            if f_reflected < values[-1]:
                contracted = centroid + 0.5 * (reflected - centroid)
            else:
                contracted = centroid - 0.5 * (centroid - worst)
            f_contracted = safe(contracted)
            if f_contracted < min(values[-1], f_reflected):
                simplex[-1], values[-1] = contracted, f_contracted
            else:
                for i in range(1, n + 1):
                    simplex[i] = simplex[0] + 0.5 * (simplex[i] - simplex[0])
                    values[i] = safe(simplex[i])
    best = int(np.argmin(values))
    return OptimizeResult(
        x=simplex[best].copy(),
        value=values[best],
        iterations=iteration,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# the H baseline: per-node grid search


def fit_threshold_grid(
    data: ResidualDataset,
    *,
    grid_points: int = 25,
    low_percentile: float = 50.0,
    high_percentile: float = 99.9,
    sweeps: int = 2,
) -> ThresholdVector:
    """Coordinate-wise greedy grid search maximizing exact training accuracy.

    Candidate thresholds per node are log-spaced between the given
    percentiles of that node's leak-free residuals. Ties break toward the
    lowest threshold, which favors sensitivity.
    """
    _check_classes(data)
    negatives = data.residuals[data.labels == 0]
    r = data.residuals
    y = data.labels
    d = r.shape[1]

    grids = []
    for j in range(d):
        lo, hi = np.percentile(negatives[:, j], [low_percentile, high_percentile])
        lo = max(float(lo), 1e-12)
        hi = max(float(hi), lo * (1.0 + 1e-9))
        # guard candidate strictly above every leak-free residual so the
        # zero-false-positive configuration stays reachable
        ceiling = max(float(negatives[:, j].max()) * (1.0 + 1e-6), hi)
        grids.append(np.append(np.geomspace(lo, hi, grid_points), ceiling))

    theta = np.array([g[-1] for g in grids])
    fired = r > theta
    for _ in range(sweeps):
        for j in range(d):
            others = np.any(np.delete(fired, j, axis=1), axis=1)
            best_value = theta[j]
            best_acc = -1.0
            for candidate in grids[j]:
                preds = others | (r[:, j] > candidate)
                acc = float(np.mean(preds == y))
                if acc > best_acc:
                    best_acc = acc
                    best_value = candidate
            theta[j] = best_value
            fired[:, j] = r[:, j] > best_value
    return ThresholdVector.from_array(theta)


# ---------------------------------------------------------------------------
# train()


def exact_accuracy(theta, data: ResidualDataset) -> float:
    preds = classify_exact(data.residuals, theta)
    return float(np.mean(preds == data.labels))


# log-thresholds live in [-60, 60]: exp() stays finite and any threshold
# beyond that range is already saturated for every residual
_PHI_LIMIT = 60.0


def _clip_phi(phi: np.ndarray) -> np.ndarray:
    return np.clip(phi, -_PHI_LIMIT, _PHI_LIMIT)


def trivial_model(spec: MethodSpec, data: ResidualDataset) -> TrainedModel:
    """The better of the two constant predictors, packaged as a model.

    Thresholds below every residual fire on everything; thresholds above
    every residual fire on nothing. Ties break toward firing (sensitivity).
    """
    d = data.residuals.shape[1]
    fire_all = ThresholdVector.from_array(np.exp(np.full(d, -_PHI_LIMIT)))
    fire_none = ThresholdVector.from_array(np.exp(np.full(d, _PHI_LIMIT)))
    base_loss = loss_l1 if spec.kind in ("T-F-PR", "T-F-PR+F") else loss_l2
    losses = (base_loss(fire_all, data), base_loss(fire_none, data))
    theta, value = (
        (fire_all, losses[0]) if losses[0] <= losses[1] else (fire_none, losses[1])
    )
    if spec.kind == "DI+ACC":
        value = -1.0  # constant predictors treat every group alike
    slacks: tuple[float, ...] = ()
    if spec.kind in COVARIANCE_METHODS:
        slacks = tuple(
            float(v)
            for v in covariance_constraints(
                theta, data, spec.fairness_param, smooth=False
            )
        )
    return TrainedModel(
        method=spec,
        theta=theta,
        iterations=0,
        final_objective=value,
        constraint_slacks=slacks,
    )


def _check_groups(data: ResidualDataset) -> None:
    counts = data.group_labels.sum(axis=0)
    empty = [k + 1 for k, c in enumerate(counts) if c == 0]
    if empty:
        raise TrainingError(f"training data has no rows for groups {empty}")


def _segment_interior(
    phi0: np.ndarray,
    is_interior: Callable[[np.ndarray], bool],
    targets: Sequence[np.ndarray],
) -> np.ndarray | None:
    """Closest interior point on a segment from phi0 toward a trivial target.

    Both trivial predictors are interior for any positive covariance bound,
    so bisecting toward them yields a start that keeps as much of phi0's
    structure as the constraints allow; the result depends smoothly on the
    bound, which keeps hyperparameter sweeps stable.
    """
    best: np.ndarray | None = None
    best_distance = math.inf
    for target in targets:
        if not is_interior(target):
            continue
        lo, hi = 0.0, 1.0
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if is_interior((1.0 - mid) * phi0 + mid * target):
                hi = mid
            else:
                lo = mid
        candidate = (1.0 - hi) * phi0 + hi * target
        distance = float(np.linalg.norm(candidate - phi0))
        if distance < best_distance:
            best, best_distance = candidate, distance
    return best


def _restore_feasibility(
    violation: Callable[[np.ndarray], float],
    is_interior: Callable[[np.ndarray], bool],
    phi0: np.ndarray,
    spec: MethodSpec,
    advice: str,
) -> tuple[np.ndarray, int]:
    result = nelder_mead_minimize(
        violation,
        phi0,
        max_iterations=spec.max_iterations,
        tolerance=spec.tolerance,
        initial_step=0.5,
    )
    if not is_interior(result.x):
        raise InfeasibleStartError(
            f"could not find an interior starting point; {advice}"
        )
    return result.x, result.iterations


def train(
    spec: MethodSpec,
    data: ResidualDataset,
    theta0: ThresholdVector | None = None,
    acc_opt: float | None = None,
) -> TrainedModel:
    """Train one method on a residual dataset.

    All methods except "H" start from ``theta0`` (the grid baseline's
    thresholds in the experiment pipelines) and optimize the log-thresholds,
    which keeps every threshold positive without extra constraints.
    ``acc_opt`` is the unconstrained accuracy reference required by DI+ACC.
    Deterministic given its inputs.
    """
    _check_classes(data)
    _check_groups(data)
    cfg = spec.smoothing

    if spec.kind == "H":
        theta = fit_threshold_grid(data)
        return TrainedModel(
            method=spec,
            theta=theta,
            iterations=0,
            final_objective=-exact_accuracy(theta, data),
        )

    if theta0 is None:
        raise TrainingError(f"{spec.kind} requires initial thresholds")
    phi = _clip_phi(np.log(np.asarray(theta0, dtype=float)))

    weights = (
        _l1_row_weights(data.labels)
        if spec.kind in ("T-F-PR", "T-F-PR+F")
        else _l2_row_weights(data.labels)
    )
    base_loss = loss_l1 if spec.kind in ("T-F-PR", "T-F-PR+F") else loss_l2
    labels = data.labels
    groups = data.group_labels.astype(float)
    group_means = groups.mean(axis=0)
    n_rows = data.n_rows

    def loss_from_scores(scores: np.ndarray) -> float:
        if spec.kind in ("T-F-PR", "T-F-PR+F"):
            return float(scores[labels == 0].mean() - scores[labels == 1].mean())
        return float(-np.mean(labels * scores + (1 - labels) * (1.0 - scores)))

    def covs_from_scores(scores: np.ndarray) -> np.ndarray:
        return (groups.T @ scores) / n_rows - group_means * scores.mean()

    def smooth_value(phi_vec: np.ndarray) -> tuple[float, np.ndarray]:
        """Loss and covariances in phi space, scores only."""
        scores = np.asarray(
            smooth_scores(data.residuals, np.exp(_clip_phi(phi_vec)), cfg)
        )
        return loss_from_scores(scores), covs_from_scores(scores)

    def smooth_parts(phi_vec: np.ndarray):
        """Loss gradient and covariance gradients in phi space."""
        theta_vec = np.exp(_clip_phi(phi_vec))
        scores, grads = smooth_score_gradients(data.residuals, theta_vec, cfg)
        grads = grads * theta_vec  # chain rule through theta = exp(phi)
        loss_grad = weights @ grads
        cov_grads = (groups - group_means).T @ grads / n_rows
        return covs_from_scores(scores), loss_grad, cov_grads

    iterations = 0

    if spec.kind in ("T-F-PR", "ACC") or (
        spec.kind in COVARIANCE_METHODS and spec.fairness_param >= COVARIANCE_BOUND
    ):
        result = bfgs_minimize(
            lambda p: smooth_value(p)[0],
            lambda p: smooth_parts(p)[1],
            phi,
            max_iterations=spec.max_iterations,
            tolerance=spec.tolerance,
        )
        theta = ThresholdVector.from_array(np.exp(_clip_phi(result.x)))
        return TrainedModel(
            method=spec,
            theta=theta,
            iterations=result.iterations,
            final_objective=base_loss(theta, data),
        )

    if spec.kind in COVARIANCE_METHODS:
        bound = spec.fairness_param
        if bound <= 0:
            raise InfeasibleStartError(
                "covariance bound 0 leaves no interior; increase c"
            )

        def constraint_values(phi_vec: np.ndarray, b: float) -> np.ndarray:
            _, covs = smooth_value(phi_vec)
            return np.concatenate([b - covs, b + covs])

        def barrier_value(phi_vec: np.ndarray, mu: float, b: float) -> float:
            value, covs = smooth_value(phi_vec)
            slack = np.concatenate([b - covs, b + covs])
            if np.any(slack <= 0):
                return math.inf
            return value - mu * float(np.log(slack).sum())

        def solve_at_bound(phi_start: np.ndarray, b: float) -> tuple[np.ndarray, int]:
            spent = 0
            current = phi_start

            def is_interior(phi_vec: np.ndarray) -> bool:
                # keep 1% of the box as margin so the barrier starts finite
                return bool(np.min(constraint_values(phi_vec, b)) > 0.01 * b)

            if not is_interior(current):
                restored = _segment_interior(
                    current,
                    is_interior,
                    [np.full_like(current, -_PHI_LIMIT), np.full_like(current, _PHI_LIMIT)],
                )
                if restored is None:
                    margin = min(1e-6, 0.5 * b)
                    restored, extra = _restore_feasibility(
                        lambda p: float(
                            np.sum(np.maximum(0.0, margin - constraint_values(p, b)) ** 2)
                        ),
                        lambda p: bool(np.min(constraint_values(p, b)) > 0),
                        current,
                        spec,
                        "increase the covariance bound c",
                    )
                    spent += extra
                current = restored

            for mu in spec.barrier_schedule:

                def gradient(phi_vec: np.ndarray, mu=mu) -> np.ndarray:
                    covs, loss_grad, cov_grads = smooth_parts(phi_vec)
                    lower = b - covs
                    upper = b + covs
                    g = loss_grad.copy()
                    g -= mu * ((-cov_grads) / lower[:, None]).sum(axis=0)
                    g -= mu * (cov_grads / upper[:, None]).sum(axis=0)
                    return g

                result = bfgs_minimize(
                    lambda p, mu=mu: barrier_value(p, mu, b),
                    gradient,
                    current,
                    max_iterations=spec.max_iterations,
                    tolerance=spec.tolerance,
                )
                current = result.x
                spent += result.iterations
            return current, spent

        # continuation: start from a bound where theta0 is already interior,
        # tighten toward the requested bound with warm starts; following the
        # loss ridge this way avoids collapsing into the trivial region when
        # the requested box is tight
        _, covs0 = smooth_value(phi)
        start_bound = 1.05 * float(np.max(np.abs(covs0)))
        bounds = []
        b = start_bound
        while b > bound:
            bounds.append(b)
            b *= CONTINUATION_DECAY
        bounds.append(bound)
        for b in bounds:
            phi, spent = solve_at_bound(phi, b)
            iterations += spent

        # the sweep's fair extreme admits the trivial predictors whenever
        # they are feasible; keep whichever candidate the final barrier
        # stage scores best
        mu_final = spec.barrier_schedule[-1]
        candidates = [phi, np.full_like(phi, -_PHI_LIMIT), np.full_like(phi, _PHI_LIMIT)]
        phi = min(candidates, key=lambda p: barrier_value(p, mu_final, bound))
        theta = ThresholdVector.from_array(np.exp(_clip_phi(phi)))
        slacks = covariance_constraints(theta, data, bound, smooth=False)
        if float(slacks.min()) < -1e-6:
            log.warning(
                "%s: exact covariance constraints violated by %.3g at the solution",
                spec.kind,
                -float(slacks.min()),
            )
        return TrainedModel(
            method=spec,
            theta=theta,
            iterations=iterations,
            final_objective=base_loss(theta, data),
            constraint_slacks=tuple(float(v) for v in slacks),
        )

    # DI+ACC: exact, non-differentiable objective under an accuracy floor
    if acc_opt is None:
        raise TrainingError("DI+ACC requires the unconstrained reference accuracy")
    lam = spec.fairness_param
    floor = (1.0 - lam) * acc_opt

    def exact_parts(phi_vec: np.ndarray) -> tuple[float, float]:
        theta_vec = np.exp(_clip_phi(phi_vec))
        preds = classify_exact(data.residuals, theta_vec)
        acc = float(np.mean(preds == data.labels))
        di, _ = disparate_impact(preds, data.group_labels)
        return di, acc

    def slack_at(phi_vec: np.ndarray) -> float:
        _, acc = exact_parts(phi_vec)
        return acc - floor

    if slack_at(phi) <= 0:
        phi, extra = _restore_feasibility(
            lambda p: float(max(0.0, 1e-6 - slack_at(p)) ** 2),
            lambda p: slack_at(p) > 0,
            phi,
            spec,
            "increase lambda",
        )
        iterations += extra

    def di_barrier(phi_vec: np.ndarray, mu: float) -> float:
        di, acc = exact_parts(phi_vec)
        slack = acc - floor
        if slack <= 0:
            return math.inf
        return -di - mu * math.log(slack)

    for mu in spec.barrier_schedule:
        result = nelder_mead_minimize(
            lambda p, mu=mu: di_barrier(p, mu),
            phi,
            max_iterations=spec.max_iterations,
            tolerance=spec.tolerance,
            initial_step=0.5,
        )
        phi = result.x
        iterations += result.iterations

    # admit the trivial predictors at the fair extreme when feasible: the
    # best candidate is the most fair one, with accuracy as the tie-break
    def candidate_rank(phi_vec: np.ndarray) -> tuple[int, float, float]:
        di, acc = exact_parts(phi_vec)
        return (0 if acc - floor > 0 else 1, -di, -acc)

    candidates = [phi, np.full_like(phi, -_PHI_LIMIT), np.full_like(phi, _PHI_LIMIT)]
    phi = min(candidates, key=candidate_rank)
    theta = ThresholdVector.from_array(np.exp(_clip_phi(phi)))
    di, acc = exact_parts(phi)
    return TrainedModel(
        method=spec,
        theta=theta,
        iterations=iterations,
        final_objective=-di,
        constraint_slacks=(acc - floor,),
    )

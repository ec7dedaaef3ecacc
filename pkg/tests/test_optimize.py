import math

import numpy as np
import pytest

from fairleak.detector import SmoothingConfig, ThresholdVector, classify_exact
from fairleak.fairness import disparate_impact
from fairleak.optimize import (
    COVARIANCE_BOUND,
    InfeasibleStartError,
    MethodSpec,
    TrainingError,
    barrier_gradient,
    barrier_objective,
    bfgs_minimize,
    covariance_constraints,
    exact_accuracy,
    fit_threshold_grid,
    loss_l1,
    loss_l1_gradient,
    loss_l2,
    loss_l2_gradient,
    nelder_mead_minimize,
    smooth_covariances,
    train,
    trivial_model,
)
from fairleak.sensors import ResidualDataset


def make_residual_dataset(residuals, labels, groups=None):
    residuals = np.atleast_2d(np.asarray(residuals, dtype=float))
    if residuals.shape[0] == 1 and len(labels) > 1:
        residuals = residuals.T
    labels = np.asarray(labels, dtype=int)
    n = len(labels)
    if groups is None:
        groups = np.zeros((n, 1), dtype=int)
        groups[:, 0] = labels
    return ResidualDataset(
        residuals=residuals,
        labels=labels,
        group_labels=np.asarray(groups, dtype=int),
        times=600.0 * np.arange(n, dtype=float),
        sensor_ids=tuple(range(1, residuals.shape[1] + 1)),
    )


@pytest.fixture()
def tpr_fpr_fixture():
    # theta = 1 gives TPR 0.75, FPR 0.25 by construction
    return make_residual_dataset(
        [2.0, 2.0, 2.0, 0.0, 2.0, 0.0, 0.0, 0.0],
        [1, 1, 1, 1, 0, 0, 0, 0],
    )


@pytest.fixture()
def separable_fixture():
    """Positives above 1.0, negatives below 0.5, two interleaved groups."""
    rng = np.random.default_rng(8)
    n_pos, n_neg = 40, 40
    pos = rng.uniform(1.1, 2.5, (n_pos, 2))
    neg = rng.uniform(0.01, 0.45, (n_neg, 2))
    residuals = np.vstack([pos, neg])
    labels = np.array([1] * n_pos + [0] * n_neg)
    groups = np.zeros((n_pos + n_neg, 2), dtype=int)
    groups[:n_pos:2, 0] = 1
    groups[1:n_pos:2, 1] = 1
    return make_residual_dataset(residuals, labels, groups)


def test_loss_l1_values(tpr_fpr_fixture):
    data = tpr_fpr_fixture
    assert loss_l1(np.array([1.0]), data) == pytest.approx(-0.5)
    # perfect separator on a different fixture
    perfect = make_residual_dataset([2, 2, 0.1, 0.1], [1, 1, 0, 0])
    assert loss_l1(np.array([1.0]), perfect) == pytest.approx(-1.0)
    # constant all-positive predictor
    assert loss_l1(np.array([1e-9]), perfect) == pytest.approx(0.0)


def test_loss_l1_requires_both_classes():
    single = make_residual_dataset([1.0, 2.0], [1, 1])
    with pytest.raises(TrainingError):
        loss_l1(np.array([0.5]), single)


def test_loss_l2_values():
    perfect = make_residual_dataset([2, 2, 0.1, 0.1], [1, 1, 0, 0])
    assert loss_l2(np.array([1.0]), perfect) == pytest.approx(-1.0)
    assert loss_l2(np.array([1e-12]), perfect) == pytest.approx(-0.5)
    three_of_four = make_residual_dataset([2, 2, 0.1, 2.0], [1, 1, 0, 0])
    assert loss_l2(np.array([1.0]), three_of_four) == pytest.approx(-0.75)


def test_barrier_objective_values():
    loss = lambda x: 0.0
    assert barrier_objective(loss, [], 0.5)(np.zeros(1)) == 0.0
    same = barrier_objective(lambda x: 3.5, [lambda x: 1.0], 0.1)
    assert same(np.zeros(1)) == pytest.approx(3.5)
    half = barrier_objective(loss, [lambda x: 0.5], 1.0)
    assert half(np.zeros(1)) == pytest.approx(math.log(2.0), abs=1e-12)
    infeasible = barrier_objective(loss, [lambda x: -0.1], 1.0)
    assert infeasible(np.zeros(1)) == math.inf


def test_barrier_gradient_matches_finite_differences():
    loss = lambda x: float(x @ x)
    loss_grad = lambda x: 2.0 * x
    constraints = [lambda x: float(x[0] + 2.0), lambda x: float(3.0 - x[1])]
    cgrads = [lambda x: np.array([1.0, 0.0]), lambda x: np.array([0.0, -1.0])]
    objective = barrier_objective(loss, constraints, 0.3)
    gradient = barrier_gradient(loss_grad, constraints, cgrads, 0.3)
    x = np.array([0.4, -0.7])
    g = gradient(x)
    h = 1e-7
    for j in range(2):
        up, down = x.copy(), x.copy()
        up[j] += h
        down[j] -= h
        fd = (objective(up) - objective(down)) / (2 * h)
        assert g[j] == pytest.approx(fd, rel=1e-5)


def test_covariance_constraints_values(tpr_fpr_fixture):
    # constant predictor: all constraint values equal the bound
    data = tpr_fpr_fixture
    values = covariance_constraints(np.array([10.0]), data, 0.07)
    assert np.allclose(values, 0.07)
    # binary covariances are bounded by 1/4, so c=0.5 never binds
    loose = covariance_constraints(np.array([1.0]), data, 0.5)
    assert loose.min() >= 0.25
    # cov = 0.125 fixture: one side dips negative at c = 0.1
    cov_data = make_residual_dataset(
        [2.0, 0.0, 0.0, 0.0],
        [1, 0, 1, 0],
        groups=np.array([[1], [0], [1], [0]]),
    )
    values = covariance_constraints(np.array([1.0]), cov_data, 0.1)
    assert values.min() == pytest.approx(-0.025, abs=1e-12)
    assert values.max() == pytest.approx(0.225, abs=1e-12)


def test_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    cfg = SmoothingConfig(sharpness=10.0, offset=0.8)
    h = 1e-6
    for _ in range(30):
        n, d = 40, 3
        residuals = rng.uniform(0, 2, (n, d))
        labels = rng.integers(0, 2, n)
        if labels.sum() in (0, n):
            labels[0] = 1 - labels[0]
        groups = np.zeros((n, 2), dtype=int)
        groups[labels == 1, rng.integers(0, 2)] = 1
        data = make_residual_dataset(residuals, labels, groups)
        theta = rng.uniform(0.2, 1.8, d)
        for loss, grad_fn in ((loss_l1, loss_l1_gradient), (loss_l2, loss_l2_gradient)):
            grad = grad_fn(theta, data, cfg)
            for j in range(d):
                up, down = theta.copy(), theta.copy()
                up[j] += h
                down[j] -= h
                fd = (
                    loss(up, data, smooth=True, cfg=cfg)
                    - loss(down, data, smooth=True, cfg=cfg)
                ) / (2 * h)
                assert abs(grad[j] - fd) < 1e-4 * max(abs(fd), abs(grad[j])) + 1e-10


def test_bfgs_quadratic_bowl():
    target = np.array([2.0, -1.0, 0.5])
    result = bfgs_minimize(
        lambda x: float((x - target) @ (x - target)),
        lambda x: 2.0 * (x - target),
        np.array([5.0, 5.0, 5.0]),
    )
    assert np.allclose(result.x, target, atol=1e-6)
    assert result.converged


def test_bfgs_rosenbrock():
    def rosen(x):
        return float(100.0 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2)

    def rosen_grad(x):
        return np.array(
            [
                -400.0 * x[0] * (x[1] - x[0] ** 2) - 2.0 * (1 - x[0]),
                200.0 * (x[1] - x[0] ** 2),
            ]
        )

    result = bfgs_minimize(rosen, rosen_grad, np.array([-1.2, 1.0]), max_iterations=2000)
    assert np.allclose(result.x, [1.0, 1.0], atol=1e-4)


def test_bfgs_ill_conditioned_quadratic():
    scales = np.geomspace(1.0, 100.0, 10)
    result = bfgs_minimize(
        lambda x: float(0.5 * x @ (scales * x)),
        lambda x: scales * x,
        np.ones(10),
        max_iterations=200,
        tolerance=1e-6,
    )
    assert result.converged
    assert np.linalg.norm(scales * result.x) <= 1e-6
    assert np.allclose(result.x, np.zeros(10), atol=1e-6)


def test_bfgs_never_worse_than_start():
    # nasty non-convex objective; the result must not regress
    f = lambda x: float(np.sin(5 * x[0]) + 0.1 * x[0] ** 2)
    g = lambda x: np.array([5 * np.cos(5 * x[0]) + 0.2 * x[0]])
    start = np.array([0.3])
    result = bfgs_minimize(f, g, start, max_iterations=50)
    assert result.value <= f(start)


def test_bfgs_rejects_nonfinite_start():
    with pytest.raises(ValueError):
        bfgs_minimize(lambda x: math.inf, lambda x: x, np.zeros(2))


def test_nelder_mead_quadratic():
    result = nelder_mead_minimize(
        lambda x: float((x[0] - 3.0) ** 2 + (x[1] + 1.0) ** 2),
        np.array([0.0, 0.0]),
        max_iterations=2000,
    )
    assert np.allclose(result.x, [3.0, -1.0], atol=1e-4)


def test_nelder_mead_respects_infinity_sentinel():
    def boxed(x):
        if np.any(x < 0.0) or np.any(x > 1.0):
            return math.inf
        return float(np.sum((x - 0.5) ** 2))

    result = nelder_mead_minimize(boxed, np.array([0.9, 0.1]), max_iterations=2000)
    assert np.allclose(result.x, [0.5, 0.5], atol=1e-4)
    assert np.all(result.x >= 0.0) and np.all(result.x <= 1.0)


def test_nelder_mead_constant_function():
    start = np.array([1.5, -2.0])
    result = nelder_mead_minimize(lambda x: 7.0, start, max_iterations=100)
    assert np.array_equal(result.x, start)
    assert result.value == 7.0


def test_nelder_mead_requires_finite_start():
    with pytest.raises(ValueError):
        nelder_mead_minimize(lambda x: math.inf, np.zeros(2))


def test_barrier_stage_path_matches_analytic_solutions():
    """min x^2 s.t. x >= 0.5: stage optima are [1 + sqrt(1 + 8 mu)] / 4."""
    schedule = (1.0, 0.1, 0.01)
    x = np.array([2.0])
    losses = []
    for mu in schedule:
        objective = barrier_objective(
            lambda v: float(v @ v), [lambda v: float(v[0] - 0.5)], mu
        )
        gradient = barrier_gradient(
            lambda v: 2.0 * v, [lambda v: float(v[0] - 0.5)], [lambda v: np.ones(1)], mu
        )
        result = bfgs_minimize(objective, gradient, x, tolerance=1e-10)
        x = result.x
        analytic = (1.0 + math.sqrt(1.0 + 8.0 * mu)) / 4.0
        assert x[0] == pytest.approx(analytic, abs=1e-4)
        losses.append(float(x @ x))
    assert losses == sorted(losses, reverse=True)


def brute_force_best_accuracy(data, points=60):
    lo = data.residuals.min() * 0.5 + 1e-9
    hi = data.residuals.max() * 1.5
    grid = np.geomspace(lo, hi, points)
    best = 0.0
    for t1 in grid:
        for t2 in grid:
            preds = classify_exact(data.residuals, np.array([t1, t2]))
            best = max(best, float(np.mean(preds == data.labels)))
    return best


def test_grid_baseline_matches_brute_force(separable_fixture):
    theta = fit_threshold_grid(separable_fixture)
    acc = exact_accuracy(theta, separable_fixture)
    assert acc == 1.0
    assert brute_force_best_accuracy(separable_fixture) == 1.0


def test_every_method_solves_separable_fixture(separable_fixture):
    data = separable_fixture
    smoothing = SmoothingConfig(sharpness=100.0, offset=0.8)
    h_model = train(MethodSpec("H", smoothing=smoothing), data)
    theta0 = h_model.theta
    specs = [
        MethodSpec("H", smoothing=smoothing),
        MethodSpec("T-F-PR", smoothing=smoothing),
        MethodSpec("ACC", smoothing=smoothing),
        MethodSpec("T-F-PR+F", fairness_param=0.2, smoothing=smoothing),
        MethodSpec("ACC+F", fairness_param=0.2, smoothing=smoothing),
        MethodSpec("DI+ACC", fairness_param=0.05, smoothing=smoothing),
    ]
    for spec in specs:
        model = train(spec, data, theta0, acc_opt=1.0)
        preds = classify_exact(data.residuals, model.theta)
        assert float(np.mean(preds == data.labels)) == 1.0, spec.kind
        di, _ = disparate_impact(preds, data.group_labels)
        assert di == 1.0, spec.kind


def test_acc_f_with_loose_bound_equals_acc(separable_fixture):
    data = separable_fixture
    theta0 = train(MethodSpec("H"), data).theta
    plain = train(MethodSpec("ACC"), data, theta0)
    loose = train(MethodSpec("ACC+F", fairness_param=COVARIANCE_BOUND), data, theta0)
    assert loose.theta == plain.theta


def test_di_acc_lambda_one_reaches_perfect_fairness():
    rng = np.random.default_rng(11)
    residuals = rng.uniform(0, 1.5, (120, 2))  # no signal at all
    labels = rng.integers(0, 2, 120)
    labels[:4] = [1, 1, 0, 0]
    groups = np.zeros((120, 2), dtype=int)
    groups[labels == 1, 0] = 1
    # move some positives to group 2 so both groups are populated
    pos_rows = np.flatnonzero(labels == 1)
    groups[pos_rows[::2], 0] = 0
    groups[pos_rows[::2], 1] = 1
    data = make_residual_dataset(residuals, labels, groups)
    theta0 = train(MethodSpec("H"), data).theta
    model = train(
        MethodSpec("DI+ACC", fairness_param=1.0), data, theta0, acc_opt=0.9
    )
    preds = classify_exact(data.residuals, model.theta)
    di, _ = disparate_impact(preds, data.group_labels)
    assert di == 1.0
    assert float(np.mean(preds == data.labels)) >= 0.0


def test_improvement_guarantee(separable_fixture):
    data = separable_fixture
    cfg = SmoothingConfig(sharpness=10.0, offset=0.8)
    theta0 = ThresholdVector((0.7, 0.9))
    for kind, loss in (("T-F-PR", loss_l1), ("ACC", loss_l2)):
        model = train(MethodSpec(kind, smoothing=cfg), data, theta0)
        before = loss(theta0, data, smooth=True, cfg=cfg)
        after = loss(model.theta, data, smooth=True, cfg=cfg)
        assert after <= before + 1e-12


def test_constrained_model_reports_exact_slacks(separable_fixture):
    model = train(
        MethodSpec("ACC+F", fairness_param=0.2),
        separable_fixture,
        train(MethodSpec("H"), separable_fixture).theta,
    )
    assert len(model.constraint_slacks) == 4  # 2K values for K=2
    expected = covariance_constraints(model.theta, separable_fixture, 0.2, smooth=False)
    assert np.allclose(model.constraint_slacks, expected)
    assert min(model.constraint_slacks) >= -1e-6


def test_train_error_paths(separable_fixture, tpr_fpr_fixture):
    with pytest.raises(TrainingError, match="initial"):
        train(MethodSpec("ACC"), separable_fixture)
    theta0 = ThresholdVector((0.7, 0.9))
    with pytest.raises(InfeasibleStartError, match="increase c"):
        train(MethodSpec("ACC+F", fairness_param=0.0), separable_fixture, theta0)
    with pytest.raises(TrainingError, match="reference accuracy"):
        train(MethodSpec("DI+ACC", fairness_param=0.5), separable_fixture, theta0)
    single = make_residual_dataset([1.0, 2.0], [1, 1])
    with pytest.raises(TrainingError, match="both classes"):
        train(MethodSpec("H"), single)


def test_method_spec_validation():
    with pytest.raises(ValueError):
        MethodSpec("bogus")
    with pytest.raises(ValueError):
        MethodSpec("ACC+F")  # missing c
    with pytest.raises(ValueError):
        MethodSpec("DI+ACC", fairness_param=1.5)
    with pytest.raises(ValueError):
        MethodSpec("ACC", barrier_schedule=(0.1, 0.1))
    with pytest.raises(ValueError):
        MethodSpec("ACC", max_iterations=0)


def test_trivial_model_prefers_firing_on_balanced_data():
    data = make_residual_dataset(
        [2.0, 2.0, 2.0, 0.01, 2.0, 0.01, 0.01, 0.01],
        [1, 1, 1, 1, 0, 0, 0, 0],
    )
    model = trivial_model(MethodSpec("ACC+F", fairness_param=0.05), data)
    preds = classify_exact(data.residuals, model.theta)
    assert preds.all() or not preds.any()
    assert len(model.constraint_slacks) == 2


def test_smooth_covariances_shape(separable_fixture):
    covs = smooth_covariances(np.array([0.7, 0.9]), separable_fixture)
    assert covs.shape == (2,)

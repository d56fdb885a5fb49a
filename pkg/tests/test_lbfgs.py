from __future__ import annotations

import dask
import numpy as np
import pytest

from cse_expansion.exceptions import DomainError
from cse_expansion.lbfgs import OptimizerOptions, lbfgs_minimize


def _quadratic(eigenvalues, seed=0):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(len(eigenvalues),) * 2))
    A = (q * eigenvalues) @ q.T
    b = rng.normal(size=len(eigenvalues))
    b /= np.linalg.norm(b)

    def fun(x):
        g = A @ x - b
        return 0.5 * float(x @ A @ x) - float(b @ x), g

    return fun, np.linalg.solve(A, b)


def _rosenbrock(x):
    f = 100.0 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2
    g = np.array(
        [-400.0 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]), 200.0 * (x[1] - x[0] ** 2)]
    )
    return f, g


def test_clustered_quadratic():
    eigenvalues = np.repeat(np.logspace(0, 2, 5), 10)
    fun, solution = _quadratic(eigenvalues)
    report = lbfgs_minimize(fun, np.zeros(50), OptimizerOptions(memory=20))
    assert report.converged
    assert report.n_iterations <= 60
    assert report.grad_norm < 1e-10
    np.testing.assert_allclose(report.x, solution, atol=1e-9)


def test_condition_100_quadratic_exact_line_search():
    # with (near) exact line searches L-BFGS spans the conjugate-gradient
    # Krylov space on a quadratic
    fun, solution = _quadratic(np.logspace(0, 2, 50))
    report = lbfgs_minimize(fun, np.zeros(50), OptimizerOptions(curvature=1e-3))
    assert report.converged
    assert report.n_iterations <= 60
    assert report.grad_norm < 1e-10
    np.testing.assert_allclose(report.x, solution, atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_condition_100_quadratic_defaults(seed):
    # objective changes fall below roundoff long before |g| < 1e-10
    fun, solution = _quadratic(np.logspace(0, 2, 50), seed=seed)
    rng = np.random.default_rng(seed + 100)
    report = lbfgs_minimize(fun, rng.normal(size=50), OptimizerOptions())
    assert report.converged, report.message
    assert report.grad_norm < 1e-10
    np.testing.assert_allclose(report.x, solution, atol=1e-9)


def test_flat_objective_accepts_on_slope():
    # a constant offset this large hides every objective change below 1e-8
    fun, solution = _quadratic(np.logspace(0, 2, 20))

    def offset(x):
        f, g = fun(x)
        return f + 1e8, g

    report = lbfgs_minimize(offset, np.zeros(20), OptimizerOptions())
    assert report.converged, report.message
    np.testing.assert_allclose(report.x, solution, atol=1e-9)


def test_rosenbrock():
    report = lbfgs_minimize(_rosenbrock, np.array([-1.2, 1.0]), OptimizerOptions())
    assert report.converged
    np.testing.assert_allclose(report.x, [1.0, 1.0], atol=1e-8)
    assert report.fun < 1e-12
    assert report.message == "gradient norm below tolerance"


def test_monotone_decrease():
    values = []
    lbfgs_minimize(
        _rosenbrock,
        np.array([-1.2, 1.0]),
        OptimizerOptions(gradient_tolerance=1e-8),
        callback=lambda x, f: values.append(f),
    )
    assert len(values) > 2
    values = np.array(values)
    assert np.all(np.diff(values) <= 1e-12 * np.abs(values[:-1]))


def test_start_at_minimum():
    report = lbfgs_minimize(_rosenbrock, np.array([1.0, 1.0]), OptimizerOptions())
    assert report.converged
    assert report.n_iterations == 0
    assert report.n_evaluations == 1


def test_iteration_limit_warns():
    with pytest.warns(UserWarning, match="maximum number of iterations"):
        report = lbfgs_minimize(
            _rosenbrock, np.array([-1.2, 1.0]), OptimizerOptions(max_iterations=3)
        )
    assert not report.converged
    assert report.n_iterations == 3
    assert report.fun < _rosenbrock(np.array([-1.2, 1.0]))[0]


def test_line_search_failure_keeps_best_point():
    def inconsistent(x):
        # gradient points uphill
        return float(x @ x), -2.0 * x

    x0 = np.array([1.0, -2.0])
    with pytest.warns(UserWarning, match="line search failed"):
        report = lbfgs_minimize(inconsistent, x0, OptimizerOptions())
    assert not report.converged
    assert "line search failed" in report.message
    np.testing.assert_array_equal(report.x, x0)


def test_nonfinite_start():
    with pytest.raises(DomainError, match="finite"):
        lbfgs_minimize(_rosenbrock, np.array([np.nan, 0.0]))


@pytest.mark.parametrize(
    "kwargs",
    [
        {"sufficient_decrease": 0.9, "curvature": 0.1},
        {"curvature": 1.0},
        {"memory": 0},
        {"gradient_tolerance": 0.0},
        {"max_line_search": 0},
        {"gradient_mode": "secant"},
        {"roundoff_tolerance": -1.0},
    ],
)
def test_options_validation(kwargs):
    with pytest.raises(DomainError):
        OptimizerOptions(**kwargs)


def test_options_from_config():
    with dask.config.set({"cse.optimizer.memory": 3, "cse.optimizer.max-iterations": 7}):
        options = OptimizerOptions.from_config(gradient_tolerance=1e-6, curvature=None)
    assert options.memory == 3
    assert options.max_iterations == 7
    assert options.gradient_tolerance == 1e-6
    assert options.curvature == 0.9

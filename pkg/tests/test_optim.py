"""Quasi-Newton minimizer: standard test functions and objective fits."""

import numpy as np
import pytest

import minflow as mf
from minflow.optim import OptimizerConfig, minimize
from util import random_binary_data, random_ising


def quadratic(center):
    def f(theta):
        diff = theta - center
        return float(diff @ diff), 2.0 * diff

    return f


def rosenbrock(theta):
    x, y = theta
    value = (1 - x) ** 2 + 100.0 * (y - x * x) ** 2
    grad = np.array([-2 * (1 - x) - 400 * x * (y - x * x), 200 * (y - x * x)])
    return value, grad


class TestStandardProblems:
    def test_quadratic_from_any_start(self):
        rng = np.random.default_rng(0)
        center = np.array([3.0, -2.0, 0.5, 7.0])
        for _ in range(5):
            theta, trace = minimize(quadratic(center), rng.normal(0, 5, 4))
            assert np.abs(theta - center).max() <= 1e-8
            assert trace.termination == "gradient-tolerance"

    def test_rosenbrock_standard_start(self):
        theta, trace = minimize(rosenbrock, np.array([-1.2, 1.0]), OptimizerConfig(max_iterations=300))
        assert np.abs(theta - 1.0).max() <= 1e-5
        assert trace.termination in ("gradient-tolerance", "value-tolerance")

    def test_already_converged_start(self):
        theta, trace = minimize(quadratic(np.zeros(2)), np.zeros(2))
        assert trace.termination == "gradient-tolerance"
        assert len(trace.records) == 1


class TestTerminationAndTrace:
    def test_monotone_accepted_values(self):
        theta, trace = minimize(rosenbrock, np.array([-1.2, 1.0]))
        values = [r.value for r in trace.records]
        assert all(b <= a for a, b in zip(values, values[1:]))

    def test_max_iterations_reason(self):
        _, trace = minimize(rosenbrock, np.array([-1.2, 1.0]), OptimizerConfig(max_iterations=3))
        assert trace.termination == "max-iterations"
        assert len(trace.records) == 4  # initial point plus three iterations

    def test_invalid_start_raises(self):
        with pytest.raises(mf.InvalidStartError):
            minimize(quadratic(np.zeros(2)), np.array([np.nan, 0.0]))

        def broken(theta):
            return np.inf, np.zeros(2)

        with pytest.raises(mf.InvalidStartError):
            minimize(broken, np.zeros(2))

    def test_line_search_stall_returns_best_iterate(self):
        # a linear ramp never satisfies the curvature condition
        def ramp(theta):
            return float(theta.sum()), np.ones_like(theta)

        theta, trace = minimize(ramp, np.array([1.0]), OptimizerConfig(max_iterations=50))
        assert trace.termination == "line-search-stall"
        assert theta[0] == 1.0
        assert trace.records[-1].value == 1.0

    def test_deterministic(self):
        a = minimize(rosenbrock, np.array([-1.2, 1.0]))
        b = minimize(rosenbrock, np.array([-1.2, 1.0]))
        assert np.array_equal(a[0], b[0])
        assert [r.value for r in a[1].records] == [r.value for r in b[1].records]

    def test_trace_export(self, tmp_path):
        _, trace = minimize(quadratic(np.ones(2)), np.zeros(2))
        csv_path = tmp_path / "trace.csv"
        jsonl_path = tmp_path / "trace.jsonl"
        trace.to_csv(csv_path)
        trace.to_jsonl(jsonl_path)
        header, *rows = csv_path.read_text().strip().splitlines()
        assert header == "iter,value,grad_norm,elapsed_ms"
        assert len(rows) == len(trace.records)
        import json

        lines = jsonl_path.read_text().strip().splitlines()
        assert json.loads(lines[-1])["termination"] == trace.termination

    def test_config_validation(self):
        with pytest.raises(ValueError):
            OptimizerConfig(gradient_norm_tolerance=0.0)
        with pytest.raises(ValueError):
            OptimizerConfig(history_size=0)
        with pytest.raises(ValueError):
            OptimizerConfig(sufficient_decrease=0.95, curvature=0.9)


class TestObjectiveFits:
    def test_six_unit_fit_reaches_gradient_tolerance(self):
        rng = np.random.default_rng(21)
        truth = random_ising(rng, d=6, scale=0.4)
        data = mf.gibbs_sample_ising(truth, mf.SamplerConfig(n_samples=3000, seed=2))
        fitted, trace = mf.fit_ising_mpf(data)
        assert trace.termination == "gradient-tolerance"
        assert trace.final_grad_norm <= 1e-7

        # stationarity against the dense oracle: finite differences of the
        # brute-force value at the fitted parameters
        theta = fitted.default_params()
        h = 1e-6
        grad = np.empty_like(theta)
        for i in range(theta.size):
            up, dn = theta.copy(), theta.copy()
            up[i] += h
            dn[i] -= h
            grad[i] = (
                mf.brute_force_objective(fitted, data, up, mode="full-neighbor")
                - mf.brute_force_objective(fitted, data, dn, mode="full-neighbor")
            ) / (2 * h)
        assert np.linalg.norm(grad) <= 1e-5

    def test_convex_fit_start_independent(self):
        rng = np.random.default_rng(22)
        truth = random_ising(rng, d=5, scale=0.4)
        data = random_binary_data(rng, 5, 64)
        finals = []
        for s in range(5):
            start = np.random.default_rng(100 + s).normal(0, 1.0, 25)
            _, trace = mf.fit_ising_mpf(data, theta0=start)
            finals.append(trace.final_value)
        finals = np.array(finals)
        assert (finals.max() - finals.min()) / finals.min() <= 1e-6

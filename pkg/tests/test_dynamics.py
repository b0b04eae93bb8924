import numpy as np
import pytest

from bitgeo.dynamics import (
    RegressionProblem,
    dot_product_estimator_variance,
    simulate_regression,
    simulate_scalar,
)


class TestScalarFixedPoint:
    def test_alpha_half_occupancy_and_mean(self):
        trace = simulate_scalar(0.5, 0.01, 10**5)
        assert trace.p_hat == pytest.approx(0.75, abs=0.02)
        assert trace.time_avg_theta == pytest.approx(0.5, abs=0.04)

    def test_alpha_zero_symmetric(self):
        trace = simulate_scalar(0.0, 0.01, 10**5)
        assert trace.time_avg_theta == pytest.approx(0.0, abs=0.02)
        assert trace.p_hat == pytest.approx(0.5, abs=0.02)

    def test_alpha_one_freezes_positive(self):
        trace = simulate_scalar(1.0, 0.05, 5000)
        assert trace.time_avg_theta == pytest.approx(1.0, abs=0.01)

    def test_theta_matches_w(self):
        trace = simulate_scalar(0.3, 0.02, 2000)
        assert np.array_equal(trace.theta_trajectory, np.where(trace.w_trajectory > 0, 1.0, -1.0))

    def test_rejects_bad_epsilon_and_steps(self):
        with pytest.raises(ValueError):
            simulate_scalar(0.5, 0.0, 100)
        with pytest.raises(ValueError):
            simulate_scalar(0.5, -0.01, 100)
        with pytest.raises(ValueError):
            simulate_scalar(0.5, 0.01, 0)


class TestScalarBand:
    def test_bounded_oscillation_after_burn_in(self):
        # w0 on the side the walk contracts from; at |alpha| = 1 the other
        # side freezes in place and never reaches the band
        for alpha, w0 in ((-1.0, 0.5), (-0.8, 0.5), (-0.3, 0.5), (0.0, 0.5), (0.4, -0.5), (0.9, -0.5), (1.0, -0.5)):
            trace = simulate_scalar(alpha, 0.01, 20000, w0=w0)
            post = trace.w_trajectory[trace.burn_in:]
            assert np.abs(post).max() <= 2.0 * 0.01 + 1e-15

    def test_step_sizes_exact(self):
        alpha, eps = 0.37, 0.02
        trace = simulate_scalar(alpha, eps, 5000)
        diffs = np.diff(trace.w_trajectory)
        up = eps * (alpha + 1.0)
        down = eps * (alpha - 1.0)
        closest = np.minimum(np.abs(diffs - up), np.abs(diffs - down))
        assert closest.max() < 1e-15

    def test_sign_changes_for_contracting_alpha(self):
        for alpha in (-0.9, 0.0, 0.5, 0.95):
            trace = simulate_scalar(alpha, 0.01, 10**5)
            signs = trace.theta_trajectory
            changes = int(np.sum(signs[1:] != signs[:-1]))
            assert changes >= 100

    def test_divergence_above_one(self):
        eps = 0.01
        trace = simulate_scalar(1.5, eps, int(100 / eps))
        assert trace.w_trajectory.max() > 10.0
        # |w| eventually monotone increasing
        tail = np.abs(trace.w_trajectory[-1000:])
        assert np.all(np.diff(tail) > 0)

    def test_divergence_below_minus_one(self):
        eps = 0.01
        trace = simulate_scalar(-1.5, eps, int(100 / eps))
        assert trace.w_trajectory.min() < -10.0


class TestScalarConvergenceRate:
    def test_time_average_error_halves_with_horizon(self):
        alpha = 1.0 / np.sqrt(3.0)
        trace = simulate_scalar(alpha, 0.01, 90000)
        theta = trace.theta_trajectory[trace.burn_in:]

        def mean_abs_error(horizon):
            offsets = np.arange(0, 640, 20)
            errs = [abs(theta[: horizon + k].mean() - alpha) for k in offsets]
            return float(np.mean(errs))

        ratio = mean_abs_error(20000) / mean_abs_error(40000)
        assert 1.5 <= ratio <= 2.5


class TestRegression:
    def test_identity_covariance_recovers_targets(self):
        rng = np.random.default_rng(0)
        c_yx = rng.uniform(-0.9, 0.9, size=(1, 100))
        problem = RegressionProblem(c_yx=c_yx, c_xx=np.eye(100))
        trace = simulate_regression(problem, 0.01, 10**5, seed=1)
        assert np.abs(trace.time_avg_theta - c_yx).max() < 0.05

    def test_zero_targets_oscillate_about_zero(self):
        problem = RegressionProblem(c_yx=np.zeros((1, 20)), c_xx=np.eye(20))
        trace = simulate_regression(problem, 0.01, 4 * 10**4, seed=2)
        assert np.abs(trace.time_avg_theta).max() <= 0.05

    def test_matches_independent_iteration_oracle(self):
        c_yx = np.array([[0.5, 0.5]])
        c_xx = np.diag([1.0, 4.0])
        problem = RegressionProblem(c_yx=c_yx, c_xx=c_xx)
        w0 = np.array([[0.1, -0.2]])
        steps = 500
        trace = simulate_regression(problem, 0.05, steps, w0=w0, record_every=1)

        w = w0.copy()
        expected = []
        for _ in range(steps):
            theta = np.where(w > 0, 1.0, -1.0)
            w = np.clip(w + 0.05 * (c_yx - theta @ c_xx), -1.0, 1.0)
            expected.append(w.copy())
        assert np.allclose(trace.w_samples, np.array(expected), atol=1e-14)
        assert np.allclose(trace.final_w, expected[-1], atol=1e-14)

    def test_clipping_keeps_weights_in_unit_box(self):
        c_yx = np.full((2, 8), 0.99)
        problem = RegressionProblem(c_yx=c_yx, c_xx=0.01 * np.eye(8))
        trace = simulate_regression(problem, 0.5, 2000, seed=3)
        assert np.abs(trace.w_samples).max() <= 1.0

    def test_from_data_moments(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((500, 6))
        y = rng.standard_normal((500, 2))
        problem = RegressionProblem.from_data(x, y)
        assert np.allclose(problem.c_yx, y.T @ x / 500, atol=1e-12)
        assert np.allclose(problem.c_xx, x.T @ x / 500, atol=1e-12)

    def test_validation_errors(self):
        with pytest.raises(ValueError, match="symmetric"):
            RegressionProblem(c_yx=np.zeros((1, 2)), c_xx=np.array([[1.0, 0.5], [0.0, 1.0]]))
        with pytest.raises(ValueError, match="semidefinite"):
            RegressionProblem(c_yx=np.zeros((1, 2)), c_xx=np.array([[1.0, 0.0], [0.0, -1.0]]))
        with pytest.raises(ValueError, match="mismatch"):
            RegressionProblem(c_yx=np.zeros((1, 3)), c_xx=np.eye(2))
        with pytest.raises(ValueError, match="square"):
            RegressionProblem(c_yx=np.zeros((1, 2)), c_xx=np.zeros((2, 3)))


class TestEstimatorVariance:
    def test_single_dimension_zero_target(self):
        var = dot_product_estimator_variance(1, 0.0, 0.01, 20000, seed=0)
        assert var == pytest.approx(1.0, abs=0.01)

    def test_variance_scales_inversely_with_dim(self):
        dims = [16, 64, 256]
        rng = np.random.default_rng(5)
        variances = []
        for dim in dims:
            alphas = rng.uniform(-0.9, 0.9, dim)
            variances.append(dot_product_estimator_variance(dim, alphas, 0.01, 50000, seed=dim))
        slope = np.polyfit(np.log(dims), np.log(variances), 1)[0]
        assert abs(slope + 1.0) < 0.2

    def test_near_unit_targets_give_small_variance(self):
        var = dot_product_estimator_variance(4, 0.999, 0.01, 50000, seed=6)
        assert var < 0.01

    def test_rejects_divergent_targets(self):
        with pytest.raises(ValueError, match="alpha"):
            dot_product_estimator_variance(4, 1.0, 0.01, 1000)
        with pytest.raises(ValueError, match="alpha"):
            dot_product_estimator_variance(4, [-0.5, 1.2, 0.0, 0.1], 0.01, 1000)

    def test_deterministic_given_seed(self):
        a = dot_product_estimator_variance(8, 0.3, 0.02, 5000, seed=7)
        b = dot_product_estimator_variance(8, 0.3, 0.02, 5000, seed=7)
        assert a == b

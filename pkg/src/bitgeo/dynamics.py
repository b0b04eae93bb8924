"""Learning dynamics of binarized linear regression.

Scalar form: w <- w + eps*(alpha - theta(w)).  For |alpha| <= 1 the iterate
enters and never leaves the band |w| <= 2*eps, the fraction of time spent at
w > 0 converges to (1 + alpha)/2, and the time average of theta(w) converges
to alpha.  For |alpha| > 1 the update never changes sign and w diverges.

Matrix form: w <- clip(w + eps*(C_yx - theta(w) C_xx), -1, 1).  With identity
input covariance each entry decouples into the scalar dynamics with alpha the
matching C_yx entry.
"""

from dataclasses import dataclass, field

import numpy as np

from .bitcore import binarize_signs
from .validation import as_real_matrix, as_real_array, check_positive_int


@dataclass(frozen=True)
class ScalarTrace:
    """Trajectory of one scalar simulation.

    theta_trajectory[t] = theta(w_trajectory[t]); burn_in indexes the first
    recorded step inside the |w| <= 2*eps band (or steps // 10 if never hit).
    """

    alpha: float
    epsilon: float
    w_trajectory: np.ndarray
    theta_trajectory: np.ndarray
    burn_in: int

    @property
    def p_hat(self):
        """Post-burn-in fraction of steps with w > 0."""
        return float(np.mean(self.w_trajectory[self.burn_in:] > 0))

    @property
    def time_avg_theta(self):
        """Post-burn-in time average of theta(w)."""
        return float(np.mean(self.theta_trajectory[self.burn_in:]))


def simulate_scalar(alpha, epsilon, steps, w0=None):
    """Iterate w <- w + eps*(alpha - theta(w)) and record the trajectory.

    w0 defaults to alpha * epsilon, near the attracting band.
    """
    alpha = float(alpha)
    epsilon = float(epsilon)
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    steps = check_positive_int(steps, "steps")
    w = alpha * epsilon if w0 is None else float(w0)
    ws = np.empty(steps)
    for t in range(steps):
        w += epsilon * (alpha - (1.0 if w > 0 else -1.0))
        ws[t] = w
    thetas = binarize_signs(ws)
    band = np.abs(ws) <= 2.0 * epsilon
    burn_in = int(np.argmax(band)) if band.any() else steps // 10
    return ScalarTrace(
        alpha=alpha,
        epsilon=epsilon,
        w_trajectory=ws,
        theta_trajectory=thetas,
        burn_in=burn_in,
    )


@dataclass(frozen=True)
class RegressionProblem:
    """Correlation structure of a linear regression target.

    c_yx is E[y x^T] (targets by inputs), c_xx is E[x x^T], symmetric positive
    semidefinite.
    """

    c_yx: np.ndarray
    c_xx: np.ndarray

    def __post_init__(self):
        c_yx = as_real_matrix(self.c_yx, "c_yx")
        c_xx = as_real_matrix(self.c_xx, "c_xx")
        if c_xx.shape[0] != c_xx.shape[1]:
            raise ValueError(f"c_xx must be square, got {c_xx.shape}")
        if c_yx.shape[1] != c_xx.shape[0]:
            raise ValueError(
                f"dimension mismatch: c_yx has {c_yx.shape[1]} input dims, c_xx has {c_xx.shape[0]}"
            )
        if np.abs(c_xx - c_xx.T).max() > 1e-10:
            raise ValueError("c_xx must be symmetric within 1e-10")
        eigs = np.linalg.eigvalsh(c_xx)
        if eigs.min() < -1e-10:
            raise ValueError(f"c_xx must be positive semidefinite, smallest eigenvalue {eigs.min():g}")
        c_yx.setflags(write=False)
        c_xx.setflags(write=False)
        object.__setattr__(self, "c_yx", c_yx)
        object.__setattr__(self, "c_xx", c_xx)

    @classmethod
    def from_data(cls, x, y):
        """Estimate both correlation matrices from samples in rows."""
        x = as_real_matrix(x, "x")
        y = as_real_matrix(y, "y")
        if x.shape[0] != y.shape[0]:
            raise ValueError("x and y must have the same number of rows")
        n = x.shape[0]
        return cls(c_yx=y.T @ x / n, c_xx=x.T @ x / n)

    @property
    def out_dim(self):
        return self.c_yx.shape[0]

    @property
    def in_dim(self):
        return self.c_yx.shape[1]


@dataclass(frozen=True)
class RegressionTrace:
    """Subsampled weight trajectory and post-burn-in summary."""

    epsilon: float
    steps: int
    burn_in: int
    sample_steps: np.ndarray
    w_samples: np.ndarray
    time_avg_theta: np.ndarray
    final_w: np.ndarray


def simulate_regression(problem, epsilon, steps, seed=0, w0=None, record_every=None):
    """Iterate w <- clip(w + eps*(C_yx - theta(w) C_xx), -1, 1).

    w0 defaults to a seeded uniform draw in [-eps, eps] (randomized phases).
    The weight trajectory is recorded every record_every steps (default keeps
    about 200 snapshots); theta is averaged over every step past burn-in.
    """
    epsilon = float(epsilon)
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    steps = check_positive_int(steps, "steps")
    m, d = problem.c_yx.shape
    if w0 is None:
        rng = np.random.Generator(np.random.Philox(key=seed))
        w = rng.uniform(-epsilon, epsilon, size=(m, d))
    else:
        w = as_real_matrix(w0, "w0").copy()
        if w.shape != (m, d):
            raise ValueError(f"w0 must have shape {(m, d)}, got {w.shape}")
    if record_every is None:
        record_every = max(1, steps // 200)
    record_every = check_positive_int(record_every, "record_every")
    burn_in = steps // 10
    theta_sum = np.zeros((m, d))
    sample_steps = []
    w_samples = []
    for t in range(steps):
        theta = binarize_signs(w)
        w = np.clip(w + epsilon * (problem.c_yx - theta @ problem.c_xx), -1.0, 1.0)
        if t >= burn_in:
            theta_sum += binarize_signs(w)
        if (t + 1) % record_every == 0 or t == steps - 1:
            sample_steps.append(t + 1)
            w_samples.append(w.copy())
    return RegressionTrace(
        epsilon=epsilon,
        steps=steps,
        burn_in=burn_in,
        sample_steps=np.array(sample_steps),
        w_samples=np.array(w_samples),
        time_avg_theta=theta_sum / max(1, steps - burn_in),
        final_w=w,
    )


def dot_product_estimator_variance(dim, alphas, epsilon, steps, seed=0):
    """Variance over time of the binary dot-product estimator error.

    Runs dim independent scalar simulations with phase-randomized starts and a
    fixed ±1 probe x, and returns the time variance of
    (theta(w)·x - alpha·x) / ||x||^2, which scales as 1/dim.
    """
    dim = check_positive_int(dim, "dim")
    epsilon = float(epsilon)
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    steps = check_positive_int(steps, "steps")
    alphas = np.broadcast_to(as_real_array(alphas, "alphas"), (dim,)).astype(np.float64)
    if np.any(np.abs(alphas) >= 1.0):
        raise ValueError("require |alpha| < 1 for every entry (|alpha| >= 1 diverges)")
    rng = np.random.Generator(np.random.Philox(key=seed))
    x = np.where(rng.random(dim) < 0.5, -1.0, 1.0)
    w = rng.uniform(-2.0 * epsilon, 2.0 * epsilon, size=dim)
    burn_in = steps // 10
    errors = np.empty(steps - burn_in)
    for t in range(steps):
        theta = np.where(w > 0, 1.0, -1.0)
        if t >= burn_in:
            errors[t - burn_in] = (theta - alphas) @ x / dim
        w += epsilon * (alphas - theta)
    return float(errors.var())

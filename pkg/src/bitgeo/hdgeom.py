"""Angle statistics of binarization in high dimension, closed form and Monte Carlo.

For v standard normal in R^n, let eta be the cosine of the angle between v and
theta(v).  Then

    E(eta)   = sqrt(n/pi) * Gamma(n/2) / Gamma((n+1)/2)
    Var(eta) = (1/n)(1 - 2/pi) + 2/pi - E(eta)^2

and E(eta) decreases monotonically to sqrt(2/pi) ~ 0.7978846 (angle ~ 37
degrees).  For two independent standard normal vectors the cosine rho has mean
0, variance 1/n, and density

    g(rho) = 1/sqrt(pi) * Gamma(n/2)/Gamma((n-1)/2) * (1 - rho^2)^((n-3)/2).

All Gamma ratios are evaluated as log-Gamma differences so nothing overflows
for n well past 10^7.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .validation import check_positive_int

LIMIT_COSINE = float(np.sqrt(2.0 / np.pi))


@dataclass(frozen=True)
class AngleStats:
    """Closed-form cosine statistics for one dimension n."""

    n: int
    mean_cosine: float
    variance_cosine: float
    mean_angle_deg: float


@dataclass(frozen=True)
class McAngleSample:
    """Monte Carlo cosine samples at one dimension n.

    rho_samples holds cosines between independent standard-normal pairs,
    eta_samples cosines between a standard-normal vector and its binarization.
    """

    n: int
    num_samples: int
    seed: int
    rho_samples: np.ndarray
    eta_samples: np.ndarray


def expected_cosine_binarized(n):
    """E(eta): mean cosine between a standard normal vector and theta of it."""
    n = check_positive_int(n, "n")
    log_value = 0.5 * (np.log(n) - np.log(np.pi)) + gammaln(n / 2.0) - gammaln((n + 1) / 2.0)
    return float(np.exp(log_value))


def variance_cosine_binarized(n):
    """Var(eta), the exact expression (1/n)(1 - 2/pi) + 2/pi - E(eta)^2."""
    n = check_positive_int(n, "n")
    mean = expected_cosine_binarized(n)
    return float((1.0 - 2.0 / np.pi) / n + 2.0 / np.pi - mean * mean)


def binarized_cosine_stats(n):
    """AngleStats for eta; mean_angle_deg is arccos of the mean cosine."""
    mean = expected_cosine_binarized(n)
    return AngleStats(
        n=int(n),
        mean_cosine=mean,
        variance_cosine=variance_cosine_binarized(n),
        mean_angle_deg=float(np.degrees(np.arccos(mean))),
    )


def random_pair_cosine_stats(n):
    """AngleStats for rho: mean 0, variance exactly 1/n, mean angle 90 degrees."""
    n = check_positive_int(n, "n")
    return AngleStats(n=n, mean_cosine=0.0, variance_cosine=1.0 / n, mean_angle_deg=90.0)


def pdf_cosine_random(rho, n):
    """Density of the cosine rho between two independent standard normal vectors.

    Evaluated in log domain.  Requires n >= 2 (for n = 1 the cosine is the
    two-point distribution on ±1 and has no density) and |rho| <= 1.
    """
    n = check_positive_int(n, "n")
    if n < 2:
        raise ValueError("density requires n >= 2")
    arr = np.asarray(rho, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("rho contains non-finite values")
    if np.any(np.abs(arr) > 1.0):
        raise ValueError("rho must lie in [-1, 1]")
    log_const = -0.5 * np.log(np.pi) + gammaln(n / 2.0) - gammaln((n - 1) / 2.0)
    exponent = (n - 3) / 2.0
    if exponent == 0.0:
        out = np.full(arr.shape, np.exp(log_const))
    else:
        with np.errstate(divide="ignore"):
            log_term = np.log1p(-np.square(arr))
        # exponent * (-inf) at |rho| = 1: +inf for n = 2 (true divergence), -inf above
        out = np.exp(log_const + exponent * log_term)
    return out if arr.ndim else float(out)


def mc_angle_samples(n, num_samples, seed=0):
    """Draw Monte Carlo cosine samples, deterministic given seed.

    rho uses independent standard-normal pairs; eta uses separately drawn
    vectors and their binarizations.  Sampling is chunked so memory stays flat
    for large n * num_samples.
    """
    n = check_positive_int(n, "n")
    num_samples = check_positive_int(num_samples, "num_samples")
    rng = np.random.Generator(np.random.Philox(key=seed))
    rho = np.empty(num_samples)
    eta = np.empty(num_samples)
    chunk = int(max(1, min(num_samples, 4_000_000 // max(1, 3 * n))))
    done = 0
    while done < num_samples:
        m = min(chunk, num_samples - done)
        x = rng.standard_normal((m, n))
        y = rng.standard_normal((m, n))
        rho[done:done + m] = np.einsum("ij,ij->i", x, y) / (
            np.linalg.norm(x, axis=1) * np.linalg.norm(y, axis=1)
        )
        z = rng.standard_normal((m, n))
        # z . theta(z) = sum |z_i| (zero entries contribute 0 either way)
        eta[done:done + m] = np.abs(z).sum(axis=1) / (np.linalg.norm(z, axis=1) * np.sqrt(n))
        done += m
    rho.setflags(write=False)
    eta.setflags(write=False)
    return McAngleSample(n=n, num_samples=num_samples, seed=int(seed), rho_samples=rho, eta_samples=eta)


def predicted_angle_std_deg(n):
    """Delta-method approximation to the std of arccos(eta), in degrees.

    std(arccos eta) ~ std(eta) / sin(arccos E(eta)); good to a few percent for
    n >= 16 and used for histogram overlays, not for acceptance math.
    """
    mean = expected_cosine_binarized(n)
    std = np.sqrt(variance_cosine_binarized(n))
    return float(np.degrees(std / np.sqrt(1.0 - mean * mean)))


def angle_table(dims, num_samples, seed=0):
    """Closed-form vs Monte Carlo summary rows, one dict per dimension.

    Columns: n, closed_form_mean, closed_form_var, mc_mean, mc_var,
    mc_angle_std_deg.
    """
    rows = []
    for n in dims:
        sample = mc_angle_samples(n, num_samples, seed=seed)
        angles = np.degrees(np.arccos(np.clip(sample.eta_samples, -1.0, 1.0)))
        rows.append(
            {
                "n": int(n),
                "closed_form_mean": expected_cosine_binarized(n),
                "closed_form_var": variance_cosine_binarized(n),
                "mc_mean": float(sample.eta_samples.mean()),
                "mc_var": float(sample.eta_samples.var(ddof=1)),
                "mc_angle_std_deg": float(angles.std(ddof=1)),
            }
        )
    return rows

"""Acceptance gate: one criterion per test, one printed verdict line each.

Run with `pytest tests/test_acceptance.py -v -s` to see every verdict.
Criteria 9-11 share the session-scoped trained network from conftest.
"""

import time

import numpy as np
import pytest

from bitgeo.bitcore import binarize, binarize_signs, dot_bb, random_rotation
from bitgeo.bnn import build_network, evaluate, forward
from bitgeo.data_io import SyntheticSpec, generate_synthetic
from bitgeo.diagnostics import (
    binarize_reconstruction_error,
    network_dpp_reports,
    permutation_control,
    weight_angle_histogram,
    weight_dpp,
)
from bitgeo.dynamics import dot_product_estimator_variance, simulate_scalar
from bitgeo.hdgeom import (
    expected_cosine_binarized,
    mc_angle_samples,
    variance_cosine_binarized,
)

GRID = (2, 4, 16, 64, 256, 1024)
MC_SAMPLES = 100_000
MC_SEED = 11


def _verdict(num, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {num:02d}: {detail}")
    assert ok, f"criterion {num:02d}: {detail}"


@pytest.fixture(scope="module")
def mc_grid():
    return {n: mc_angle_samples(n, MC_SAMPLES, seed=MC_SEED) for n in GRID}


def test_criterion_01_closed_form_limit():
    limit = np.sqrt(2.0 / np.pi)
    at_large = expected_cosine_binarized(10**6)
    at_one = expected_cosine_binarized(1)
    angle = float(np.degrees(np.arccos(at_large)))
    ok = abs(at_large - limit) <= 1e-4 and abs(at_one - 1.0) <= 1e-12 and abs(angle - 37.0) <= 0.1
    _verdict(
        1,
        ok,
        f"E(eta) at n=1e6 is {at_large:.6f} (limit {limit:.6f}), "
        f"E(eta) at n=1 is {at_one}, angle {angle:.3f} deg",
    )


def test_criterion_02_monte_carlo_matches_theory(mc_grid):
    worst = []
    ok = True
    for n in GRID:
        sample = mc_grid[n]
        mean_sigma = np.sqrt(variance_cosine_binarized(n) / MC_SAMPLES)
        eta_dev = abs(sample.eta_samples.mean() - expected_cosine_binarized(n))
        # rho^2 is Beta(1/2, (n-1)/2): E rho^4 = 3 / (n (n+2)), so the
        # sample-variance statistic has this exact standard error
        var_sigma = np.sqrt((3.0 / (n * (n + 2)) - 1.0 / n**2) / MC_SAMPLES)
        rho_dev = abs(sample.rho_samples.var() - 1.0 / n)
        ok = ok and eta_dev <= 3 * mean_sigma and rho_dev <= 3 * var_sigma
        worst.append(max(eta_dev / mean_sigma, rho_dev / var_sigma))
    _verdict(
        2,
        ok,
        f"max |MC - theory| over n in {GRID} is {max(worst):.2f} sigma (limit 3)",
    )


def test_criterion_03_variance_asymptote():
    target = 1.0 - 1.0 / np.pi
    measured = 4096 * variance_cosine_binarized(4096)
    ok = abs(measured - target) <= 0.01 * target
    _verdict(
        3,
        ok,
        f"n*Var(eta) at n=4096 is {measured:.5f}, target {target:.5f} +/- 1%",
    )


def test_criterion_04_angle_std_scaling(mc_grid):
    stds = [
        np.degrees(np.arccos(np.clip(mc_grid[n].eta_samples, -1, 1))).std()
        for n in GRID
    ]
    slope = np.polyfit(np.log(GRID), np.log(stds), 1)[0]
    ok = abs(slope - (-0.5)) <= 0.05
    _verdict(4, ok, f"log-log slope of MC angle std vs n is {slope:.4f} (want -0.5 +/- 0.05)")


def test_criterion_05_scalar_dynamics_fixed_point():
    epsilon = 1e-3
    ok = True
    details = []
    for alpha in (-0.9, -0.5, 0.0, 0.5, 0.9):
        trace = simulate_scalar(alpha, epsilon, 100_000)
        tail = trace.w_trajectory[trace.burn_in :]
        theta_tail = trace.theta_trajectory[trace.burn_in :]
        flips = int(np.count_nonzero(np.diff(theta_tail)))
        in_band = bool(np.all(np.abs(tail) <= 2 * epsilon))
        dev = abs(trace.time_avg_theta - alpha)
        ok = ok and dev <= 0.04 and in_band and flips >= 100
        details.append(f"{alpha:+.1f}:dev={dev:.3f},band={in_band},flips={flips}")
    diverged = simulate_scalar(1.5, epsilon, int(100 / epsilon))
    escaped = bool(np.max(diverged.w_trajectory) > 10.0)
    ok = ok and escaped
    _verdict(5, ok, "; ".join(details) + f"; alpha=1.5 escapes past 10: {escaped}")


def test_criterion_06_estimator_variance_scaling():
    dims = (16, 64, 256)
    rng = np.random.Generator(np.random.Philox(key=5))
    variances = [
        dot_product_estimator_variance(
            dim, rng.uniform(-0.9, 0.9, size=dim), epsilon=1e-3, steps=100_000, seed=dim
        )
        for dim in dims
    ]
    slope = np.polyfit(np.log(dims), np.log(variances), 1)[0]
    ok = abs(slope - (-1.0)) <= 0.2
    _verdict(6, ok, f"estimator variance slope vs dim is {slope:.4f} (want -1 +/- 0.2)")


def test_criterion_07_kernel_oracle_equivalence():
    rng = np.random.Generator(np.random.Philox(key=7))
    cases = 0
    exact = True
    for dim in (7, 64, 333, 1024):
        for _ in range(150):
            a = binarize_signs(rng.standard_normal(dim))
            b = binarize_signs(rng.standard_normal(dim))
            packed = dot_bb(binarize(a), binarize(b))
            exact = exact and packed == int(a @ b)
            cases += 1
    net = build_network("32c-64b-64b-10s", seed=3)
    x = rng.standard_normal((500, 32))
    float_probs = forward(net, x, mode="eval", kernel="float").probs
    packed_probs = forward(net, x, mode="eval", kernel="packed").probs
    rel = np.abs(packed_probs - float_probs) / np.maximum(np.abs(float_probs), 1e-300)
    forward_ok = bool(np.max(rel) <= 1e-9)
    cases += x.shape[0]
    ok = exact and forward_ok and cases >= 1000
    _verdict(
        7,
        ok,
        f"{cases} cases: dot_bb exact={exact}, "
        f"packed forward max rel dev {np.max(rel):.2e} (limit 1e-9)",
    )


def test_criterion_08_permutation_control_formula():
    rng = np.random.Generator(np.random.Philox(key=8))
    w_c = rng.standard_normal(512)
    w_b = binarize_signs(w_c)
    cosine = float(w_c @ w_b / (np.linalg.norm(w_c) * np.sqrt(512)))
    activations = rng.standard_normal((10_000, 512))
    permuted = permutation_control(activations, seed=80)
    report = weight_dpp(permuted, w_c[None, :])
    ok = abs(report.pearson_r - cosine) <= 0.05
    _verdict(
        8,
        ok,
        f"permuted DPP r {report.pearson_r:.4f} vs cosine {cosine:.4f} (tol 0.05)",
    )


def test_criterion_09_training_reaches_accuracy(trained_net):
    net = trained_net["net"]
    test_ds = trained_net["test"]
    config = trained_net["config"]
    acc_binary = evaluate(net, test_ds)
    acc_continuous = evaluate(
        net,
        test_ds,
        weight_mode="continuous",
        recalibration_images=trained_net["train"].images,
    )
    gap = 100 * abs(acc_binary - acc_continuous)
    minutes = trained_net["train_seconds"] / 60
    ok = (
        config.arch == "784c-1024b-1024b-10s"
        and config.epochs == 20
        and acc_binary >= 0.95
        and gap < 2.0
        and minutes <= 30
    )
    _verdict(
        9,
        ok,
        f"test acc {100 * acc_binary:.2f}% (need >= 95), continuous-swap gap "
        f"{gap:.2f} pts (need < 2), {minutes:.1f} min (limit 30)",
    )


def test_criterion_10_trained_dpp_beats_permuted(trained_net):
    net = trained_net["net"]
    images = trained_net["train"].images[:2000]
    reports, _ = network_dpp_reports(net, images)
    permuted, _ = network_dpp_reports(net, images, permute_seed=123)
    ok = True
    parts = []
    # layer_id counts every dense layer, so id >= 1 selects the hidden stack
    for rep, perm in zip(reports, permuted):
        if rep.layer_id < 1:
            continue
        gap = rep.pearson_r - perm.pearson_r
        ok = ok and gap >= 0.1 and rep.sign_flip_fraction < 0.10
        parts.append(
            f"layer {rep.layer_id}: r {rep.pearson_r:.3f} - permuted "
            f"{perm.pearson_r:.3f} = {gap:.3f}, flips {100 * rep.sign_flip_fraction:.1f}%"
        )
    _verdict(10, ok, "; ".join(parts) + " (need gap >= 0.1, flips < 10%)")


def test_criterion_11_trained_weight_angles(trained_net):
    net = trained_net["net"]
    ok = True
    parts = []
    for hist in weight_angle_histogram(net):
        if hist.layer_id < 1:
            continue
        mean_angle = float(hist.angles_deg.mean())
        dev = abs(mean_angle - hist.theory_mean_deg)
        ok = ok and dev <= 5.0
        parts.append(
            f"layer {hist.layer_id} (dim {hist.dim}): mean {mean_angle:.2f} deg "
            f"vs theory {hist.theory_mean_deg:.2f}"
        )
    _verdict(11, ok, "; ".join(parts) + " (tol 5 deg)")


def test_criterion_12_rotation_helps_low_rank_data():
    wins = 0
    for trial in range(100):
        spec = SyntheticSpec(
            kind="low_rank",
            dim=27,
            num_samples=200,
            seed=1000 + trial,
            rank=3,
            axis_aligned=True,
        )
        x = generate_synthetic(spec).images
        rotation = random_rotation(27, seed=trial)
        plain = binarize_reconstruction_error(x).mean()
        rotated = binarize_reconstruction_error(x, rotation).mean()
        wins += int(rotated < plain)
    ok = wins >= 95
    _verdict(12, ok, f"rotated GBT beat plain binarization in {wins}/100 trials (need >= 95)")

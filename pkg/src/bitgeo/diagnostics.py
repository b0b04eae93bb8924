"""Measurement suite for binary networks: dot-product preservation,
weight-angle statistics, component histograms, and PCA axis alignment.

Reports are plain frozen dataclasses. Each one serializes to JSON
(scalars plus histogram arrays) via ``save_report_json`` and, for raw
dot-product pairs, to CSV via ``save_dpp_pairs_csv``. File names encode
the report type and layer id.
"""

import csv
import dataclasses
import json
import os

import numpy as np

from .bitcore import binarize_signs
from .hdgeom import binarized_cosine_stats, predicted_angle_std_deg
from .validation import as_real_matrix, check_positive_int

HISTOGRAM_BINS = 100
EXTENT_PERCENTILE = 99.9


@dataclasses.dataclass(frozen=True)
class DppReport:
    """Dot-product preservation for one layer.

    x holds the binary-side dot products, y the continuous counterparts,
    one entry per (sample, weight row) pair.
    """

    kind: str
    layer_id: int
    x: np.ndarray
    y: np.ndarray
    pearson_r: float
    sign_flip_fraction: float
    hist_bins: int
    hist_extent: float
    hist_counts: np.ndarray

    @property
    def num_pairs(self):
        return self.x.size


@dataclasses.dataclass(frozen=True)
class AngleHistogram:
    """Angle between each w_c row and its binarization, with theory overlay."""

    layer_id: int
    dim: int
    angles_deg: np.ndarray
    theory_mean_deg: float
    theory_std_deg: float


@dataclasses.dataclass(frozen=True)
class ComponentHistogram:
    """Distribution of w_c entries for one layer."""

    layer_id: int
    dim: int
    counts: np.ndarray
    bin_edges: np.ndarray
    frac_negative: float
    frac_positive: float
    center_mass_ratio: float


@dataclasses.dataclass(frozen=True)
class PcaSpectrum:
    """Covariance eigenstructure of a data batch.

    axis_alignment holds the participation ratio (sum c^2)^2 / sum c^4 of
    each principal component's coordinates in the canonical basis: d for a
    perfectly spread direction, 1 for a coordinate axis.
    """

    eigenvalues: np.ndarray
    explained_variance_ratio: np.ndarray
    axis_alignment: np.ndarray


def pearson_r(x, y):
    """Correlation coefficient, mean-shifted before accumulation."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise ValueError(f"dimension mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("correlation needs at least 2 pairs")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc @ xc) * (yc @ yc))
    if denom == 0.0:
        raise ValueError("correlation undefined for zero-variance input")
    return float((xc @ yc) / denom)


def _build_report(kind, layer_id, x, y, bins=HISTOGRAM_BINS):
    x = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    y = np.ascontiguousarray(y, dtype=np.float64).reshape(-1)
    flips = float(np.mean(x * y < 0.0))
    extent = float(np.percentile(np.abs(np.concatenate([x, y])), EXTENT_PERCENTILE))
    if extent == 0.0:
        extent = 1.0
    counts, _, _ = np.histogram2d(x, y, bins=bins, range=[[-extent, extent], [-extent, extent]])
    x.flags.writeable = False
    y.flags.writeable = False
    counts.flags.writeable = False
    return DppReport(
        kind=kind,
        layer_id=layer_id,
        x=x,
        y=y,
        pearson_r=pearson_r(x, y),
        sign_flip_fraction=flips,
        hist_bins=bins,
        hist_extent=extent,
        hist_counts=counts,
    )


def weight_dpp(activations, w_c, w_b=None, layer_id=0):
    """Compare a . theta(w_c) against a . w_c over every (sample, row) pair."""
    a = as_real_matrix(activations, "activations")
    w_c = as_real_matrix(w_c, "w_c")
    w_b = binarize_signs(w_c) if w_b is None else as_real_matrix(w_b, "w_b")
    if a.shape[0] == 0:
        raise ValueError("empty batch")
    if a.shape[1] != w_c.shape[1]:
        raise ValueError(f"dimension mismatch: activations dim {a.shape[1]} vs weight dim {w_c.shape[1]}")
    if w_b.shape != w_c.shape:
        raise ValueError(f"dimension mismatch: w_b {w_b.shape} vs w_c {w_c.shape}")
    return _build_report("weight_dpp", layer_id, a @ w_b.T, a @ w_c.T)


def activation_dpp(w_b, a_c, layer_id=0):
    """Compare theta(a_c) . w_b against a_c . w_b over every pair."""
    w_b = as_real_matrix(w_b, "w_b")
    a_c = as_real_matrix(a_c, "a_c")
    if a_c.shape[0] < 2:
        raise ValueError("activation dpp needs at least 2 samples")
    if a_c.shape[1] != w_b.shape[1]:
        raise ValueError(f"dimension mismatch: activations dim {a_c.shape[1]} vs weight dim {w_b.shape[1]}")
    a_b = binarize_signs(a_c)
    return _build_report("activation_dpp", layer_id, a_b @ w_b.T, a_c @ w_b.T)


def permutation_control(activations, seed=0):
    """Shuffle the feature indices of each sample independently.

    Marginal statistics survive; joint structure between features does not,
    which turns dot-product correlation into the plain cosine of the
    weight vectors.
    """
    a = as_real_matrix(activations, "activations")
    rng = np.random.Generator(np.random.Philox(key=seed))
    return rng.permuted(a, axis=1)


def weight_angle_histogram(net):
    """Angle between each w_c row and theta(w_c) for every binary dense layer."""
    reports = []
    dense_ordinals = {id(layer): k for k, layer in enumerate(net.dense_layers())}
    for _, _, layer in net.binary_dense_layers():
        w = layer.w_c
        norms = np.linalg.norm(w, axis=1)
        row_sums = np.abs(w).sum(axis=1)
        cos = np.ones(w.shape[0])
        nonzero = norms > 0
        cos[nonzero] = row_sums[nonzero] / (norms[nonzero] * np.sqrt(w.shape[1]))
        angles = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
        angles.flags.writeable = False
        stats = binarized_cosine_stats(w.shape[1])
        reports.append(
            AngleHistogram(
                layer_id=dense_ordinals[id(layer)],
                dim=w.shape[1],
                angles_deg=angles,
                theory_mean_deg=stats.mean_angle_deg,
                theory_std_deg=predicted_angle_std_deg(w.shape[1]),
            )
        )
    return reports


def weight_component_histogram(net, bins=51):
    """Histogram of w_c entries per binary dense layer.

    Bins span the symmetric range (-max|w|, max|w|). center_mass_ratio is
    the fraction of entries within 10% of the range around 0 divided by
    the uniform baseline 0.1, so values above 1 mean excess mass near the
    binarization threshold.
    """
    check_positive_int(bins, "bins")
    reports = []
    dense_ordinals = {id(layer): k for k, layer in enumerate(net.dense_layers())}
    for _, _, layer in net.binary_dense_layers():
        w = layer.w_c.reshape(-1)
        half = float(np.abs(w).max())
        if half == 0.0:
            half = 1.0
        counts, edges = np.histogram(w, bins=bins, range=(-half, half))
        counts = counts.astype(np.int64)
        counts.flags.writeable = False
        edges.flags.writeable = False
        center = float(np.mean(np.abs(w) <= 0.1 * half))
        reports.append(
            ComponentHistogram(
                layer_id=dense_ordinals[id(layer)],
                dim=layer.in_dim,
                counts=counts,
                bin_edges=edges,
                frac_negative=float(np.mean(w < 0)),
                frac_positive=float(np.mean(w > 0)),
                center_mass_ratio=center / 0.1,
            )
        )
    return reports


def pca_spectrum(data):
    """Eigenstructure of the sample covariance of a mean-removed batch."""
    x = as_real_matrix(data, "data")
    if x.shape[0] < 2:
        raise ValueError("pca needs at least 2 samples")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.maximum(eigenvalues[order], 0.0)
    eigenvectors = eigenvectors[:, order]
    total = eigenvalues.sum()
    if total == 0.0:
        ratio = np.ones_like(eigenvalues)
    else:
        ratio = np.cumsum(eigenvalues) / total
    # participation ratio of unit vectors reduces to 1 / sum(v^4)
    quartic = (eigenvectors**4).sum(axis=0)
    alignment = 1.0 / quartic
    for arr in (eigenvalues, ratio, alignment):
        arr.flags.writeable = False
    return PcaSpectrum(eigenvalues=eigenvalues, explained_variance_ratio=ratio, axis_alignment=alignment)


def binarize_reconstruction_error(x, rotation=None):
    """Per-sample error of the best scalar reconstruction from gbt(x).

    Returns ||x - s * b|| with b = gbt(x, rotation) and s chosen optimally
    per sample (s = x.b / d).
    """
    from .bitcore import gbt

    x = as_real_matrix(np.atleast_2d(x), "x")
    b = np.stack([gbt(row, rotation) for row in x])
    s = (x * b).sum(axis=1) / x.shape[1]
    return np.linalg.norm(x - s[:, None] * b, axis=1)


def network_dpp_reports(net, images, batch_size=512, permute_seed=None):
    """Weight and activation DPP reports for every binary dense layer.

    Streams eval-mode batches through the network. The activations feeding
    each binary dense layer drive its weight report; the post-batch-norm
    values right before the binarize activation (raw input for the first
    dense layer) drive its activation report. With permute_seed set, every
    activation batch is feature-permuted first (the permutation control).

    Returns (weight_reports, activation_reports), each a list ordered by
    dense layer.
    """
    from .bnn import forward

    images = as_real_matrix(images, "images")
    check_positive_int(batch_size, "batch_size")
    if images.shape[0] < 2:
        raise ValueError("need at least 2 samples")

    binary_layers = net.binary_dense_layers()
    dense_ordinals = {id(layer): k for k, layer in enumerate(net.dense_layers())}
    weight_dots = {idx: ([], []) for idx, _, _ in binary_layers}
    act_dots = {idx: ([], []) for idx, _, _ in binary_layers}

    seed_counter = 0
    for start in range(0, images.shape[0], batch_size):
        batch = images[start : start + batch_size]
        cache = forward(net, batch, mode="eval")
        for idx, _, layer in binary_layers:
            a_in = cache.layer_caches[idx]["x"]
            if idx > 0 and net.layers[idx - 1].kind == "binarize_activation":
                a_c = cache.layer_caches[idx - 1]["pre"]
            else:
                a_c = batch
            if permute_seed is not None:
                a_in = permutation_control(a_in, seed=permute_seed + seed_counter)
                a_c = permutation_control(a_c, seed=permute_seed + seed_counter + 1)
                seed_counter += 2
            w_b = binarize_signs(layer.w_c)
            weight_dots[idx][0].append(a_in @ w_b.T)
            weight_dots[idx][1].append(a_in @ layer.w_c.T)
            act_dots[idx][0].append(binarize_signs(a_c) @ w_b.T)
            act_dots[idx][1].append(a_c @ w_b.T)

    weight_reports = []
    act_reports = []
    for idx, _, layer in binary_layers:
        layer_id = dense_ordinals[id(layer)]
        weight_reports.append(
            _build_report("weight_dpp", layer_id, np.concatenate(weight_dots[idx][0]), np.concatenate(weight_dots[idx][1]))
        )
        act_reports.append(
            _build_report("activation_dpp", layer_id, np.concatenate(act_dots[idx][0]), np.concatenate(act_dots[idx][1]))
        )
    return weight_reports, act_reports


def _report_basename(report):
    if isinstance(report, DppReport):
        return f"{report.kind}_layer{report.layer_id}"
    if isinstance(report, AngleHistogram):
        return f"weight_angles_layer{report.layer_id}"
    if isinstance(report, ComponentHistogram):
        return f"weight_components_layer{report.layer_id}"
    if isinstance(report, PcaSpectrum):
        return "pca_spectrum"
    raise TypeError(f"unknown report type: {type(report).__name__}")


def report_json_dict(report):
    """Report as a JSON-ready dict; large pair arrays are summarized out."""
    if isinstance(report, DppReport):
        return {
            "kind": report.kind,
            "layer_id": report.layer_id,
            "num_pairs": int(report.num_pairs),
            "pearson_r": report.pearson_r,
            "sign_flip_fraction": report.sign_flip_fraction,
            "histogram": {
                "bins": report.hist_bins,
                "extent": report.hist_extent,
                "counts": report.hist_counts.astype(int).tolist(),
            },
        }
    if isinstance(report, AngleHistogram):
        return {
            "kind": "weight_angles",
            "layer_id": report.layer_id,
            "dim": report.dim,
            "angles_deg": report.angles_deg.tolist(),
            "theory_mean_deg": report.theory_mean_deg,
            "theory_std_deg": report.theory_std_deg,
        }
    if isinstance(report, ComponentHistogram):
        return {
            "kind": "weight_components",
            "layer_id": report.layer_id,
            "dim": report.dim,
            "counts": report.counts.tolist(),
            "bin_edges": report.bin_edges.tolist(),
            "frac_negative": report.frac_negative,
            "frac_positive": report.frac_positive,
            "center_mass_ratio": report.center_mass_ratio,
        }
    if isinstance(report, PcaSpectrum):
        return {
            "kind": "pca_spectrum",
            "eigenvalues": report.eigenvalues.tolist(),
            "explained_variance_ratio": report.explained_variance_ratio.tolist(),
            "axis_alignment": report.axis_alignment.tolist(),
        }
    raise TypeError(f"unknown report type: {type(report).__name__}")


def save_report_json(report, out_dir):
    """Write one report to <out_dir>/<type>_layer<id>.json and return the path."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, _report_basename(report) + ".json")
    with open(path, "w") as fh:
        json.dump(report_json_dict(report), fh, indent=2)
        fh.write("\n")
    return path


def save_dpp_pairs_csv(report, out_dir, max_rows=None, seed=0):
    """Write the raw (binary_dot, continuous_dot) pairs of a DppReport to CSV.

    With max_rows below the pair count, a uniform subsample is written and
    the seed is recorded on a leading comment line.
    """
    if not isinstance(report, DppReport):
        raise TypeError("pairs CSV only applies to DppReport")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, _report_basename(report) + "_pairs.csv")
    x, y = report.x, report.y
    subsampled = max_rows is not None and max_rows < x.size
    if subsampled:
        check_positive_int(max_rows, "max_rows")
        rng = np.random.Generator(np.random.Philox(key=seed))
        keep = rng.choice(x.size, size=max_rows, replace=False)
        keep.sort()
        x, y = x[keep], y[keep]
    with open(path, "w", newline="") as fh:
        if subsampled:
            fh.write(f"# subsample of {report.num_pairs} rows, seed={seed}\n")
        writer = csv.writer(fh)
        writer.writerow(["binary_dot", "continuous_dot"])
        writer.writerows(zip(x, y))
    return path

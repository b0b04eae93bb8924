"""Command line entry point.

Every subcommand writes its artifacts (plain CSV/JSON, plot-ready) plus a
run_manifest.json that echoes the full configuration, the seed, the package
version, the output paths, and the wall-clock duration. The manifest is
written atomically at the end of the run.

Exit codes: 0 success, 1 check failure, 2 usage or config error.
"""

import contextlib
import csv
import importlib.metadata
import json
import os
import sys
import time

import click
import numpy as np

from .bitcore import BitVector, binarize_signs, dot_bb
from .bnn import (
    ArchSpecError,
    TrainConfig,
    build_network,
    load_checkpoint,
    save_checkpoint,
    train as train_network,
)
from .data_io import Dataset, IdxFormatError, SyntheticSpec, generate_synthetic, load_idx
from .diagnostics import (
    network_dpp_reports,
    pca_spectrum,
    save_dpp_pairs_csv,
    save_report_json,
    weight_angle_histogram,
    weight_component_histogram,
)
from .dynamics import RegressionProblem, simulate_regression, simulate_scalar
from .hdgeom import angle_table

ANGLE_COLUMNS = ["n", "closed_form_mean", "closed_form_var", "mc_mean", "mc_var", "mc_angle_std_deg"]


def _version_string():
    try:
        return "v" + importlib.metadata.version("bitgeo")
    except importlib.metadata.PackageNotFoundError:
        return "v0.0.0"


def _write_manifest(out_dir, subcommand, config, seed, outputs, started_ns):
    """Atomically write run_manifest.json; every named output must exist."""
    outputs = [os.path.abspath(p) for p in outputs]
    for path in outputs:
        if not os.path.exists(path):
            raise RuntimeError(f"manifest names a missing output: {path}")
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "version": _version_string(),
        "outputs": outputs,
        "duration_seconds": (time.perf_counter_ns() - started_ns) / 1e9,
    }
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "run_manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def _thread_cap(threads):
    if threads is None:
        env = os.environ.get("BITGEO_THREADS", "").strip()
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise click.UsageError(f"BITGEO_THREADS must be an integer, got {env!r}")
    if threads is None:
        return contextlib.nullcontext()
    if threads < 1:
        raise click.UsageError(f"--threads must be >= 1, got {threads}")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=threads)


def _parse_dims(text):
    try:
        dims = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise click.UsageError(f"--dims must be a comma-separated integer list, got {text!r}")
    if not dims or any(d < 1 for d in dims):
        raise click.UsageError(f"--dims entries must be positive, got {text!r}")
    return dims


def _parse_synthetic(text):
    # synthetic:<kind>:key=value,... with keys dim, n, seed, rank, axis_aligned
    parts = text.split(":")
    if len(parts) < 2 or not parts[1]:
        raise click.UsageError(f"bad synthetic spec {text!r}")
    kind = parts[1]
    fields = {}
    if len(parts) > 2 and parts[2]:
        for pair in parts[2].split(","):
            if "=" not in pair:
                raise click.UsageError(f"bad synthetic field {pair!r} in {text!r}")
            key, value = pair.split("=", 1)
            fields[key.strip()] = value.strip()
    try:
        spec = SyntheticSpec(
            kind=kind,
            dim=int(fields.get("dim", 16)),
            num_samples=int(fields.get("n", 1000)),
            seed=int(fields.get("seed", 0)),
            rank=int(fields.get("rank", 0)),
            axis_aligned=bool(int(fields.get("axis_aligned", 0))),
        )
    except ValueError as exc:
        raise click.UsageError(str(exc))
    return generate_synthetic(spec)


def _find_idx_pair(dirpath, stem_images, stem_labels):
    for suffix in ("", ".gz"):
        images = os.path.join(dirpath, stem_images + suffix)
        labels = os.path.join(dirpath, stem_labels + suffix)
        if os.path.exists(images) and os.path.exists(labels):
            return images, labels
    return None


def _load_data(data, want="train"):
    """Dataset from a synthetic spec string or an IDX directory."""
    if data.startswith("synthetic:"):
        return _parse_synthetic(data)
    if not os.path.isdir(data):
        raise click.UsageError(f"--data must be a directory or synthetic:<kind>:..., got {data!r}")
    stems = {
        "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
        "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    }[want]
    pair = _find_idx_pair(data, *stems)
    if pair is None:
        raise click.UsageError(f"no {want} IDX files under {data!r}")
    try:
        return load_idx(pair[0], pair[1], split=want)
    except (IdxFormatError, OSError) as exc:
        raise click.UsageError(f"failed to load {want} data: {exc}")


def _maybe_test_data(data):
    if data.startswith("synthetic:") or not os.path.isdir(data):
        return None
    pair = _find_idx_pair(data, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
    if pair is None:
        return None
    return load_idx(pair[0], pair[1], split="test")


threads_option = click.option(
    "--threads", type=int, default=None, help="Cap BLAS worker threads (env fallback: BITGEO_THREADS)."
)


@click.group()
def main():
    """Binary-vector geometry toolkit."""


@main.command()
@click.option("--dims", required=True, help="Comma-separated dimensions.")
@click.option("--samples", default=100_000, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--check", is_flag=True, help="Exit 1 unless MC means sit within 3 sigma of theory.")
@threads_option
def angles(dims, samples, seed, out, check, threads):
    """Closed-form and Monte Carlo angle statistics per dimension."""
    started = time.perf_counter_ns()
    dim_list = _parse_dims(dims)
    with _thread_cap(threads):
        rows = angle_table(dim_list, num_samples=samples, seed=seed)

    os.makedirs(out, exist_ok=True)
    csv_path = os.path.join(out, "angles.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=ANGLE_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)

    failures = []
    if check:
        for row in rows:
            sigma = np.sqrt(row["closed_form_var"] / samples)
            if abs(row["mc_mean"] - row["closed_form_mean"]) > 3 * sigma:
                failures.append(row["n"])

    config = {"dims": dim_list, "samples": samples, "seed": seed, "out": out, "check": check}
    _write_manifest(out, "angles", config, seed, [csv_path], started)
    if failures:
        click.echo(f"check failed: MC mean outside 3 sigma at n = {failures}", err=True)
        sys.exit(1)
    click.echo(f"wrote {csv_path}")


@main.command()
@click.option("--alpha", type=float, default=None, help="Scalar target in [-1, 1].")
@click.option("--epsilon", required=True, type=float)
@click.option("--steps", required=True, type=click.IntRange(min=1))
@click.option("--matrix-spec", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@threads_option
def dynamics(alpha, epsilon, steps, matrix_spec, seed, out, threads):
    """Simulate the sign-feedback weight dynamics (scalar or matrix)."""
    started = time.perf_counter_ns()
    if (alpha is None) == (matrix_spec is None):
        raise click.UsageError("pass exactly one of --alpha or --matrix-spec")
    os.makedirs(out, exist_ok=True)
    csv_path = os.path.join(out, "trajectory.csv")
    json_path = os.path.join(out, "summary.json")

    if alpha is not None:
        try:
            with _thread_cap(threads):
                trace = simulate_scalar(alpha, epsilon, steps)
        except ValueError as exc:
            raise click.UsageError(str(exc))
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "w", "theta"])
            writer.writerows(zip(range(steps), trace.w_trajectory, trace.theta_trajectory))
        summary = {
            "mode": "scalar",
            "alpha": alpha,
            "epsilon": epsilon,
            "steps": steps,
            "burn_in": trace.burn_in,
            "p_hat": trace.p_hat,
            "expected_p": (1.0 + alpha) / 2.0,
            "time_avg_theta": trace.time_avg_theta,
            "expected_theta": alpha,
            "diverged": bool(np.abs(trace.w_trajectory).max() > 2.0),
        }
        config = {"alpha": alpha, "epsilon": epsilon, "steps": steps, "out": out}
    else:
        try:
            with open(matrix_spec) as fh:
                payload = json.load(fh)
            problem = RegressionProblem(
                c_yx=np.asarray(payload["c_yx"], dtype=np.float64),
                c_xx=np.asarray(payload["c_xx"], dtype=np.float64),
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise click.UsageError(f"bad matrix spec: {exc}")
        with _thread_cap(threads):
            trace = simulate_regression(problem, epsilon, steps, seed=seed)
        m, d = problem.out_dim, problem.in_dim
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step"] + [f"w_{i}_{j}" for i in range(m) for j in range(d)])
            for step, w in zip(trace.sample_steps, trace.w_samples):
                writer.writerow([step] + list(w.reshape(-1)))
        summary = {
            "mode": "matrix",
            "epsilon": epsilon,
            "steps": steps,
            "seed": seed,
            "burn_in": trace.burn_in,
            "time_avg_theta": trace.time_avg_theta.tolist(),
            "final_w": trace.final_w.tolist(),
        }
        config = {"matrix_spec": matrix_spec, "epsilon": epsilon, "steps": steps, "out": out}

    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    _write_manifest(out, "dynamics", config, seed, [csv_path, json_path], started)
    click.echo(f"wrote {csv_path} and {json_path}")


@main.command(name="train")
@click.option("--data", required=True, help="IDX directory or synthetic:<kind>:dim=...,n=...")
@click.option("--arch", required=True, help='Layer spec like "784c-1024b-1024b-10s".')
@click.option("--first-layer", type=click.Choice(["binary", "continuous"]), default=None)
@click.option("--epochs", default=20, show_default=True, type=click.IntRange(min=1))
@click.option("--batch-size", default=100, show_default=True, type=click.IntRange(min=1))
@click.option("--learning-rate", default=0.05, show_default=True, type=float)
@click.option("--lr-decay", default=0.97, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Checkpoint path.")
@threads_option
def train_cmd(data, arch, first_layer, epochs, batch_size, learning_rate, lr_decay, seed, out, threads):
    """Train a network and write a checkpoint plus an epoch log."""
    started = time.perf_counter_ns()
    dataset = _load_data(data, want="train")
    eval_dataset = _maybe_test_data(data)
    try:
        config = TrainConfig(
            arch=arch,
            epochs=epochs,
            batch_size=batch_size,
            learning_rate=learning_rate,
            lr_decay=lr_decay,
            seed=seed,
            first_layer_mode=first_layer,
        )
        net = build_network(arch, seed=seed, first_layer_mode=first_layer)
    except (ArchSpecError, ValueError) as exc:
        raise click.UsageError(str(exc))
    if net.in_dim != dataset.dim:
        raise click.UsageError(f"arch expects {net.in_dim} inputs but data has {dataset.dim}")

    out = os.path.abspath(out)
    out_dir = os.path.dirname(out) or "."
    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.splitext(out)[0] + "_epochs.csv"
    with _thread_cap(threads):
        history = train_network(net, dataset, config, eval_dataset=eval_dataset, log_path=log_path)
    save_checkpoint(net, out)

    flags = {
        "data": data,
        "arch": arch,
        "first_layer": first_layer,
        "epochs": epochs,
        "batch_size": batch_size,
        "learning_rate": learning_rate,
        "lr_decay": lr_decay,
        "seed": seed,
        "out": out,
    }
    _write_manifest(out_dir, "train", flags, seed, [out, log_path], started)
    final = history[-1]
    click.echo(f"final train_acc {final['train_acc']:.4f}, checkpoint {out}")


@main.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", required=True)
@click.option(
    "--report",
    required=True,
    type=click.Choice(["dpp", "dpp-act", "angles", "components", "pca", "perm"]),
)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@threads_option
def diagnose(ckpt, data, report, seed, out, threads):
    """Generate measurement reports from a checkpoint and a dataset."""
    started = time.perf_counter_ns()
    try:
        net = load_checkpoint(ckpt)
    except ValueError as exc:
        raise click.UsageError(f"bad checkpoint: {exc}")
    dataset = _load_data(data, want="train")
    if net.in_dim != dataset.dim:
        raise click.UsageError(f"checkpoint expects {net.in_dim} inputs but data has {dataset.dim}")

    outputs = []
    with _thread_cap(threads):
        if report in ("dpp", "dpp-act"):
            weight_reports, act_reports = network_dpp_reports(net, dataset.images)
            chosen = weight_reports if report == "dpp" else act_reports
            for rep in chosen:
                outputs.append(save_report_json(rep, out))
                outputs.append(save_dpp_pairs_csv(rep, out, max_rows=100_000, seed=seed))
        elif report == "perm":
            weight_reports, _ = network_dpp_reports(net, dataset.images, permute_seed=seed)
            comparison = []
            for rep, (_, _, layer) in zip(weight_reports, net.binary_dense_layers()):
                outputs.append(save_report_json(rep, out))
                w_c = layer.w_c
                w_b = binarize_signs(w_c)
                cos = (w_c * w_b).sum(axis=1) / (
                    np.linalg.norm(w_c, axis=1) * np.linalg.norm(w_b, axis=1)
                )
                comparison.append(
                    {
                        "layer_id": rep.layer_id,
                        "permuted_r": rep.pearson_r,
                        "mean_row_cosine": float(cos.mean()),
                    }
                )
            os.makedirs(out, exist_ok=True)
            summary_path = os.path.join(out, "perm_summary.json")
            with open(summary_path, "w") as fh:
                json.dump(comparison, fh, indent=2)
                fh.write("\n")
            outputs.append(summary_path)
        elif report == "angles":
            for rep in weight_angle_histogram(net):
                outputs.append(save_report_json(rep, out))
        elif report == "components":
            for rep in weight_component_histogram(net):
                outputs.append(save_report_json(rep, out))
        else:
            outputs.append(save_report_json(pca_spectrum(dataset.images), out))

    config = {"ckpt": os.path.abspath(ckpt), "data": data, "report": report, "out": out}
    _write_manifest(out, "diagnose", config, seed, outputs, started)
    click.echo(f"wrote {len(outputs)} report files to {out}")


@main.command()
@click.option("--dims", required=True, help="Comma-separated dimensions.")
@click.option("--iters", default=2000, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", default=".", show_default=True, type=click.Path(file_okay=False))
@threads_option
def bench(dims, iters, seed, out, threads):
    """Time the packed popcount dot against a naive float dot."""
    started = time.perf_counter_ns()
    dim_list = _parse_dims(dims)
    rng = np.random.Generator(np.random.Philox(key=seed))
    rows = []
    with _thread_cap(threads):
        for dim in dim_list:
            a = binarize_signs(rng.standard_normal(dim))
            b = binarize_signs(rng.standard_normal(dim))
            pa, pb = BitVector.from_signs(a), BitVector.from_signs(b)
            oracle = int(round(float((a * b).sum())))
            measured = dot_bb(pa, pb)
            if measured != oracle:
                raise RuntimeError(f"packed dot mismatch at dim {dim}: {measured} != {oracle}")
            t0 = time.perf_counter_ns()
            for _ in range(iters):
                dot_bb(pa, pb)
            t1 = time.perf_counter_ns()
            for _ in range(iters):
                (a * b).sum()
            t2 = time.perf_counter_ns()
            packed_ns = (t1 - t0) / iters
            float_ns = (t2 - t1) / iters
            rows.append(
                {
                    "dim": dim,
                    "packed_ns_per_op": packed_ns,
                    "float_ns_per_op": float_ns,
                    "speedup": float_ns / packed_ns,
                }
            )

    os.makedirs(out, exist_ok=True)
    csv_path = os.path.join(out, "bench.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["dim", "packed_ns_per_op", "float_ns_per_op", "speedup"])
        writer.writeheader()
        writer.writerows(rows)
    config = {"dims": dim_list, "iters": iters, "out": out}
    _write_manifest(out, "bench", config, seed, [csv_path], started)
    for row in rows:
        click.echo(f"dim {row['dim']}: speedup {row['speedup']:.2f}x")


if __name__ == "__main__":
    main()

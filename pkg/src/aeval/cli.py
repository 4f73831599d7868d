"""Command-line entry point.

Subcommands: metrics, anchor, serve, analyze, ndb-train. All file outputs
are JSON (or CSV where stated) and are bit-reproducible for a fixed --seed.
Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import json
import os
import socket
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import analysis, metrics
from .audio import StftParams, make_anchor, read_wav, stft, write_wav
from .dataio import load_manifest, read_csv_matrix, read_embedding_file
from .errors import DataError
from .metrics import EmbeddingSet, ProbabilityMatrix

DEFAULT_SEED = 1234


@click.group()
def cli():
    """Evaluation workbench for neural audio synthesis."""


# ---------------------------------------------------------------------------
# metrics


def _find_matrix(directory, name, kind):
    """Locate {name}.aemb (preferred) or {name}.csv under directory."""
    if directory is None:
        return None
    directory = Path(directory)
    aemb = directory / f"{name}.aemb"
    if aemb.is_file():
        loaded = read_embedding_file(aemb)
        if kind == "probability" and not isinstance(loaded, ProbabilityMatrix):
            raise DataError(f"{aemb} is not a probability container")
        if kind == "embedding" and not isinstance(loaded, EmbeddingSet):
            raise DataError(f"{aemb} is not an embedding container")
        return loaded
    csv_path = directory / f"{name}.csv"
    if csv_path.is_file():
        m = read_csv_matrix(csv_path)
        return ProbabilityMatrix(m) if kind == "probability" else EmbeddingSet(m, name)
    return None


def _audio_metrics(manifest, system, params, sizes, waveform_mode):
    per_item = {}
    for item in manifest.items:
        ref = read_wav(item.reference)
        gen = read_wav(item.conditions[system])
        if len(ref) != len(gen):
            raise DataError(f"item {item.id}: length mismatch between reference "
                            f"and condition {system!r}")
        if waveform_mode:
            err = metrics.waveform_mse_mae(ref, gen)
        else:
            err = metrics.mse_mae(stft(ref, params), stft(gen, params))
        per_item[item.id] = {
            "mse": err["mse"],
            "mae": err["mae"],
            "multi_scale_distance": metrics.multi_scale_distance(ref, gen, sizes),
        }
    mean = lambda key: float(np.mean([v[key] for v in per_item.values()]))
    return per_item, {"mse": mean("mse"), "mae": mean("mae"),
                      "multi_scale_distance": mean("multi_scale_distance")}


def _system_report(manifest, system, opts):
    values = {m: None for m in ("mse", "mae", "multi_scale_distance",
                                "ndb_ratio", "inception_score", "kid", "fad")}
    skipped = {}
    per_item, means = _audio_metrics(manifest, system, opts["stft_params"],
                                     opts["multi_scale_sizes"],
                                     opts["waveform_mse"])
    values.update(means)

    ref_emb = opts["reference_embeddings"]
    sys_emb = _find_matrix(opts["embeddings_dir"], system, "embedding")
    if ref_emb is not None and sys_emb is not None:
        values["fad"] = metrics.fad(ref_emb, sys_emb)
        values["kid"] = metrics.kid(ref_emb, sys_emb,
                                    block_size=opts["kid_block_size"],
                                    repetitions=opts["kid_repetitions"],
                                    seed=opts["seed"])
    else:
        reason = "missing embeddings for " + \
            ("reference" if ref_emb is None else system)
        skipped["fad"] = skipped["kid"] = reason

    sys_prob = _find_matrix(opts["probabilities_dir"], system, "probability")
    if sys_prob is not None:
        values["inception_score"] = metrics.inception_score(
            sys_prob, splits=opts["is_splits"])
    else:
        skipped["inception_score"] = f"missing probabilities for {system}"

    model = opts["ndb_model"]
    ndb_test = sys_prob if opts["ndb_source"] == "probabilities" else sys_emb
    if model is not None and ndb_test is not None:
        values["ndb_ratio"] = metrics.ndb_score(model, ndb_test)["ratio"]
    else:
        which = "reference" if model is None else system
        skipped["ndb_ratio"] = (f"missing {opts['ndb_source']} for {which}")
    return values, skipped, per_item


@cli.command("metrics")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True), help="Corpus manifest JSON.")
@click.option("--embeddings-dir", type=click.Path(),
              help="Directory of {name}.aemb/.csv embedding matrices.")
@click.option("--probabilities-dir", type=click.Path(),
              help="Directory of {name}.aemb/.csv probability matrices.")
@click.option("--out", required=True, type=click.Path(),
              help="Metric report JSON output path.")
@click.option("--fft-size", default=1024, show_default=True)
@click.option("--hop-size", default=256, show_default=True)
@click.option("--window", default="hann", show_default=True,
              type=click.Choice(["hann", "rectangular"]))
@click.option("--multi-scale-sizes", default="2048,1024,512,256,128,64",
              show_default=True, help="Comma-separated FFT sizes.")
@click.option("--waveform-mse", is_flag=True,
              help="Compute MSE/MAE on waveforms instead of spectrograms.")
@click.option("--ndb-k", default=metrics.DEFAULT_NDB_K, show_default=True)
@click.option("--ndb-alpha", default=metrics.DEFAULT_NDB_ALPHA, show_default=True)
@click.option("--ndb-source", default="probabilities", show_default=True,
              type=click.Choice(["probabilities", "embeddings"]),
              help="Sample space for the NDB bins.")
@click.option("--kid-block-size", default=0, show_default=True,
              help="0 compares whole sets; >0 averages over random blocks.")
@click.option("--kid-repetitions", default=1, show_default=True)
@click.option("--is-splits", default=1, show_default=True,
              help="Row splits averaged by the inception score.")
@click.option("--seed", default=DEFAULT_SEED, show_default=True)
def cmd_metrics(manifest_path, embeddings_dir, probabilities_dir, out,
                fft_size, hop_size, window, multi_scale_sizes, waveform_mse,
                ndb_k, ndb_alpha, ndb_source, kid_block_size, kid_repetitions,
                is_splits, seed):
    """Compute every objective metric for which inputs exist."""
    manifest = load_manifest(manifest_path)
    try:
        sizes = tuple(int(s) for s in multi_scale_sizes.split(",") if s.strip())
    except ValueError:
        raise click.UsageError("--multi-scale-sizes must be integers")
    opts = {
        "stft_params": StftParams(fft_size, hop_size, window),
        "multi_scale_sizes": sizes,
        "waveform_mse": waveform_mse,
        "embeddings_dir": embeddings_dir,
        "probabilities_dir": probabilities_dir,
        "reference_embeddings": _find_matrix(embeddings_dir, "reference",
                                             "embedding"),
        "ndb_k": ndb_k,
        "ndb_alpha": ndb_alpha,
        "ndb_source": ndb_source,
        "kid_block_size": kid_block_size,
        "kid_repetitions": kid_repetitions,
        "is_splits": is_splits,
        "seed": seed,
    }
    if ndb_source == "probabilities":
        opts["ndb_train"] = _find_matrix(probabilities_dir, "reference",
                                         "probability")
    else:
        opts["ndb_train"] = opts["reference_embeddings"]

    systems = list(manifest.condition_names)
    with ThreadPoolExecutor(max_workers=min(4, len(systems))) as pool:
        results = list(pool.map(
            lambda s: _system_report(manifest, s, opts), systems))

    report = {"systems": {}, "skipped": {}, "per_item": {}, "params": {
        "stft": {"fft_size": fft_size, "hop_size": hop_size, "window": window},
        "multi_scale_sizes": list(sizes),
        "waveform_mse": waveform_mse,
        "ndb": {"k": ndb_k, "alpha": ndb_alpha, "source": ndb_source},
        "kid": {"block_size": kid_block_size, "repetitions": kid_repetitions},
        "is_splits": is_splits,
        "seed": seed,
    }}
    for system, (values, skipped, per_item) in zip(systems, results):
        report["systems"][system] = values
        if skipped:
            report["skipped"][system] = skipped
        report["per_item"][system] = per_item
    if all(v is None for vals in report["systems"].values()
           for v in vals.values()):
        raise DataError("no computable metric")
    Path(out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                         encoding="utf-8")
    click.echo(f"wrote {out}")


# ---------------------------------------------------------------------------
# anchor


@cli.command("anchor")
@click.option("--manifest", "manifest_path", required=True,
              type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
def cmd_anchor(manifest_path, out_dir):
    """Render the degraded anchor WAV for every manifest item."""
    manifest = load_manifest(manifest_path)
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {out_dir}: {exc}") from exc
    for item in manifest.items:
        try:
            clip = read_wav(item.reference)
        except DataError as exc:
            raise DataError(f"item {item.id}: {exc}") from exc
        write_wav(out_dir / f"{item.id}.wav", make_anchor(clip))
    click.echo(f"wrote {len(manifest.items)} anchors to {out_dir}")


# ---------------------------------------------------------------------------
# serve


@cli.command("serve")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True), help="Service config JSON.")
def cmd_serve(config_path):
    """Run the listening-study HTTP service."""
    import uvicorn

    from .study import create_app, load_config

    config = load_config(config_path)
    secret = os.environ.get(config.admin_secret_env)
    if not secret:
        raise DataError(
            f"admin secret env var {config.admin_secret_env} is not set; "
            "refusing to start")
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((config.host, config.port))
    except OSError as exc:
        raise DataError(
            f"cannot bind {config.host}:{config.port}: {exc}") from exc
    finally:
        probe.close()
    app = create_app(config, secret)
    click.echo(f"serving on http://{config.host}:{config.port}")
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")


# ---------------------------------------------------------------------------
# analyze


@cli.command("analyze")
@click.option("--export", "export_path", required=True,
              type=click.Path(exists=True),
              help="Study export (CSV or JSON).")
@click.option("--metrics-report", type=click.Path(exists=True),
              help="Metric report JSON for rating/metric correlation.")
@click.option("--out", required=True, type=click.Path(),
              help="Analysis report JSON output path.")
@click.option("--plot-csv", type=click.Path(),
              help="Per-condition rating distribution CSV "
                   "[default: <out>.plot.csv].")
@click.option("--threshold", default=85.0, show_default=True,
              help="Screening threshold on mean reference score.")
@click.option("--per-rater-means", is_flag=True,
              help="Pair Wilcoxon tests on per-rater means, not responses.")
@click.option("--bonferroni", is_flag=True,
              help="Add Bonferroni-adjusted p-values to pairwise tests.")
def cmd_analyze(export_path, metrics_report, out, plot_csv, threshold,
                per_rater_means, bonferroni):
    """Analyze study responses and relate them to objective metrics."""
    table = analysis.load_export(export_path)
    report_doc = None
    if metrics_report:
        try:
            report_doc = json.loads(Path(metrics_report).read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"metrics report: {exc}") from exc
    report = analysis.build_analysis_report(
        table, threshold, metric_report=report_doc,
        per_rater_means=per_rater_means, bonferroni=bonferroni)
    Path(out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                         encoding="utf-8")
    kept = table.filter_raters(report["screening"]["kept"])
    plot_path = Path(plot_csv) if plot_csv else Path(str(out) + ".plot.csv")
    analysis.write_plot_csv(plot_path, kept)
    click.echo(f"wrote {out} and {plot_path}")


# ---------------------------------------------------------------------------
# ndb-train


@cli.command("ndb-train")
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True),
              help="Training samples (.aemb or .csv).")
@click.option("--k", default=metrics.DEFAULT_NDB_K, show_default=True)
@click.option("--alpha", default=metrics.DEFAULT_NDB_ALPHA, show_default=True)
@click.option("--seed", default=DEFAULT_SEED, show_default=True)
@click.option("--out", required=True, type=click.Path(),
              help="Fitted bin model JSON output path.")
def cmd_ndb_train(input_path, k, alpha, seed, out):
    """Fit NDB bins on a sample matrix and persist the model."""
    path = Path(input_path)
    if path.suffix == ".csv":
        train = read_csv_matrix(path)
    else:
        train = read_embedding_file(path)
    model = metrics.fit_ndb(train, k=k, alpha=alpha, seed=seed)
    doc = {
        "centroids": model.centroids.tolist(),
        "train_bin_proportions": model.train_bin_proportions.tolist(),
        "train_count": model.train_count,
        "k": model.k,
        "alpha": model.alpha,
        "seed": seed,
    }
    Path(out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                         encoding="utf-8")
    click.echo(f"wrote {out}")


def load_ndb_model(path) -> metrics.NdbModel:
    """Load a model persisted by ndb-train."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return metrics.NdbModel(
        np.array(doc["centroids"], dtype=np.float64),
        np.array(doc["train_bin_proportions"], dtype=np.float64),
        train_count=int(doc["train_count"]),
        k=int(doc["k"]),
        alpha=float(doc["alpha"]),
    )


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        raise SystemExit(exc.exit_code)
    except click.ClickException as exc:
        exc.show()
        raise SystemExit(1)
    except DataError as exc:
        click.echo(f"error: {exc}", err=True)
        raise SystemExit(2)
    raise SystemExit(0)


if __name__ == "__main__":
    main()

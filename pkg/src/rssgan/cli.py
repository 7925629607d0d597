"""Command-line entry point.

Exit codes: 0 success, 1 usage or config error (including a missing
prerequisite artifact), 2 data error, 3 training failure.
"""
from __future__ import annotations

import csv
import functools
import json
import logging
import sys
import time
import urllib.error
from pathlib import Path

import click
import numpy as np

from . import report as rep
from .classifier import evaluate, train_classifier, write_eval_csv
from .config import ConfigError, RunConfig, dump_config, load_config
from .data import (
    Dataset,
    DataError,
    Standardizer,
    fetch,
    load_dataset,
    read_split_manifest,
    sha256_of,
    stratified_split,
    subsample_fraction,
    write_split_manifest,
)
from .experiments import ExperimentSpec, run_fraction_sweep, run_table1, sweep_fractions
from .gan import (
    GanModel,
    generate,
    load_gan,
    save_gan,
    train_class_gans,
    write_trace_csv,
)
from .nn import TrainingError, load_mlp, make_rng, save_mlp

logger = logging.getLogger("rssgan")

EXIT_USAGE, EXIT_DATA, EXIT_TRAINING = 1, 2, 3


class MissingArtifact(click.ClickException):
    exit_code = EXIT_USAGE

    def __init__(self, path: Path, what: str):
        super().__init__(f"missing {what}: {path}")


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingArtifact(path, what)
    return path


def common_options(fn):
    """Config file, generic overrides and the flags every command shares."""
    decorators = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML run config."),
        click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                     help="Override any config field, e.g. --set gan.iterations=500 (repeatable)."),
        click.option("--seed", type=int, help="Master seed (config: seed)."),
        click.option("--data", type=click.Path(dir_okay=False), help="Dataset file (config: dataset.path)."),
        click.option("--output-dir", type=click.Path(file_okay=False), help="Output root (config: output_dir)."),
        click.option("--tag", help="Output subdirectory name; defaults to a UTC timestamp."),
        click.option("-v", "--verbose", count=True, help="More logging (-v info, -vv debug)."),
    ]
    for deco in reversed(decorators):
        fn = deco(fn)

    @functools.wraps(fn)
    def wrapper(config_path, overrides, seed, data, output_dir, tag, verbose, **kwargs):
        logging.basicConfig(
            level=[logging.WARNING, logging.INFO, logging.DEBUG][min(verbose, 2)],
            format="%(levelname)s %(name)s: %(message)s",
        )
        extra = list(overrides)
        if seed is not None:
            extra.append(f"seed={seed}")
        if data is not None:
            extra.append(f"dataset.path={json.dumps(str(data))}")
        if output_dir is not None:
            extra.append(f"output_dir={json.dumps(str(output_dir))}")
        cfg = load_config(config_path, extra)
        return fn(cfg, tag, **kwargs)

    return wrapper


def _out_dir(cfg: RunConfig, command: str, tag: str | None) -> Path:
    base = cfg.output_dir / command
    if tag:
        out = base / tag
        if out.exists():
            raise click.ClickException(f"{out} already exists; outputs are write-once")
    else:
        stamp = time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
        out, n = base / stamp, 1
        while out.exists():
            out, n = base / f"{stamp}-{n}", n + 1
    out.mkdir(parents=True)
    return out


def _load(cfg: RunConfig) -> Dataset:
    path = cfg.dataset_path
    if not path.exists():
        raise DataError(f"dataset not found at {path}; run `rssgan fetch` or pass --data")
    return load_dataset(path)


def _write_config(out: Path, cfg: RunConfig) -> None:
    (out / "config.yaml").write_text(dump_config(cfg))


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def cli():
    """GAN-based synthetic data augmentation for RSS fingerprint room classification."""


@cli.command("fetch")
@common_options
@click.option("--url", help="Download URL (config: dataset.url).")
@click.option("--sha256", help="Expected SHA-256 hex digest (config: dataset.sha256).")
def cmd_fetch(cfg: RunConfig, tag, url, sha256):
    """Download the benchmark file into the cache and verify its digest."""
    dest = cfg.dataset_path
    try:
        path = fetch(url or cfg.dataset_url, dest, sha256 or cfg.dataset_sha256)
    except (urllib.error.URLError, OSError) as exc:
        raise DataError(f"download failed: {exc}") from None
    n = sum(1 for line in path.open() if line.strip())
    click.echo(f"fetch: {path} ({n} lines, sha256 {sha256_of(path)})")


@cli.command("split")
@common_options
def cmd_split(cfg: RunConfig, tag):
    """Halve the dataset per class into train/test and write the manifest."""
    ds = _load(cfg)
    train, test = stratified_split(ds, make_rng(cfg.seed))
    out = _out_dir(cfg, "split", tag)
    write_split_manifest(out / "manifest.csv", train, test)
    (out / "standardizer.json").write_text(json.dumps(Standardizer.fit(train).to_dict()) + "\n")
    _write_config(out, cfg)
    click.echo(f"split: {len(train)} train / {len(test)} test -> {out}")


def _training_subset(cfg: RunConfig, split_dir: Path, fraction: float):
    ds = _load(cfg)
    train, test = read_split_manifest(_require(split_dir / "manifest.csv", "split manifest"), ds)
    sub = subsample_fraction(train, fraction, make_rng(cfg.seed)) if fraction < 1.0 else train
    return sub, test


@cli.command("train-gan")
@common_options
@click.option("--split", "split_dir", required=True, type=click.Path(file_okay=False), help="Output of `split`.")
@click.option("--fraction", default=1.0, show_default=True, type=float, help="Real fraction of each class to use.")
@click.option("--class", "classes", multiple=True, type=int, help="Class id(s) to train; default all.")
def cmd_train_gan(cfg: RunConfig, tag, split_dir, fraction, classes):
    """Train one GAN per class on the (subsampled) training split."""
    sub, _ = _training_subset(cfg, Path(split_dir), fraction)
    std = Standardizer.fit(sub)
    models = train_class_gans(std.apply(sub), cfg.gan_config(), cfg.seed, list(classes) or None)
    out = _out_dir(cfg, "train-gan", tag)
    (out / "standardizer.json").write_text(json.dumps(std.to_dict()) + "\n")
    for c, model in models.items():
        save_gan(model, out / f"gan_class{c}.json")
        write_trace_csv(out / f"trace_class{c}.csv", model)
    _write_config(out, cfg)
    last = {c: float(np.mean(m.trace[-max(1, len(m.trace) // 10):, 2])) if len(m.trace) else float("nan")
            for c, m in models.items()}
    click.echo(
        "train-gan: classes " + ", ".join(f"{c} (late mean D(real) {v:.3f})" for c, v in last.items())
        + f" -> {out}"
    )


def _load_gan_dir(gan_dir: Path, class_id: int) -> tuple[GanModel, Standardizer]:
    model = load_gan(
        _require(gan_dir / f"gan_class{class_id}.json", f"GAN model for class {class_id}"),
        _require(gan_dir / f"trace_class{class_id}.csv", f"GAN trace for class {class_id}"),
    )
    std = Standardizer.from_dict(json.loads(_require(gan_dir / "standardizer.json", "standardizer").read_text()))
    return model, std


@cli.command("generate")
@common_options
@click.option("--gan", "gan_dir", required=True, type=click.Path(file_okay=False), help="Output of `train-gan`.")
@click.option("--class", "class_id", required=True, type=int, help="Class id to synthesize.")
@click.option("--count", required=True, type=click.IntRange(min=0), help="Number of synthetic samples.")
def cmd_generate(cfg: RunConfig, tag, gan_dir, class_id, count):
    """Sample synthetic fingerprints from a trained class GAN."""
    model, std = _load_gan_dir(Path(gan_dir), class_id)
    block = generate(model, count, make_rng(cfg.seed))
    out = _out_dir(cfg, "generate", tag)
    raw = std.invert(block.values)
    with (out / f"synthetic_class{class_id}.txt").open("w") as fh:
        for row in raw:
            fh.write("\t".join(repr(float(v)) for v in row) + f"\t{class_id}\n")
    np.savetxt(out / f"synthetic_class{class_id}.standardized.txt", block.values, delimiter="\t")
    manifest = {
        "synthetic": True,
        "class_id": class_id,
        "count": count,
        "seed": cfg.seed,
        "source_model": str(Path(gan_dir) / f"gan_class{class_id}.json"),
        "space": "dBm (inverse-standardized); standardized copy alongside",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    click.echo(f"generate: {block.values.shape[0]}x{block.values.shape[1]} class {class_id} -> {out}")


def _read_synthetic(paths: list[Path], std: Standardizer) -> tuple[np.ndarray, np.ndarray]:
    X, y = [], []
    for d in paths:
        manifest = json.loads(_require(d / "manifest.json", "synthetic manifest").read_text())
        if not manifest.get("synthetic"):
            raise DataError(f"{d} is not a synthetic export")
        c = manifest["class_id"]
        f = _require(d / f"synthetic_class{c}.txt", "synthetic samples")
        rows = np.loadtxt(f, delimiter="\t", ndmin=2)
        if rows.size:
            X.append(std.transform(rows[:, :-1]))
            y.append(rows[:, -1].astype(np.int64))
    if not X:
        return np.empty((0, 0)), np.empty(0, dtype=np.int64)
    return np.vstack(X), np.concatenate(y)


@cli.command("train-classifier")
@common_options
@click.option("--split", "split_dir", required=True, type=click.Path(file_okay=False), help="Output of `split`.")
@click.option("--fraction", default=1.0, show_default=True, type=float, help="Real fraction of each class to use.")
@click.option("--synthetic", "synthetic_dirs", multiple=True, type=click.Path(file_okay=False),
              help="Output(s) of `generate` to append (repeatable).")
def cmd_train_classifier(cfg: RunConfig, tag, split_dir, fraction, synthetic_dirs):
    """Train the room classifier on real (and optionally synthetic) fingerprints."""
    sub, _ = _training_subset(cfg, Path(split_dir), fraction)
    std = Standardizer.fit(sub)
    train = std.apply(sub)
    Xs, ys = _read_synthetic([Path(d) for d in synthetic_dirs], std)
    if len(ys):
        train = Dataset(
            np.vstack([train.X, Xs]),
            np.concatenate([train.y, ys]),
            np.concatenate([train.index, np.full(len(ys), -1)]),
            train.class_count,
        )
    trained = train_classifier(train, cfg.classifier_config())
    out = _out_dir(cfg, "train-classifier", tag)
    save_mlp(trained.params, out / "model.json")
    (out / "standardizer.json").write_text(json.dumps(std.to_dict()) + "\n")
    with (out / "trace.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss"])
        w.writerows([i, repr(v)] for i, v in enumerate(trained.trace))
    _write_config(out, cfg)
    final = trained.trace[-1] if trained.trace else float("nan")
    click.echo(f"train-classifier: {len(train)} samples ({len(ys)} synthetic), final loss {final:.4f} -> {out}")


@cli.command("evaluate")
@common_options
@click.option("--model", "model_dir", required=True, type=click.Path(file_okay=False),
              help="Output of `train-classifier`.")
@click.option("--split", "split_dir", required=True, type=click.Path(file_okay=False), help="Output of `split`.")
def cmd_evaluate(cfg: RunConfig, tag, model_dir, split_dir):
    """Accuracy, log loss and confusion matrix on the test split."""
    model_dir = Path(model_dir)
    params = load_mlp(_require(model_dir / "model.json", "trained classifier"))
    std = Standardizer.from_dict(json.loads(_require(model_dir / "standardizer.json", "standardizer").read_text()))
    ds = _load(cfg)
    _, test = read_split_manifest(_require(Path(split_dir) / "manifest.csv", "split manifest"), ds)
    result = evaluate(params, std.apply(test))
    out = _out_dir(cfg, "evaluate", tag)
    write_eval_csv(out / "eval.csv", result)
    click.echo(f"evaluate: accuracy {result.accuracy:.2f}%, log loss {result.log_loss:.4f} -> {out}")


def _spec(cfg: RunConfig, fractions, synthetic, full: bool, repetitions, interpretation) -> ExperimentSpec:
    exp = cfg.experiment
    reps = repetitions or (exp["full_repetitions"] if full else exp["repetitions"])
    return ExperimentSpec(
        fractions=tuple(fractions),
        synthetic_counts=tuple(synthetic),
        repetitions=reps,
        master_seed=cfg.seed,
        classifier=cfg.classifier_config(),
        gan=cfg.gan_config(),
        interpretation=interpretation or exp["interpretation"],
        workers=cfg.workers,
    )


def experiment_options(fn):
    for deco in reversed([
        click.option("--full", is_flag=True, help="Use experiment.full_repetitions (100) instead of repetitions."),
        click.option("--repetitions", type=click.IntRange(min=1), help="Repetitions per cell."),
        click.option("--workers", type=click.IntRange(min=0), help="Worker processes (0 = logical cores)."),
    ]):
        fn = deco(fn)
    return fn


@cli.command("table1")
@common_options
@experiment_options
@click.option("--interpretation", type=click.Choice(["totals", "per_class"]),
              help="Whether synthetic counts are dataset totals or per class.")
def cmd_table1(cfg: RunConfig, tag, full, repetitions, workers, interpretation):
    """Accuracy/log loss for 10% and 100% real data plus 0..1000 synthetic samples."""
    if workers is not None:
        cfg.raw["workers"] = workers
    exp = cfg.experiment
    spec = _spec(cfg, exp["table1_fractions"], exp["table1_synthetic"], full, repetitions, interpretation)
    result = run_table1(_load(cfg), spec)
    out = _out_dir(cfg, "table1", tag)
    rep.write_raw_csv(out / "runs.csv", result)
    rep.write_aggregate_csv(out / "aggregate.csv", result)
    (out / "table1.md").write_text(rep.table1_markdown(result))
    rep.write_meta(out / "meta.json", result)
    _write_config(out, cfg)
    click.echo(f"table1: {len(result.cells)} cells x {spec.repetitions} runs "
               f"({result.meta['failed_runs']} failed) -> {out}")


@cli.command("sweep")
@common_options
@experiment_options
@click.option("--step", type=float, help="Fraction step (config: experiment.sweep_step).")
def cmd_sweep(cfg: RunConfig, tag, full, repetitions, workers, step):
    """Real-only vs topped-up accuracy for real fractions from step to 100%."""
    if workers is not None:
        cfg.raw["workers"] = workers
    fractions = sweep_fractions(step or cfg.experiment["sweep_step"])
    spec = _spec(cfg, fractions, (), full, repetitions, None)
    result = run_fraction_sweep(_load(cfg), spec)
    out = _out_dir(cfg, "sweep", tag)
    rep.write_raw_csv(out / "runs.csv", result)
    rep.write_aggregate_csv(out / "aggregate.csv", result)
    (out / "sweep.svg").write_text(rep.sweep_svg(rep.sweep_series(result)))
    rep.write_meta(out / "meta.json", result)
    _write_config(out, cfg)
    click.echo(f"sweep: {len(fractions)} fractions x {spec.repetitions} runs -> {out}")


def main(argv: list[str] | None = None) -> int:
    try:
        rv = cli.main(args=argv, prog_name="rssgan", standalone_mode=False)
        return rv if isinstance(rv, int) else 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE if isinstance(exc, click.UsageError) else exc.exit_code
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_USAGE
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA
    except TrainingError as exc:
        click.echo(f"training failed: {exc}", err=True)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())

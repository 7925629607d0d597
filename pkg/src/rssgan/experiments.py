"""Repeated, seeded experiment runs: the synthetic-count table and the fraction sweep.

Seeding: repetition ``r`` of an experiment with master seed ``s`` uses
``run_seed = derive_seed(s, r)``. Every random choice inside the run draws from
a stream keyed on that run seed:

* split of the full dataset       ``derive_seed(run_seed, SPLIT)``
* subsample of the training half  ``derive_seed(run_seed, SUBSAMPLE, permille)``
* GAN training, class ``c``       ``derive_seed(run_seed, GAN, permille) ^ c``
* synthetic generation, class c   ``derive_seed(run_seed, GENERATE, permille) ^ c``
* classifier init and shuffling   ``derive_seed(run_seed, CLASSIFIER)``

``permille`` is the real fraction in thousandths. The classifier stream does not
depend on the cell, so cells of one repetition differ only in their data.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .classifier import ClassifierConfig, evaluate, train_classifier
from .data import Dataset, Standardizer, stratified_split, subsample_fraction
from .gan import GanConfig, augment_dataset, train_class_gans
from .nn import TrainingError, make_rng

logger = logging.getLogger(__name__)

SPLIT, SUBSAMPLE, GAN, GENERATE, CLASSIFIER = range(5)

TABLE1 = "table1"
SWEEP_REAL = "sweep_real_only"
SWEEP_TOPPED = "sweep_topped_up"
TOTALS = "totals"
PER_CLASS = "per_class"
TOP_UP = "top_up"


def derive_seed(*keys: int) -> int:
    """Stable 63-bit seed from a tuple of non-negative integers."""
    state = np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)[0]
    return int(state >> np.uint64(1))


def permille(fraction: float) -> int:
    return int(round(fraction * 1000))


def split_count(total: int, class_count: int, interpretation: str) -> dict[int, int]:
    """Per-class synthetic counts for a table row value.

    ``totals`` spreads the value evenly over the classes, giving any remainder
    to the lowest class ids; ``per_class`` adds the value to every class.
    """
    if interpretation == PER_CLASS:
        return {c: total for c in range(1, class_count + 1)}
    if interpretation == TOTALS:
        base, rem = divmod(total, class_count)
        return {c: base + (1 if c <= rem else 0) for c in range(1, class_count + 1)}
    raise ValueError(f"unknown interpretation {interpretation!r}")


@dataclass
class ExperimentSpec:
    fractions: tuple[float, ...] = (0.10, 1.00)
    synthetic_counts: tuple[int, ...] = (0, 250, 500, 750, 1000)
    repetitions: int = 20
    master_seed: int = 0
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    gan: GanConfig = field(default_factory=GanConfig)
    interpretation: str = TOTALS
    workers: int = 1

    def __post_init__(self):
        self.fractions = tuple(float(f) for f in self.fractions)
        self.synthetic_counts = tuple(int(s) for s in self.synthetic_counts)
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if any(s < 0 for s in self.synthetic_counts):
            raise ValueError("synthetic counts must be >= 0")
        if any(not 0.0 < f <= 1.0 for f in self.fractions):
            raise ValueError("fractions must lie in (0, 1]")
        if self.interpretation not in (TOTALS, PER_CLASS):
            raise ValueError(f"interpretation must be {TOTALS!r} or {PER_CLASS!r}")


@dataclass
class RunRecord:
    experiment: str
    real_fraction: float
    synthetic_count: int
    interpretation: str
    repetition: int
    run_seed: int
    accuracy: float
    log_loss: float
    wall_ms: int
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error

    @property
    def cell(self) -> tuple[str, float, int, str]:
        return (self.experiment, self.real_fraction, self.synthetic_count, self.interpretation)


@dataclass
class CellStats:
    n_runs: int
    n_failed: int
    accuracy_mean: float
    accuracy_std: float
    accuracy_min: float
    accuracy_max: float
    log_loss_mean: float
    log_loss_std: float
    log_loss_min: float
    log_loss_max: float


@dataclass
class ExperimentReport:
    records: list[RunRecord]
    cells: dict[tuple, CellStats]
    meta: dict = field(default_factory=dict)

    def cell(self, experiment: str, fraction: float, synthetic: int | None = None) -> CellStats:
        matches = [
            stats
            for (exp, f, s, _), stats in self.cells.items()
            if exp == experiment and math.isclose(f, fraction) and (synthetic is None or s == synthetic)
        ]
        if len(matches) != 1:
            raise KeyError(f"{len(matches)} cells match {experiment}, {fraction}, {synthetic}")
        return matches[0]


def _summary(values: np.ndarray) -> tuple[float, float, float, float]:
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return float(np.mean(values)), std, float(np.min(values)), float(np.max(values))


def aggregate(records: list[RunRecord]) -> dict[tuple, CellStats]:
    """Mean, sample std, min and max per cell over the successful runs."""
    if not records:
        raise ValueError("no run records to aggregate")
    by_cell: dict[tuple, list[RunRecord]] = {}
    for rec in records:
        by_cell.setdefault(rec.cell, []).append(rec)
    cells = {}
    for key in sorted(by_cell):
        good = [r for r in by_cell[key] if r.ok]
        failed = len(by_cell[key]) - len(good)
        if not good:
            raise TrainingError(
                f"every run of cell {key} failed; first error: {by_cell[key][0].error}"
            )
        acc = _summary(np.array([r.accuracy for r in good]))
        loss = _summary(np.array([r.log_loss for r in good]))
        cells[key] = CellStats(len(good), failed, *acc, *loss)
    return cells


# -- single repetition ---------------------------------------------------------

def prepare_run(dataset: Dataset, fraction: float, run_seed: int):
    """Split, subsample and standardize for one repetition.

    The standardizer is fitted on the real training rows the run may use (the
    subsample) and then applied to the test half.
    """
    train, test = stratified_split(dataset, make_rng(derive_seed(run_seed, SPLIT)))
    sub = subsample_fraction(train, fraction, make_rng(derive_seed(run_seed, SUBSAMPLE, permille(fraction))))
    std = Standardizer.fit(sub)
    return train, std.apply(sub), std.apply(test), std


def _run_cells(
    dataset: Dataset,
    spec: ExperimentSpec,
    fraction: float,
    repetition: int,
    cells: list[tuple[str, int, str, dict[int, int]]],
) -> list[RunRecord]:
    """Train this repetition's GANs once, then one classifier per cell."""
    run_seed = derive_seed(spec.master_seed, repetition)
    key = permille(fraction)
    train, sub, test, _ = prepare_run(dataset, fraction, run_seed)
    clf_cfg = replace(spec.classifier, seed=derive_seed(run_seed, CLASSIFIER))

    models, gan_error, gan_ms = None, "", 0
    needed = sorted({c for *_, counts in cells for c, p in counts.items() if p > 0})
    if needed:
        t0 = time.perf_counter()
        try:
            models = train_class_gans(sub, spec.gan, derive_seed(run_seed, GAN, key), needed)
        except TrainingError as exc:
            gan_error = str(exc)
            logger.warning("run %d fraction %.2f: %s", repetition, fraction, exc)
        gan_ms = int(1000 * (time.perf_counter() - t0))

    records = []
    for experiment, total, interpretation, counts in cells:
        t0 = time.perf_counter()
        uses_gan = any(p > 0 for p in counts.values())
        acc = loss = float("nan")
        error = gan_error if uses_gan else ""
        if not error:
            try:
                train_set = (
                    augment_dataset(sub, models, counts, derive_seed(run_seed, GENERATE, key))
                    if uses_gan
                    else sub
                )
                result = evaluate(train_classifier(train_set, clf_cfg).params, test)
                acc, loss = result.accuracy, result.log_loss
            except TrainingError as exc:
                error = str(exc)
        wall = int(1000 * (time.perf_counter() - t0)) + (gan_ms if uses_gan else 0)
        records.append(
            RunRecord(experiment, fraction, total, interpretation, repetition, run_seed, acc, loss, wall, error)
        )
    return records


def _table1_job(args) -> list[RunRecord]:
    dataset, spec, fraction, r = args
    cells = [
        (TABLE1, s, spec.interpretation, split_count(s, dataset.class_count, spec.interpretation))
        for s in spec.synthetic_counts
    ]
    return _run_cells(dataset, spec, fraction, r, cells)


def _sweep_job(args) -> list[RunRecord]:
    dataset, spec, fraction, r = args
    # top-up: every class is refilled to its full training-half count
    run_seed = derive_seed(spec.master_seed, r)
    train, sub, _, _ = prepare_run(dataset, fraction, run_seed)
    full, have = train.class_counts(), sub.class_counts()
    top = {c: full[c] - have[c] for c in full}
    cells = [
        (SWEEP_REAL, 0, TOP_UP, {c: 0 for c in full}),
        (SWEEP_TOPPED, sum(top.values()), TOP_UP, top),
    ]
    return _run_cells(dataset, spec, fraction, r, cells)


def _execute(job, jobs: list, workers: int) -> list[RunRecord]:
    if workers <= 1 or len(jobs) <= 1:
        results = [job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, jobs))
    return [rec for batch in results for rec in batch]


def _report(records: list[RunRecord], spec: ExperimentSpec, started: float) -> ExperimentReport:
    records.sort(key=lambda r: (r.cell, r.repetition))
    meta = {
        "wall_seconds": round(time.perf_counter() - started, 3),
        "runs": len(records),
        "failed_runs": sum(not r.ok for r in records),
        "workers": spec.workers,
    }
    return ExperimentReport(records, aggregate(records), meta)


def run_table1(dataset: Dataset, spec: ExperimentSpec) -> ExperimentReport:
    """Accuracy and log loss for every (real fraction, synthetic count) cell."""
    started = time.perf_counter()
    jobs = [(dataset, spec, f, r) for f in spec.fractions for r in range(spec.repetitions)]
    return _report(_execute(_table1_job, jobs, spec.workers), spec, started)


def sweep_fractions(step: float = 0.05) -> tuple[float, ...]:
    n = int(round(1.0 / step))
    return tuple(round(i * step, 6) for i in range(1, n + 1))


def run_fraction_sweep(dataset: Dataset, spec: ExperimentSpec) -> ExperimentReport:
    """Real-only versus topped-up accuracy across real-data fractions."""
    started = time.perf_counter()
    jobs = [(dataset, spec, f, r) for f in spec.fractions for r in range(spec.repetitions)]
    return _report(_execute(_sweep_job, jobs, spec.workers), spec, started)

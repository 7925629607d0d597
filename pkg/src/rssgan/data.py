"""Loading, splitting and standardizing the UCI wireless indoor localization set.

The benchmark file has one fingerprint per line: seven integer RSS readings in
dBm followed by a room label in 1..4, tab separated.
"""
from __future__ import annotations

import csv
import hashlib
import logging
import os
import shutil
import tempfile
import urllib.request
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

UCI_URL = (
    "https://archive.ics.uci.edu/ml/machine-learning-databases/00422/wifi_localization.txt"
)
DATA_FILENAME = "wifi_localization.txt"
CACHE_ENV = "RSSGAN_CACHE_DIR"
N_FEATURES = 7
N_CLASSES = 4


class DataError(ValueError):
    """Malformed input data or an impossible data request."""


@dataclass(frozen=True)
class Dataset:
    """Fingerprints ``X`` (N x M), labels ``y`` in 1..C, and source row indices."""

    X: np.ndarray
    y: np.ndarray
    index: np.ndarray
    class_count: int = N_CLASSES

    def __post_init__(self):
        n = self.X.shape[0]
        if self.X.ndim != 2 or self.y.shape != (n,) or self.index.shape != (n,):
            raise DataError("X, y and index must agree on the number of samples")
        if self.y.size and (self.y.min() < 1 or self.y.max() > self.class_count):
            raise DataError(f"labels must lie in 1..{self.class_count}")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def feature_count(self) -> int:
        return self.X.shape[1]

    def class_counts(self) -> dict[int, int]:
        return {c: int(np.sum(self.y == c)) for c in range(1, self.class_count + 1)}

    def take(self, rows: np.ndarray) -> "Dataset":
        return Dataset(self.X[rows], self.y[rows], self.index[rows], self.class_count)

    def with_features(self, X: np.ndarray) -> "Dataset":
        return Dataset(X, self.y, self.index, self.class_count)


@dataclass(frozen=True)
class ClassMatrix:
    """All fingerprints of one class stacked row-wise (K x M)."""

    class_id: int
    values: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def load_dataset(path: str | Path, class_count: int = N_CLASSES) -> Dataset:
    path = Path(path)
    rows, labels = [], []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t") if "\t" in line else line.split(",")
            if len(parts) != N_FEATURES + 1:
                raise DataError(
                    f"{path}:{lineno}: expected {N_FEATURES + 1} columns, got {len(parts)}"
                )
            try:
                values = [float(p) for p in parts[:-1]]
                label = int(parts[-1])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if not 1 <= label <= class_count:
                raise DataError(f"{path}:{lineno}: label {label} outside 1..{class_count}")
            rows.append(values)
            labels.append(label)
    if not rows:
        raise DataError(f"{path}: no samples")
    n = len(rows)
    return Dataset(
        np.asarray(rows, dtype=np.float64),
        np.asarray(labels, dtype=np.int64),
        np.arange(n),
        class_count,
    )


def stratified_split(ds: Dataset, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    """Halve every class at random into train and test."""
    train_rows, test_rows = [], []
    for c in range(1, ds.class_count + 1):
        rows = np.flatnonzero(ds.y == c)
        if rows.size % 2:
            raise DataError(f"class {c} has an odd count ({rows.size}); cannot halve it")
        rows = rng.permutation(rows)
        half = rows.size // 2
        train_rows.append(np.sort(rows[:half]))
        test_rows.append(np.sort(rows[half:]))
    return ds.take(np.concatenate(train_rows)), ds.take(np.concatenate(test_rows))


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, train: Dataset | np.ndarray) -> "Standardizer":
        X = train.X if isinstance(train, Dataset) else np.asarray(train, dtype=np.float64)
        mean = X.mean(axis=0)
        std = X.std(axis=0)  # population estimator
        flat = std <= 0
        if np.any(flat):
            logger.warning("constant feature columns %s: using unit scale", np.flatnonzero(flat))
            std = np.where(flat, 1.0, std)
        return cls(mean, std)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std

    def apply(self, ds: Dataset) -> Dataset:
        return ds.with_features(self.transform(ds.X))

    def invert(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def one_hot(labels, class_count: int = N_CLASSES) -> np.ndarray:
    """One-hot rows for 1-based labels; a scalar label gives a single vector."""
    arr = np.asarray(labels)
    if np.any(arr < 1) or np.any(arr > class_count):
        raise DataError(f"labels must lie in 1..{class_count}")
    out = np.zeros(arr.shape + (class_count,))
    np.put_along_axis(out, (arr - 1)[..., None].astype(np.int64), 1.0, axis=-1)
    return out


def per_class_quota(fraction: float, count: int) -> int:
    """``fraction * count`` rounded half-up, computed in decimal to dodge float ties."""
    return int((Decimal(str(fraction)) * count).to_integral_value(rounding=ROUND_HALF_UP))


def subsample_fraction(train: Dataset, fraction: float, rng: np.random.Generator) -> Dataset:
    if not 0.0 < fraction <= 1.0:
        raise DataError(f"fraction must lie in (0, 1], got {fraction}")
    keep = []
    for c in range(1, train.class_count + 1):
        rows = np.flatnonzero(train.y == c)
        if rows.size == 0:
            continue
        k = per_class_quota(fraction, rows.size)
        if k < 1:
            raise DataError(f"fraction {fraction} leaves no samples of class {c}")
        keep.append(np.sort(rng.choice(rows, size=k, replace=False)))
    return train.take(np.concatenate(keep))


def class_matrix(ds: Dataset, class_id: int) -> ClassMatrix:
    rows = ds.y == class_id
    if not np.any(rows):
        raise DataError(f"class {class_id} absent from dataset")
    return ClassMatrix(class_id, ds.X[rows])


def write_split_manifest(path: str | Path, train: Dataset, test: Dataset) -> None:
    entries = [(int(i), "train", int(c)) for i, c in zip(train.index, train.y)]
    entries += [(int(i), "test", int(c)) for i, c in zip(test.index, test.y)]
    entries.sort()
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_index", "split", "class"])
        w.writerows(entries)


def read_split_manifest(path: str | Path, ds: Dataset) -> tuple[Dataset, Dataset]:
    train, test = [], []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            idx = int(row["sample_index"])
            if idx >= len(ds) or int(ds.y[idx]) != int(row["class"]):
                raise DataError(f"manifest row {row} does not match the dataset")
            (train if row["split"] == "train" else test).append(idx)
    return ds.take(np.asarray(train, dtype=np.int64)), ds.take(np.asarray(test, dtype=np.int64))


# -- acquisition ---------------------------------------------------------------

def cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, Path.home() / ".cache" / "rssgan"))


def sha256_of(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class ChecksumError(DataError):
    def __init__(self, path: Path, expected: str, actual: str):
        self.expected, self.actual = expected, actual
        super().__init__(f"{path}: SHA-256 mismatch, expected {expected}, got {actual}")


def fetch(url: str, dest: str | Path, sha256: str | None = None, timeout: float = 60.0) -> Path:
    """Download ``url`` to ``dest`` unless a copy with the right digest is present.

    A mismatching download is moved aside to ``<dest>.quarantine`` and
    :class:`ChecksumError` is raised. Without an expected digest the file is
    accepted and its digest logged so it can be pinned in the config.
    """
    dest = Path(dest)
    if dest.exists():
        actual = sha256_of(dest)
        if sha256 is None or actual == sha256.lower():
            logger.info("using cached %s (sha256 %s)", dest, actual)
            return dest
        logger.warning("cached %s has digest %s, re-downloading", dest, actual)
    dest.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(dir=dest.parent, delete=False) as tmp:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            shutil.copyfileobj(resp, tmp)
    tmp_path = Path(tmp.name)
    actual = sha256_of(tmp_path)
    if sha256 is not None and actual != sha256.lower():
        quarantine = dest.with_name(dest.name + ".quarantine")
        tmp_path.replace(quarantine)
        raise ChecksumError(quarantine, sha256.lower(), actual)
    tmp_path.replace(dest)
    logger.info("fetched %s (sha256 %s)", dest, actual)
    return dest

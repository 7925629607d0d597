"""Room classifier: six dense layers, softmax output, trained with Adam on log loss."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, DataError, one_hot
from .nn import (
    PROB_CLAMP,
    AdamState,
    Mlp,
    TrainingError,
    adam_step,
    backward,
    cross_entropy_loss,
    forward,
    init_mlp,
    make_rng,
)


@dataclass
class ClassifierConfig:
    # Hidden widths; the softmax output layer is appended, so the default gives
    # six weight layers: 7 -> 64 -> 64 -> 32 -> 32 -> 16 -> 4.
    hidden: tuple[int, ...] = (64, 64, 32, 32, 16)
    hidden_activation: str = "relu"
    epochs: int = 300
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class EvalResult:
    accuracy: float  # percent
    log_loss: float
    confusion: np.ndarray  # rows: true class, cols: predicted class

    @property
    def n_total(self) -> int:
        return int(self.confusion.sum())

    @property
    def n_true(self) -> int:
        return int(np.trace(self.confusion))


@dataclass
class TrainedClassifier:
    params: Mlp
    trace: list[float] = field(default_factory=list)


def build_classifier(n_features: int, n_classes: int, cfg: ClassifierConfig, rng) -> Mlp:
    sizes = [n_features, *cfg.hidden, n_classes]
    acts = [cfg.hidden_activation] * len(cfg.hidden) + ["softmax"]
    return init_mlp(sizes, acts, rng)


def train_classifier(train: Dataset, cfg: ClassifierConfig) -> TrainedClassifier:
    """Minibatch Adam on mean cross-entropy; returns parameters and per-epoch loss."""
    if len(train) == 0:
        raise DataError("cannot train on an empty dataset")
    rng = make_rng(cfg.seed)
    params = build_classifier(train.feature_count, train.class_count, cfg, rng)
    state = AdamState.for_params(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    X, Y = train.X, one_hot(train.y, train.class_count)
    n = len(train)
    trace = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            rows = order[start : start + cfg.batch_size]
            probs, cache = forward(params, X[rows])
            loss = -float(np.sum(Y[rows] * np.log(np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP))))
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            total += loss
            grads, _ = backward(params, cache, (probs - Y[rows]) / rows.size, wrt_preactivation=True)
            try:
                adam_step(params, grads, state)
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch}, batch {b}: {exc}") from None
        trace.append(total / n)
    return TrainedClassifier(params, trace)


def predict(params: Mlp, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Class probabilities and 1-based argmax labels (ties go to the lowest index)."""
    probs, _ = forward(params, X)
    return probs, np.argmax(probs, axis=1) + 1


def evaluate(params: Mlp, test: Dataset) -> EvalResult:
    if len(test) == 0:
        raise DataError("cannot evaluate on an empty test set")
    probs, labels = predict(params, test.X)
    C = test.class_count
    confusion = np.zeros((C, C), dtype=np.int64)
    np.add.at(confusion, (test.y - 1, labels - 1), 1)
    return EvalResult(
        accuracy=100.0 * np.trace(confusion) / len(test),
        log_loss=cross_entropy_loss(probs, one_hot(test.y, C)),
        confusion=confusion,
    )


def write_eval_csv(path: str | Path, result: EvalResult) -> None:
    C = result.confusion.shape[0]
    header = ["accuracy", "log_loss"] + [
        f"confusion_{i}_{j}" for i in range(1, C + 1) for j in range(1, C + 1)
    ]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerow(
            [f"{result.accuracy:.6f}", f"{result.log_loss:.6f}"]
            + [int(v) for v in result.confusion.ravel()]
        )

"""Per-class vanilla GAN over standardized RSS fingerprints.

The discriminator ascends ``mean log D(x) + mean log(1 - D(G(z)))``; the
generator descends ``mean log(1 - D(G(z)))`` (the saturating form) or, when
``loss="non_saturating"``, ascends ``mean log D(G(z))`` instead. Each iteration
runs ``disc_steps`` discriminator updates followed by one generator update,
both with Adam, for a fixed iteration budget. ``D = 1/2`` is the equilibrium
and is tracked in the trace rather than used as a stopping rule.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import ClassMatrix, Dataset, DataError, class_matrix
from .nn import (
    PROB_CLAMP,
    AdamState,
    Mlp,
    TrainingError,
    adam_step,
    backward,
    forward,
    init_mlp,
    make_rng,
    mlp_from_dict,
    mlp_to_dict,
    sample_normal,
)

SATURATING = "saturating"
NON_SATURATING = "non_saturating"
TRACE_COLUMNS = ("iteration", "disc_loss", "gen_loss", "mean_d_real", "mean_d_fake")


@dataclass
class GanConfig:
    latent_dim: int = 16
    generator_hidden: tuple[int, ...] = (32, 32)
    discriminator_hidden: tuple[int, ...] = (32, 16)
    leaky_alpha: float = 0.2
    disc_steps: int = 1
    iterations: int = 3000
    batch_size: int = 32
    g_lr: float = 1e-3
    d_lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss: str = SATURATING
    seed: int = 0

    def __post_init__(self):
        self.generator_hidden = tuple(int(h) for h in self.generator_hidden)
        self.discriminator_hidden = tuple(int(h) for h in self.discriminator_hidden)
        if self.disc_steps < 1:
            raise ValueError("disc_steps must be >= 1")
        if self.iterations < 0 or self.batch_size < 1 or self.latent_dim < 1:
            raise ValueError("iterations >= 0, batch_size >= 1 and latent_dim >= 1 required")
        if self.loss not in (SATURATING, NON_SATURATING):
            raise ValueError(f"loss must be {SATURATING!r} or {NON_SATURATING!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["generator_hidden"] = list(self.generator_hidden)
        d["discriminator_hidden"] = list(self.discriminator_hidden)
        return d


@dataclass
class GanModel:
    generator: Mlp
    discriminator: Mlp
    class_id: int
    config: GanConfig
    # rows of (disc_loss, gen_loss, mean D(real), mean D(fake)), one per iteration
    trace: np.ndarray = field(default_factory=lambda: np.empty((0, 4)))

    @property
    def latent_dim(self) -> int:
        return self.generator.in_dim


@dataclass(frozen=True)
class SyntheticBlock:
    class_id: int
    values: np.ndarray  # P x M, standardized space


def build_networks(n_features: int, cfg: GanConfig, rng) -> tuple[Mlp, Mlp]:
    gh, dh = cfg.generator_hidden, cfg.discriminator_hidden
    generator = init_mlp(
        [cfg.latent_dim, *gh, n_features],
        ["leaky_relu"] * len(gh) + ["identity"],
        rng,
        alpha=cfg.leaky_alpha,
    )
    discriminator = init_mlp(
        [n_features, *dh, 1],
        ["leaky_relu"] * len(dh) + ["sigmoid"],
        rng,
        alpha=cfg.leaky_alpha,
    )
    return generator, discriminator


def _clamped(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Clamped probabilities and a mask of entries that were inside the window."""
    if not np.all(np.isfinite(d)) or np.any(d < 0.0) or np.any(d > 1.0):
        raise TrainingError("discriminator output left [0, 1]")
    inside = (d > PROB_CLAMP) & (d < 1.0 - PROB_CLAMP)
    return np.clip(d, PROB_CLAMP, 1.0 - PROB_CLAMP), inside


def disc_loss(theta_d: Mlp, real_batch: np.ndarray, fake_batch: np.ndarray) -> float:
    """``mean log D(real) + mean log(1 - D(fake))``; the discriminator maximizes it."""
    return disc_loss_and_grad(theta_d, real_batch, fake_batch)[0]


def disc_loss_and_grad(theta_d: Mlp, real_batch: np.ndarray, fake_batch: np.ndarray):
    """Discriminator objective, its gradient w.r.t. ``theta_d``, and mean D outputs.

    The gradient is that of the objective itself (ascent direction).
    """
    n_real = real_batch.shape[0]
    batch = np.vstack([real_batch, fake_batch])
    d, cache = forward(theta_d, batch)
    p, inside = _clamped(d)
    p_real, p_fake = p[:n_real], p[n_real:]
    value = float(np.mean(np.log(p_real)) + np.mean(np.log1p(-p_fake)))
    # gradient w.r.t. the sigmoid logit: (1 - D) for real rows, -D for fake rows
    g = np.empty_like(d)
    g[:n_real] = (1.0 - d[:n_real]) / n_real
    g[n_real:] = -d[n_real:] / fake_batch.shape[0]
    g *= inside
    grads, _ = backward(theta_d, cache, g, wrt_preactivation=True)
    return value, grads, float(d[:n_real].mean()), float(d[n_real:].mean())


def gen_loss(theta_g: Mlp, theta_d: Mlp, z_batch: np.ndarray, loss: str = SATURATING) -> float:
    """``mean log(1 - D(G(z)))`` (saturating) or ``-mean log D(G(z))``; G minimizes it."""
    return gen_loss_and_grad(theta_g, theta_d, z_batch, loss)[0]


def gen_loss_and_grad(theta_g: Mlp, theta_d: Mlp, z_batch: np.ndarray, loss: str = SATURATING):
    """Generator loss and its gradient w.r.t. ``theta_g`` only; ``theta_d`` is read-only."""
    fake, g_cache = forward(theta_g, z_batch)
    d, d_cache = forward(theta_d, fake)
    p, inside = _clamped(d)
    n = z_batch.shape[0]
    if loss == SATURATING:
        value = float(np.mean(np.log1p(-p)))
        g = -d / n
    elif loss == NON_SATURATING:
        value = -float(np.mean(np.log(p)))
        g = -(1.0 - d) / n
    else:
        raise ValueError(f"unknown generator loss {loss!r}")
    g *= inside
    _, grad_fake = backward(theta_d, d_cache, g, wrt_preactivation=True)
    grads, _ = backward(theta_g, g_cache, grad_fake)
    return value, grads


def _negate(grads):
    return [(-w, -b) for w, b in grads]


def train_gan(real: ClassMatrix, cfg: GanConfig) -> GanModel:
    """Alternating Adam training on one class's standardized fingerprints."""
    X = np.asarray(real.values, dtype=np.float64)
    K, M = X.shape
    if K < 1:
        raise DataError(f"class {real.class_id} has no samples")
    batch = min(cfg.batch_size, K)
    rng = make_rng(cfg.seed)
    generator, discriminator = build_networks(M, cfg, rng)
    hyper = dict(beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    d_state = AdamState.for_params(discriminator, lr=cfg.d_lr, **hyper)
    g_state = AdamState.for_params(generator, lr=cfg.g_lr, **hyper)
    trace = np.empty((cfg.iterations, 4))
    for it in range(cfg.iterations):
        try:
            for _ in range(cfg.disc_steps):
                real_batch = X[rng.choice(K, size=batch, replace=False)]
                fake_batch = forward(generator, sample_normal(rng, batch, cfg.latent_dim))[0]
                d_val, d_grads, d_real, d_fake = disc_loss_and_grad(
                    discriminator, real_batch, fake_batch
                )
                adam_step(discriminator, _negate(d_grads), d_state)
            z = sample_normal(rng, batch, cfg.latent_dim)
            g_val, g_grads = gen_loss_and_grad(generator, discriminator, z, cfg.loss)
            adam_step(generator, g_grads, g_state)
        except TrainingError as exc:
            raise TrainingError(
                f"class {real.class_id}, iteration {it}: {exc}; "
                f"disc_loss trace tail {trace[max(0, it - 5):it, 0].tolist()}, "
                f"gen_loss trace tail {trace[max(0, it - 5):it, 1].tolist()}"
            ) from None
        if not (np.isfinite(d_val) and np.isfinite(g_val)):
            raise TrainingError(
                f"class {real.class_id}, iteration {it}: non-finite loss "
                f"(disc {d_val}, gen {g_val}); disc_loss trace {trace[:it, 0].tolist()}, "
                f"gen_loss trace {trace[:it, 1].tolist()}"
            )
        trace[it] = (d_val, g_val, d_real, d_fake)
    return GanModel(generator, discriminator, real.class_id, cfg, trace)


def generate(model: GanModel, count: int, rng: np.random.Generator) -> SyntheticBlock:
    if count < 0:
        raise ValueError("count must be >= 0")
    if len(model.trace) == 0:
        raise ValueError(f"GAN for class {model.class_id} has not been trained")
    if count == 0:
        return SyntheticBlock(model.class_id, np.empty((0, model.generator.out_dim)))
    values = forward(model.generator, sample_normal(rng, count, model.latent_dim))[0]
    return SyntheticBlock(model.class_id, values)


def augment(real: ClassMatrix, synth: SyntheticBlock) -> ClassMatrix:
    """Stack real rows above synthetic rows for one class."""
    if real.class_id != synth.class_id:
        raise DataError(f"class mismatch: real {real.class_id}, synthetic {synth.class_id}")
    if synth.values.shape[0] and synth.values.shape[1] != real.values.shape[1]:
        raise DataError(
            f"feature mismatch: real has {real.values.shape[1]}, synthetic {synth.values.shape[1]}"
        )
    return ClassMatrix(real.class_id, np.vstack([real.values, synth.values.reshape(-1, real.values.shape[1])]))


def class_seed(seed: int, class_id: int) -> int:
    """Per-class stream: the master seed XOR the class id."""
    return int(seed) ^ int(class_id)


def train_class_gans(train: Dataset, cfg: GanConfig, seed: int, classes=None) -> dict[int, GanModel]:
    """One independent GAN per class, each seeing only its own class's rows."""
    classes = classes or range(1, train.class_count + 1)
    models = {}
    for c in classes:
        c_cfg = GanConfig(**{**cfg.to_dict(), "seed": class_seed(seed, c)})
        models[c] = train_gan(class_matrix(train, c), c_cfg)
    return models


def augment_dataset(
    train: Dataset, models: dict[int, GanModel], counts: dict[int, int], seed: int
) -> Dataset:
    """Real training set plus ``counts[c]`` synthetic rows per class (real rows first).

    Synthetic rows get index -1. Generation for class ``c`` uses the stream
    ``class_seed(seed, c)`` so the same count always yields the same rows.
    """
    X, y, index = [], [], []
    for c in range(1, train.class_count + 1):
        rows = train.y == c
        real = ClassMatrix(c, train.X[rows])
        p = counts.get(c, 0)
        if p:
            block = generate(models[c], p, make_rng(class_seed(seed, c)))
        else:
            block = SyntheticBlock(c, np.empty((0, train.feature_count)))
        full = augment(real, block)
        X.append(full.values)
        y.append(np.full(full.values.shape[0], c, dtype=np.int64))
        index.append(np.concatenate([train.index[rows], np.full(p, -1, dtype=np.int64)]))
    return Dataset(np.vstack(X), np.concatenate(y), np.concatenate(index), train.class_count)


# -- persistence ---------------------------------------------------------------

GAN_FORMAT = "rssgan-gan"
GAN_VERSION = 1


def save_gan(model: GanModel, path: str | Path) -> None:
    doc = {
        "format": GAN_FORMAT,
        "version": GAN_VERSION,
        "class_id": model.class_id,
        "config": model.config.to_dict(),
        "iterations_trained": int(len(model.trace)),
        "generator": mlp_to_dict(model.generator),
        "discriminator": mlp_to_dict(model.discriminator),
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_gan(path: str | Path, trace_path: str | Path | None = None) -> GanModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != GAN_FORMAT or doc.get("version") != GAN_VERSION:
        raise ValueError(f"{path} is not a version {GAN_VERSION} {GAN_FORMAT} file")
    trace = read_trace_csv(trace_path) if trace_path else np.empty((0, 4))
    if trace_path is None and doc.get("iterations_trained"):
        # trace not requested; keep a placeholder so the model counts as trained
        trace = np.full((doc["iterations_trained"], 4), np.nan)
    return GanModel(
        mlp_from_dict(doc["generator"]),
        mlp_from_dict(doc["discriminator"]),
        int(doc["class_id"]),
        GanConfig(**doc["config"]),
        trace,
    )


def write_trace_csv(path: str | Path, model: GanModel) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for i, row in enumerate(model.trace):
            w.writerow([i] + [repr(float(v)) for v in row])


def read_trace_csv(path: str | Path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = [[float(r[k]) for k in TRACE_COLUMNS[1:]] for r in csv.DictReader(fh)]
    return np.asarray(rows, dtype=np.float64).reshape(-1, 4)

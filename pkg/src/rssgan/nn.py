"""Dense multilayer perceptron engine: forward/backward passes, losses and Adam.

Everything operates on float64 numpy arrays of shape ``(batch, features)``.
Parameters live in :class:`Mlp`, a chain of :class:`DenseLayer` objects; the
same engine backs the room classifier, the generator and the discriminator.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

PROB_CLAMP = 1e-7
MODEL_FORMAT = "rssgan-mlp"
MODEL_VERSION = 1


class ShapeError(ValueError):
    """Raised when array dimensions do not chain through a network."""

    def __init__(self, message: str, layer: int | None = None):
        self.layer = layer
        prefix = f"layer {layer}: " if layer is not None else ""
        super().__init__(prefix + message)


class TrainingError(RuntimeError):
    """Raised when a loss or gradient stops being finite during training."""


class Activation(str, Enum):
    RELU = "relu"
    LEAKY_RELU = "leaky_relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    SOFTMAX = "softmax"
    IDENTITY = "identity"


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class DenseLayer:
    weights: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray  # (out_dim,)
    activation: Activation = Activation.IDENTITY
    alpha: float = 0.2  # LeakyReLU negative slope

    def __post_init__(self):
        self.activation = Activation(self.activation)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ShapeError(
                f"weights {self.weights.shape} and bias {self.bias.shape} disagree"
            )
        if self.activation is Activation.LEAKY_RELU and not 0.0 < self.alpha < 1.0:
            raise ValueError(f"LeakyReLU alpha must lie in (0, 1), got {self.alpha}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    def activate(self, z: np.ndarray) -> np.ndarray:
        act = self.activation
        if act is Activation.RELU:
            return np.maximum(z, 0.0)
        if act is Activation.LEAKY_RELU:
            return np.where(z > 0, z, self.alpha * z)
        if act is Activation.SIGMOID:
            return sigmoid(z)
        if act is Activation.TANH:
            return np.tanh(z)
        if act is Activation.SOFTMAX:
            return softmax(z)
        return z

    def activation_vjp(self, z: np.ndarray, a: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Pull ``dL/da`` back to ``dL/dz`` for this layer's nonlinearity."""
        act = self.activation
        if act is Activation.RELU:
            return grad * (z > 0)
        if act is Activation.LEAKY_RELU:
            return grad * np.where(z > 0, 1.0, self.alpha)
        if act is Activation.SIGMOID:
            return grad * a * (1.0 - a)
        if act is Activation.TANH:
            return grad * (1.0 - a * a)
        if act is Activation.SOFTMAX:
            return a * (grad - np.sum(grad * a, axis=1, keepdims=True))
        return grad


@dataclass
class Mlp:
    """Ordered chain of dense layers (one parameter set: classifier, G or D)."""

    layers: list[DenseLayer] = field(default_factory=list)

    def __post_init__(self):
        for i in range(1, len(self.layers)):
            if self.layers[i - 1].out_dim != self.layers[i].in_dim:
                raise ShapeError(
                    f"expects {self.layers[i].in_dim} inputs but previous layer "
                    f"emits {self.layers[i - 1].out_dim}",
                    layer=i,
                )
        # Pack every weight and bias into one buffer and rebind the layers to
        # views of it, so optimizers can update the whole set in one shot.
        self.flat = np.concatenate([a.ravel() for a in self.arrays()]) if self.layers else np.empty(0)
        offset = 0
        for layer in self.layers:
            n = layer.weights.size
            layer.weights = self.flat[offset : offset + n].reshape(layer.weights.shape)
            offset += n
            layer.bias = self.flat[offset : offset + layer.out_dim]
            offset += layer.out_dim

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def sizes(self) -> list[int]:
        return [self.in_dim] + [layer.out_dim for layer in self.layers]

    def arrays(self) -> list[np.ndarray]:
        """Flat list of parameter arrays, ``[W0, b0, W1, b1, ...]``."""
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.bias))
        return out

    def copy(self) -> "Mlp":
        return Mlp(
            [
                DenseLayer(l.weights.copy(), l.bias.copy(), l.activation, l.alpha)
                for l in self.layers
            ]
        )


def init_mlp(
    sizes: list[int],
    activations: list[Activation | str],
    rng: np.random.Generator,
    alpha: float = 0.2,
) -> Mlp:
    """Build a network with ``len(sizes) - 1`` layers.

    Weights are uniform: He fan-in scaling for (leaky) ReLU layers, Xavier
    otherwise. Biases start at zero.
    """
    if len(activations) != len(sizes) - 1:
        raise ValueError(
            f"{len(sizes) - 1} layers need {len(sizes) - 1} activations, got {len(activations)}"
        )
    layers = []
    for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
        act = Activation(act)
        if act in (Activation.RELU, Activation.LEAKY_RELU):
            limit = np.sqrt(6.0 / fan_in)
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        layers.append(DenseLayer(w, np.zeros(fan_out), act, alpha))
    return Mlp(layers)


@dataclass
class ForwardCache:
    """Per-layer inputs, pre-activations and activations from one forward pass."""

    params_id: int
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    post: list[np.ndarray]


def forward(params: Mlp, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    cache = ForwardCache(id(params), [], [], [])
    a = x
    for i, layer in enumerate(params.layers):
        if a.shape[1] != layer.in_dim:
            raise ShapeError(
                f"got {a.shape[1]} input columns, expected {layer.in_dim}", layer=i
            )
        cache.inputs.append(a)
        z = a @ layer.weights + layer.bias
        a = layer.activate(z)
        cache.pre.append(z)
        cache.post.append(a)
    return a, cache


def predict_proba(params: Mlp, x: np.ndarray) -> np.ndarray:
    return forward(params, x)[0]


def backward(
    params: Mlp,
    cache: ForwardCache,
    loss_grad: np.ndarray,
    wrt_preactivation: bool = False,
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Backpropagate through the network.

    ``loss_grad`` is dL/d(output) by default. With ``wrt_preactivation=True`` it
    is taken as dL/d(last pre-activation) instead, which is how the fused
    softmax + cross-entropy gradient ``(y_hat - y)`` is fed in.

    Returns ``[(dW, db), ...]`` in layer order and dL/d(input).
    """
    if cache.params_id != id(params) or len(cache.pre) != len(params.layers):
        raise ValueError("forward cache does not belong to these parameters")
    g = np.asarray(loss_grad, dtype=np.float64)
    if g.shape != cache.post[-1].shape:
        raise ShapeError(
            f"loss gradient shape {g.shape} != output shape {cache.post[-1].shape}",
            layer=len(params.layers) - 1,
        )
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params.layers)  # type: ignore[list-item]
    for i in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[i]
        if not (wrt_preactivation and i == len(params.layers) - 1):
            g = layer.activation_vjp(cache.pre[i], cache.post[i], g)
        grads[i] = (cache.inputs[i].T @ g, g.sum(axis=0))
        g = g @ layer.weights.T
    return grads, g


def cross_entropy_loss(
    predicted: np.ndarray, labels: np.ndarray, reduction: str = "mean"
) -> float:
    """Categorical log loss with natural log and a [1e-7, 1 - 1e-7] clamp.

    ``reduction="sum"`` gives the summed form over observations; the default
    per-sample mean is what gets reported and trained on.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if predicted.shape != labels.shape:
        raise ShapeError(f"predictions {predicted.shape} vs labels {labels.shape}")
    if np.any(predicted < -1e-12) or np.any(predicted > 1 + 1e-12) or not np.all(
        np.isfinite(predicted)
    ):
        raise ValueError("predicted probabilities must lie in [0, 1]")
    p = np.clip(predicted, PROB_CLAMP, 1.0 - PROB_CLAMP)
    total = -float(np.sum(labels * np.log(p)))
    if reduction == "sum":
        return total
    if reduction == "mean":
        return total / predicted.shape[0]
    raise ValueError(f"unknown reduction {reduction!r}")


@dataclass
class AdamState:
    """Adam moments over the packed parameter vector of one network (``Mlp.flat``)."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Mlp, **hyper) -> "AdamState":
        return cls(np.zeros_like(params.flat), np.zeros_like(params.flat), **hyper)


def flatten_grads(grads: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    return np.concatenate([g.ravel() for pair in grads for g in pair])


def adam_step(
    params: Mlp, grads: list[tuple[np.ndarray, np.ndarray]], state: AdamState
) -> tuple[Mlp, AdamState]:
    """One bias-corrected Adam update, applied in place to ``params`` and ``state``."""
    if len(grads) != len(params.layers) or any(
        gw.shape != layer.weights.shape or gb.shape != layer.bias.shape
        for (gw, gb), layer in zip(grads, params.layers)
    ):
        raise ShapeError("gradient shapes do not mirror the parameters")
    g = flatten_grads(grads)
    if not np.isfinite(g.sum()):
        raise TrainingError(f"non-finite gradient at Adam step {state.t + 1}")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    m, v = state.m, state.v
    m *= state.beta1
    m += (1.0 - state.beta1) * g
    v *= state.beta2
    v += (1.0 - state.beta2) * (g * g)
    params.flat -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


def make_rng(seed) -> np.random.Generator:
    """numpy PCG64 generator; ``seed`` may be an int or a sequence of ints."""
    return np.random.Generator(np.random.PCG64(seed))


def sample_normal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ValueError(f"shape must be positive, got ({rows}, {cols})")
    return rng.standard_normal((rows, cols))


# -- serialization -----------------------------------------------------------

def mlp_to_dict(params: Mlp) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "layers": [
            {
                "in_dim": layer.in_dim,
                "out_dim": layer.out_dim,
                "activation": layer.activation.value,
                "alpha": layer.alpha,
                "weights": layer.weights.ravel(order="C").tolist(),
                "bias": layer.bias.tolist(),
            }
            for layer in params.layers
        ],
    }


def mlp_from_dict(d: dict) -> Mlp:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a {MODEL_FORMAT} document")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')}")
    layers = []
    for i, spec in enumerate(d["layers"]):
        w = np.asarray(spec["weights"], dtype=np.float64)
        if w.size != spec["in_dim"] * spec["out_dim"]:
            raise ShapeError("weight count does not match declared dims", layer=i)
        layers.append(
            DenseLayer(
                w.reshape(spec["in_dim"], spec["out_dim"]),
                np.asarray(spec["bias"], dtype=np.float64),
                spec["activation"],
                spec.get("alpha", 0.2),
            )
        )
    return Mlp(layers)


def save_mlp(params: Mlp, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mlp_to_dict(params)) + "\n")


def load_mlp(path: str | Path) -> Mlp:
    return mlp_from_dict(json.loads(Path(path).read_text()))

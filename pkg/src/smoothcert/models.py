"""Base classifiers: a ReLU MLP, an analytic halfspace classifier, a lookup table.

All models map a batch ``X`` of shape (N, d) to class scores. ``soft`` returns
softmax probabilities and ``predict`` the hard label (argmax, ties to the
lowest index). The MLP and linear models also expose ``forward``/``backward``
for training and input-gradient attacks.
"""

import json
import math
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .special import std_normal_cdf

__all__ = [
    "MODEL_FORMAT_VERSION",
    "softmax",
    "log_softmax",
    "MLP",
    "LinearClassifier",
    "TableClassifier",
    "plug_in_smoothed_score",
    "exact_smoothed_prob_linear",
    "true_robust_radius",
    "model_from_dict",
    "save_model",
    "load_model",
]

MODEL_FORMAT_VERSION = 1


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _as_batch(X, input_dim: int) -> Tuple[np.ndarray, bool]:
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != input_dim:
        raise ValueError(f"expected input dimension {input_dim}, got shape {X.shape}")
    return X, single


class _Differentiable:
    input_dim: int
    num_classes: int

    def logits(self, X) -> np.ndarray:
        X, single = _as_batch(X, self.input_dim)
        out, _ = self.forward(X)
        return out[0] if single else out

    def soft(self, X) -> np.ndarray:
        return softmax(self.logits(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.logits(X), axis=-1)

    def save(self, path) -> None:
        save_model(self, path)


class MLP(_Differentiable):
    """Fully connected ReLU network; weights stored as (out, in) matrices."""

    activation = "relu"

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        self.weights = [np.array(W, dtype=np.float64) for W in weights]
        self.biases = [np.array(b, dtype=np.float64).reshape(-1) for b in biases]
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or W.shape[0] != b.shape[0]:
                raise ValueError(f"layer {i}: weight {W.shape} and bias {b.shape} disagree")
            if i and W.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i}: input width {W.shape[1]} does not chain")
        self.input_dim = self.weights[0].shape[1]
        self.num_classes = self.weights[-1].shape[0]
        if self.num_classes < 2:
            raise ValueError("a classifier needs at least two classes")

    @classmethod
    def init(cls, dims: Sequence[int], rng: np.random.Generator) -> "MLP":
        """He-normal weights and zero biases for layer widths ``dims``."""
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            weights.append(rng.standard_normal((fan_out, fan_in)) * math.sqrt(2.0 / fan_in))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def params(self) -> List[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    @property
    def dims(self) -> List[int]:
        return [self.input_dim] + [W.shape[0] for W in self.weights]

    def copy(self) -> "MLP":
        return MLP([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def forward(self, X: np.ndarray):
        acts = [X]
        h = X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ W.T + b
            if i < last:
                h = np.maximum(h, 0.0)
                acts.append(h)
        return h, acts

    def backward(self, acts, dlogits: np.ndarray):
        """Gradients w.r.t. ``params`` (same order) and w.r.t. the input."""
        grads = [None] * (2 * len(self.weights))
        g = dlogits
        for i in range(len(self.weights) - 1, -1, -1):
            a = acts[i]
            grads[2 * i] = g.T @ a
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i]
            if i > 0:
                g = g * (a > 0.0)
        return grads, g

    def to_dict(self) -> dict:
        return {
            "version": MODEL_FORMAT_VERSION,
            "variant": "mlp",
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "activation": self.activation,
            "layers": [
                {"rows": W.shape[0], "cols": W.shape[1],
                 "weights": W.ravel().tolist(), "bias": b.tolist()}
                for W, b in zip(self.weights, self.biases)
            ],
        }


class LinearClassifier(_Differentiable):
    """Two-class halfspace ``sign(w.x + b)`` with logits ``(-(w.x+b), w.x+b)``."""

    num_classes = 2

    def __init__(self, w, b: float):
        self.w = np.array(w, dtype=np.float64).reshape(-1)
        self.b = np.array(float(b))
        self.input_dim = self.w.shape[0]

    @property
    def params(self) -> List[np.ndarray]:
        return [self.w, self.b]

    def copy(self) -> "LinearClassifier":
        return LinearClassifier(self.w.copy(), float(self.b))

    def margin(self, X) -> np.ndarray:
        X, single = _as_batch(X, self.input_dim)
        s = X @ self.w + self.b
        return s[0] if single else s

    def forward(self, X: np.ndarray):
        s = X @ self.w + self.b
        return np.stack([-s, s], axis=1), X

    def backward(self, X, dlogits: np.ndarray):
        ds = dlogits[:, 1] - dlogits[:, 0]
        return [ds @ X, np.array(ds.sum())], np.outer(ds, self.w)

    def predict(self, X) -> np.ndarray:
        return (self.margin(X) > 0.0).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "version": MODEL_FORMAT_VERSION,
            "variant": "linear",
            "input_dim": self.input_dim,
            "num_classes": 2,
            "w": self.w.tolist(),
            "b": float(self.b),
        }


class TableClassifier:
    """Nearest-neighbour lookup over stored points; scores are one-hot.

    A single stored point gives a constant classifier.
    """

    def __init__(self, points, labels, num_classes: int):
        self.points = np.atleast_2d(np.array(points, dtype=np.float64))
        self.labels = np.array(labels, dtype=np.int64).reshape(-1)
        if self.points.shape[0] != self.labels.shape[0] or self.labels.size == 0:
            raise ValueError("need one label per stored point")
        if num_classes < 2 or self.labels.min() < 0 or self.labels.max() >= num_classes:
            raise ValueError("labels must lie in [0, num_classes) with num_classes >= 2")
        self.input_dim = self.points.shape[1]
        self.num_classes = int(num_classes)

    @classmethod
    def constant(cls, label: int, input_dim: int, num_classes: int) -> "TableClassifier":
        return cls(np.zeros((1, input_dim)), [label], num_classes)

    def predict(self, X) -> np.ndarray:
        X, single = _as_batch(X, self.input_dim)
        if self.points.shape[0] == 1:
            out = np.full(X.shape[0], self.labels[0], dtype=np.int64)
        else:
            d2 = ((X[:, None, :] - self.points[None, :, :]) ** 2).sum(axis=-1)
            out = self.labels[np.argmin(d2, axis=1)]
        return out[0] if single else out

    def soft(self, X) -> np.ndarray:
        return np.eye(self.num_classes)[self.predict(X)]

    def save(self, path) -> None:
        save_model(self, path)

    def to_dict(self) -> dict:
        return {
            "version": MODEL_FORMAT_VERSION,
            "variant": "table",
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "points": self.points.tolist(),
            "labels": self.labels.tolist(),
        }


def plug_in_smoothed_score(model, x, noise) -> np.ndarray:
    """Average soft score over the perturbed inputs ``x + noise[j]``."""
    noise = np.atleast_2d(np.asarray(noise, dtype=np.float64))
    return model.soft(np.asarray(x, dtype=np.float64)[None, :] + noise).mean(axis=0)


def exact_smoothed_prob_linear(w, b: float, x, sigma: float) -> float:
    """P(w.(x+delta) + b > 0) for delta ~ N(0, sigma^2 I)."""
    w = np.asarray(w, dtype=np.float64)
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        raise ValueError("weight vector must be non-zero")
    return std_normal_cdf((float(w @ np.asarray(x, dtype=np.float64)) + b) / (sigma * norm))


def true_robust_radius(w, b: float, x) -> float:
    """l2 distance from ``x`` to the hyperplane w.x + b = 0."""
    w = np.asarray(w, dtype=np.float64)
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        raise ValueError("weight vector must be non-zero")
    return abs(float(w @ np.asarray(x, dtype=np.float64)) + b) / norm


def model_from_dict(doc: dict):
    version = doc.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version!r}")
    variant = doc.get("variant")
    if variant == "mlp":
        if doc.get("activation", "relu") != "relu":
            raise ValueError(f"unsupported activation {doc['activation']!r}")
        weights, biases = [], []
        for layer in doc["layers"]:
            W = np.array(layer["weights"], dtype=np.float64).reshape(layer["rows"], layer["cols"])
            weights.append(W)
            biases.append(np.array(layer["bias"], dtype=np.float64))
        model = MLP(weights, biases)
    elif variant == "linear":
        model = LinearClassifier(doc["w"], doc["b"])
    elif variant == "table":
        model = TableClassifier(doc["points"], doc["labels"], doc["num_classes"])
    else:
        raise ValueError(f"unknown model variant {variant!r}")
    if model.input_dim != doc["input_dim"] or model.num_classes != doc["num_classes"]:
        raise ValueError("model header disagrees with its parameters")
    return model


def save_model(model, path) -> None:
    # json writes shortest round-trip float reprs, so reloads are bit-exact.
    Path(path).write_text(json.dumps(model.to_dict(), indent=1) + "\n", encoding="utf-8")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

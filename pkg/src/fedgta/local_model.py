"""Decoupled local learner: precomputed propagation plus a softmax classifier."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import SparseGraph, normalize
from .seeding import rng_for

MODES = ("sgc", "s2gc", "gbp")


@dataclass(frozen=True)
class PrecomputeConfig:
    mode: str = "sgc"
    steps: int = 2
    kernel_coefficient: float = 0.5
    gbp_beta: float = 0.5

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown propagation mode {self.mode!r}; expected one of {MODES}")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if not 0.0 < self.gbp_beta < 1.0:
            raise ValueError("gbp_beta must lie in (0, 1)")
        if not 0.0 <= self.kernel_coefficient <= 1.0:
            raise ValueError("kernel_coefficient must lie in [0, 1]")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    local_epochs: int = 3
    weight_decay: float = 0.0
    prox_mu: float = 0.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be >= 1")
        if self.weight_decay < 0 or self.prox_mu < 0:
            raise ValueError("weight_decay and prox_mu must be >= 0")


def precompute_features(graph: SparseGraph, cfg: PrecomputeConfig) -> np.ndarray:
    """Propagated features for the chosen mode.

    sgc: A^k X.  s2gc: mean of A^l X over l = 0..k.  gbp: sum of
    beta (1 - beta)^l A^l X over l = 0..k, so k = 0 gives beta X.
    """
    adj = normalize(graph, cfg.kernel_coefficient, self_loops=True)
    x = graph.features.astype(np.float64)
    if cfg.mode == "sgc":
        for _ in range(cfg.steps):
            x = adj @ x
        return x
    beta = cfg.gbp_beta
    acc = x.copy() if cfg.mode == "s2gc" else beta * x
    for level in range(1, cfg.steps + 1):
        x = adj @ x
        acc += x if cfg.mode == "s2gc" else beta * (1.0 - beta) ** level * x
    if cfg.mode == "s2gc":
        acc /= cfg.steps + 1
    return acc


@dataclass
class LinearModelWeights:
    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError(f"bias shape {self.bias.shape} incompatible with weight {self.weight.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.weight.shape

    def copy(self) -> "LinearModelWeights":
        return LinearModelWeights(self.weight.copy(), self.bias.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias)))

    def to_bytes(self) -> bytes:
        f, c = self.weight.shape
        return (np.array([f, c], dtype="<u8").tobytes()
                + self.weight.astype("<f8").tobytes(order="C")
                + self.bias.astype("<f8").tobytes())

    @classmethod
    def from_bytes(cls, buf: bytes, offset: int = 0) -> tuple["LinearModelWeights", int]:
        """Decode weights starting at ``offset``; returns them and the end offset."""
        f, c = (int(v) for v in np.frombuffer(buf, dtype="<u8", count=2, offset=offset))
        offset += 16
        weight = np.frombuffer(buf, dtype="<f8", count=f * c, offset=offset).reshape(f, c)
        offset += 8 * f * c
        bias = np.frombuffer(buf, dtype="<f8", count=c, offset=offset)
        offset += 8 * c
        return cls(weight.astype(np.float64), bias.astype(np.float64)), offset

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "LinearModelWeights":
        buf = Path(path).read_bytes()
        weights, end = cls.from_bytes(buf)
        if end != len(buf):
            raise ValueError(f"{path}: {len(buf) - end} trailing bytes after weight payload")
        return weights


def init_weights(num_features: int, num_classes: int, seed: int) -> LinearModelWeights:
    bound = 1.0 / np.sqrt(num_features)
    rng = rng_for(seed, "init")
    weight = rng.uniform(-bound, bound, size=(num_features, num_classes))
    bias = rng.uniform(-bound, bound, size=num_classes)
    return LinearModelWeights(weight, bias)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    np.exp(shifted, out=shifted)
    shifted /= shifted.sum(axis=1, keepdims=True)
    return shifted


def forward(weights: LinearModelWeights, features: np.ndarray) -> np.ndarray:
    features = np.atleast_2d(features)
    if features.shape[1] != weights.weight.shape[0]:
        raise ValueError(f"features have {features.shape[1]} columns, weights expect {weights.weight.shape[0]}")
    return softmax(features @ weights.weight + weights.bias)


def _one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def loss_and_grad(
    weights: LinearModelWeights,
    global_ref: LinearModelWeights,
    features: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
) -> tuple[float, LinearModelWeights]:
    """Mean cross-entropy over the given rows plus decay and proximal terms.

    Weight decay applies to the weight matrix only; the proximal term
    covers weight and bias.
    """
    probs = forward(weights, features)
    b = len(labels)
    target = _one_hot(labels, weights.shape[1])
    picked = np.maximum(probs[np.arange(b), labels], 1e-300)
    dw_diff = weights.weight - global_ref.weight
    db_diff = weights.bias - global_ref.bias
    loss = (-np.mean(np.log(picked))
            + 0.5 * cfg.weight_decay * np.sum(weights.weight ** 2)
            + 0.5 * cfg.prox_mu * (np.sum(dw_diff ** 2) + np.sum(db_diff ** 2)))
    delta = (probs - target) / b
    grad_w = features.T @ delta + cfg.weight_decay * weights.weight + cfg.prox_mu * dw_diff
    grad_b = delta.sum(axis=0) + cfg.prox_mu * db_diff
    return float(loss), LinearModelWeights(grad_w, grad_b)


def stability_bound(features: np.ndarray, cfg: TrainConfig) -> float:
    """Largest step size for which a gradient step cannot increase the loss.

    Row norms include the constant bias input.
    """
    radius_sq = float(np.max(np.sum(features ** 2, axis=1))) + 1.0
    return 1.0 / (radius_sq / 4.0 + cfg.weight_decay + cfg.prox_mu)


def train_local(
    weights_in: LinearModelWeights,
    global_ref: LinearModelWeights,
    features: np.ndarray,
    labels: np.ndarray,
    train_mask: np.ndarray,
    cfg: TrainConfig,
) -> LinearModelWeights:
    """Run ``cfg.local_epochs`` full-batch gradient steps on the train rows."""
    train_mask = np.asarray(train_mask, dtype=bool)
    if not train_mask.any():
        raise ValueError("train_local needs at least one train-masked node")
    x = features[train_mask]
    y = np.asarray(labels)[train_mask]
    w = weights_in.copy()
    for _ in range(cfg.local_epochs):
        _, grad = loss_and_grad(w, global_ref, x, y, cfg)
        w.weight -= cfg.learning_rate * grad.weight
        w.bias -= cfg.learning_rate * grad.bias
    return w


def predict(weights: LinearModelWeights, features: np.ndarray) -> np.ndarray:
    # argmax returns the first maximum, i.e. ties go to the lowest class index
    return np.argmax(features @ weights.weight + weights.bias, axis=1)


def evaluate(weights: LinearModelWeights, features: np.ndarray, labels, mask) -> float:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("evaluate needs a non-empty mask")
    return float(np.mean(predict(weights, features[mask]) == np.asarray(labels)[mask]))


def count_correct(weights: LinearModelWeights, features: np.ndarray, labels, mask) -> tuple[int, int]:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return 0, 0
    hits = predict(weights, features[mask]) == np.asarray(labels)[mask]
    return int(hits.sum()), int(mask.sum())

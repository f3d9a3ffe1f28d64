"""Client-side topology metrics uploaded alongside model weights.

A client propagates its own soft predictions over its subgraph
(parameter-free label propagation), scores how sharp the propagated
predictions are (smoothing confidence) and summarises their shape with
per-step central moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import SparseGraph, normalize
from .local_model import LinearModelWeights

INV_E = math.exp(-1.0)


@dataclass
class SoftLabelSequence:
    steps: list[np.ndarray]
    alpha: float

    @property
    def k(self) -> int:
        return len(self.steps) - 1

    @property
    def final(self) -> np.ndarray:
        return self.steps[-1]


def nonparam_lp(
    graph: SparseGraph, initial_soft_labels, alpha: float = 0.5, k: int = 5, self_loop: bool = True
) -> SoftLabelSequence:
    """k-step label propagation ``Y_s = alpha Y_0 + (1 - alpha) S Y_{s-1}``.

    ``S = D^-1/2 A D^-1/2`` with degrees counted including a self-loop.
    With ``self_loop`` the node itself joins its neighbour sum (A + I);
    without it only true neighbours contribute.
    """
    if not 0.0 <= alpha <= 1.0 or math.isnan(alpha):
        raise ValueError(f"alpha={alpha} outside [0, 1]")
    if k < 0:
        raise ValueError("k must be >= 0")
    y0 = np.asarray(initial_soft_labels, dtype=np.float64)
    if y0.shape[0] != graph.num_nodes:
        raise ValueError("initial soft labels must have one row per node")
    adj = normalize(graph, 0.5, self_loops=True)
    steps = [y0]
    for _ in range(k):
        prev = steps[-1]
        spread = adj @ prev
        if not self_loop:
            spread -= prev / adj.degrees[:, None]
        # written so that spread == y0 reproduces y0 bit for bit
        steps.append(y0 + (1.0 - alpha) * (spread - y0))
    return SoftLabelSequence(steps, float(alpha))


def confidence_terms(probs: np.ndarray) -> np.ndarray:
    """Per-entry ``e^-1 - (-p log p)``, each in ``[0, e^-1]``.

    Entries above 1 (possible after symmetric propagation) are clipped to 1.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if np.any(probs < 0) or np.any(np.isnan(probs)):
        raise ValueError("probability entries must be non-negative")
    p = np.minimum(probs, 1.0)
    plogp = np.where(p > 0, p * np.log(np.maximum(p, 1e-300)), 0.0)
    terms = INV_E + plogp
    assert terms.min(initial=0.0) > -1e-15 and terms.max(initial=0.0) < INV_E + 1e-15
    return np.clip(terms, 0.0, INV_E)


def smoothing_confidence(seq: SoftLabelSequence | np.ndarray, degrees) -> float:
    """Degree-weighted sum of confidence terms over the final propagation step."""
    final = seq.final if isinstance(seq, SoftLabelSequence) else np.asarray(seq)
    degrees = np.asarray(degrees, dtype=np.float64)
    return float(degrees @ confidence_terms(final).sum(axis=1))


def mixed_moments(seq: SoftLabelSequence, order: int) -> np.ndarray:
    """Central moments of the propagated steps, flattened ``(k, K, c)``.

    Each node is centred on its own mean over classes; the expectation is
    the mean over nodes. Values are sorted before summation so that the
    result is exactly invariant to node order.
    """
    if order < 1:
        raise ValueError("moment order K must be >= 1")
    if seq.k < 1:
        raise ValueError("moments need at least one propagated step")
    n = seq.steps[0].shape[0]
    out = []
    for y in seq.steps[1:]:
        mu = y.mean(axis=1)
        # a constant row's float mean can miss its value by an ulp; centre it exactly
        flat = np.ptp(y, axis=1) == 0
        mu[flat] = y[flat, 0]
        centred = y - mu[:, None]
        power = np.ones_like(centred)
        for _ in range(order):
            power = power * centred
            out.append(np.sort(power, axis=0).sum(axis=0) / n)
    return np.concatenate(out)


@dataclass
class ClientReport:
    client_id: int
    weights: LinearModelWeights
    sample_count: int
    confidence: float
    moments: np.ndarray

    def __post_init__(self):
        self.moments = np.asarray(self.moments, dtype=np.float64)
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if not self.confidence >= 0:
            raise ValueError("confidence must be >= 0")
        if not np.all(np.isfinite(self.moments)):
            raise ValueError("moments must be finite")

    def to_bytes(self) -> bytes:
        return (self.weights.to_bytes()
                + np.array([self.confidence], dtype="<f8").tobytes()
                + np.array([len(self.moments)], dtype="<u8").tobytes()
                + self.moments.astype("<f8").tobytes())

    @classmethod
    def from_bytes(cls, buf: bytes, client_id: int, sample_count: int) -> "ClientReport":
        # client id and sample count are not part of the payload
        weights, off = LinearModelWeights.from_bytes(buf)
        confidence = float(np.frombuffer(buf, dtype="<f8", count=1, offset=off)[0])
        length = int(np.frombuffer(buf, dtype="<u8", count=1, offset=off + 8)[0])
        off += 16
        if len(buf) != off + 8 * length:
            raise ValueError(f"report payload size mismatch: {len(buf)} bytes, expected {off + 8 * length}")
        moments = np.frombuffer(buf, dtype="<f8", count=length, offset=off).copy()
        return cls(client_id, weights, sample_count, confidence, moments)


def build_report(
    client_id: int,
    weights: LinearModelWeights,
    graph: SparseGraph,
    predictions: np.ndarray,
    alpha: float = 0.5,
    k: int = 5,
    moment_order: int = 5,
) -> ClientReport:
    seq = nonparam_lp(graph, predictions, alpha, k)
    degrees = graph.degrees() + 1.0
    return ClientReport(
        client_id=client_id,
        weights=weights,
        sample_count=int(np.count_nonzero(graph.train_mask)),
        confidence=smoothing_confidence(seq, degrees),
        moments=mixed_moments(seq, moment_order),
    )

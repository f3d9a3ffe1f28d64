"""Server aggregation: sample-weighted averaging and topology-aware personalization."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .local_model import LinearModelWeights
from .metrics import ClientReport


def _check_shapes(weights: Sequence[LinearModelWeights]) -> None:
    if not weights:
        raise ValueError("no client weights to aggregate")
    shape = weights[0].shape
    for w in weights[1:]:
        if w.shape != shape:
            raise ValueError(f"weight shape mismatch: {w.shape} vs {shape}")


def weighted_average(weights: Sequence[LinearModelWeights], coefs) -> LinearModelWeights:
    """Accumulate ``sum_j coef_j W_j`` in list order."""
    _check_shapes(weights)
    out_w = np.zeros_like(weights[0].weight)
    out_b = np.zeros_like(weights[0].bias)
    for w, a in zip(weights, coefs):
        out_w += a * w.weight
        out_b += a * w.bias
    return LinearModelWeights(out_w, out_b)


def fedavg(reports: Sequence[ClientReport]) -> LinearModelWeights:
    if not reports:
        raise ValueError("fedavg needs at least one report")
    counts = np.array([r.sample_count for r in reports], dtype=np.float64)
    return weighted_average([r.weights for r in reports], counts / counts.sum())


def moment_similarity(reports_or_moments) -> np.ndarray:
    """Pairwise cosine similarity of moment vectors; zero vectors score 0 with everything."""
    vecs = [r.moments if isinstance(r, ClientReport) else np.asarray(r, dtype=np.float64)
            for r in reports_or_moments]
    if len({len(v) for v in vecs}) > 1:
        raise ValueError("moment vectors have different lengths")
    m = np.stack(vecs)
    norms = np.linalg.norm(m, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = m / safe[:, None]
    sim = np.clip(unit @ unit.T, -1.0, 1.0)
    sim = 0.5 * (sim + sim.T)
    zero = norms == 0
    sim[zero, :] = 0.0
    sim[:, zero] = 0.0
    np.fill_diagonal(sim, np.where(zero, 0.0, 1.0))
    return sim


@dataclass
class AggregationPlan:
    """Aggregation sets and weights, indexed by position in the report list."""

    members: list[np.ndarray]
    weights: list[np.ndarray]
    similarity: np.ndarray
    epsilon: float

    def membership_matrix(self) -> np.ndarray:
        n = len(self.members)
        out = np.zeros((n, n), dtype=np.int64)
        for i, mem in enumerate(self.members):
            out[i, mem] = 1
        return out

    def weight_matrix(self) -> np.ndarray:
        n = len(self.members)
        out = np.zeros((n, n))
        for i, (mem, w) in enumerate(zip(self.members, self.weights)):
            out[i, mem] = w
        return out


def build_plan(similarity, confidences, epsilon: float) -> AggregationPlan:
    """Each client aggregates itself plus every peer with similarity >= epsilon.

    Members are weighted by their own confidence, normalised over the set;
    an all-zero set falls back to uniform weights.
    """
    if math.isnan(epsilon):
        raise ValueError("epsilon must not be NaN")
    sim = np.asarray(similarity, dtype=np.float64)
    conf = np.asarray(confidences, dtype=np.float64)
    if np.any(conf < 0):
        raise ValueError("confidences must be non-negative")
    n = len(conf)
    members, weights = [], []
    for i in range(n):
        mem = np.flatnonzero(sim[i] >= epsilon)
        mem = np.union1d(mem, [i]).astype(np.int64)
        h = conf[mem]
        total = h.sum()
        w = h / total if total > 0 else np.full(len(mem), 1.0 / len(mem))
        members.append(mem)
        weights.append(w)
    return AggregationPlan(members, weights, sim, float(epsilon))


def aggregate_personalized(plan: AggregationPlan, reports: Sequence[ClientReport]) -> list[LinearModelWeights]:
    out = []
    for mem, w in zip(plan.members, plan.weights):
        if mem.size and mem.max() >= len(reports):
            raise ValueError(f"plan refers to report {int(mem.max())} but only {len(reports)} were given")
        out.append(weighted_average([reports[j].weights for j in mem], w))
    return out


def write_matrix_csv(path, matrix, ids) -> None:
    """Square matrix with a header row and a leading id column."""
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["client_id", *ids])
        for cid, row in zip(ids, np.asarray(matrix)):
            writer.writerow([cid, *(repr(float(v)) if isinstance(v, (float, np.floating)) else int(v)
                                    for v in row)])

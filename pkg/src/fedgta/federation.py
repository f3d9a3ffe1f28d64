"""Round loop: client sampling, local training, uploads, aggregation, evaluation."""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .local_model import (
    LinearModelWeights,
    PrecomputeConfig,
    TrainConfig,
    count_correct,
    forward,
    init_weights,
    precompute_features,
    train_local,
)
from .metrics import ClientReport, build_report
from .partition import PartitionAssignment
from .seeding import rng_for
from .server import AggregationPlan, aggregate_personalized, build_plan, fedavg, moment_similarity, write_matrix_csv

log = logging.getLogger(__name__)

STRATEGIES = ("fedavg", "fedprox", "fedgta")


@dataclass(frozen=True)
class FederationConfig:
    rounds: int = 100
    participation_fraction: float = 1.0
    strategy: str = "fedgta"
    lp_alpha: float = 0.5
    lp_steps: int = 5
    moment_order: int = 5
    epsilon: float = 0.5
    seed: int = 0
    # keep non-sampled clients' last uploads in the server pool
    stale_reports: bool = False
    # ablation switches: without them every client is in every set / confidences are equal
    use_moments: bool = True
    use_confidence: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)
    precompute: PrecomputeConfig = field(default_factory=PrecomputeConfig)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.rounds < 1 or self.lp_steps < 1 or self.moment_order < 1:
            raise ValueError("rounds, lp_steps and moment_order must all be >= 1")
        if not 0.0 < self.participation_fraction <= 1.0:
            raise ValueError("participation_fraction must lie in (0, 1]")
        if not 0.0 <= self.lp_alpha <= 1.0:
            raise ValueError("lp_alpha must lie in [0, 1]")
        if math.isnan(self.epsilon):
            raise ValueError("epsilon must not be NaN")
        if self.strategy == "fedprox" and self.train.prox_mu <= 0:
            raise ValueError("fedprox needs train.prox_mu > 0")


@dataclass
class RoundRecord:
    round: int
    participants: list[int]
    client_accuracy: list[float | None]
    global_accuracy: float
    val_accuracy: float | None = None
    client_seconds: float = 0.0
    server_seconds: float = 0.0


def sample_clients(num_clients: int, fraction: float, round_index: int, seed: int, attempt: int = 0) -> list[int]:
    """``ceil(fraction * N)`` distinct ids, sorted, drawn from a (seed, round) stream."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    count = min(num_clients, math.ceil(fraction * num_clients))
    if count == num_clients:
        return list(range(num_clients))
    rng = rng_for(seed, "sampling", round_index, attempt)
    return sorted(int(i) for i in rng.choice(num_clients, size=count, replace=False))


def global_test_accuracy(weights, features, labels, masks) -> float:
    """Micro-averaged accuracy, each client scored with its own model."""
    correct = total = 0
    for w, x, y, m in zip(weights, features, labels, masks):
        c, t = count_correct(w, x, y, m)
        correct += c
        total += t
    if total == 0:
        raise ValueError("no test nodes across clients")
    return correct / total


class Federation:
    """Mutable simulation state; ``run_round`` advances it by one round."""

    def __init__(self, partition: PartitionAssignment, cfg: FederationConfig, workers: int = 1):
        self.cfg = cfg
        self.workers = workers
        self.graphs = partition.client_subgraphs
        self.num_clients = partition.num_clients
        self.features = [precompute_features(g, cfg.precompute) for g in self.graphs]
        self.labels = [g.labels for g in self.graphs]
        num_classes = self.graphs[0].num_classes
        init = init_weights(self.features[0].shape[1], num_classes, cfg.seed)
        self.client_weights = [init.copy() for _ in range(self.num_clients)]
        self.trainable = [bool(g.train_mask.any()) for g in self.graphs]
        if not any(self.trainable):
            raise ValueError("no client holds any training node")
        for i, ok in enumerate(self.trainable):
            if not ok:
                log.warning("client %d has no training nodes and will never upload", i)
        self.server_pool: dict[int, ClientReport] = {}
        self.last_plan: AggregationPlan | None = None
        self.last_pool_ids: list[int] = []
        self.last_reports: list[ClientReport] = []

    def _client_update(self, i: int) -> ClientReport:
        cfg = self.cfg
        g = self.graphs[i]
        start = self.client_weights[i]
        trained = train_local(start, start, self.features[i], self.labels[i], g.train_mask, cfg.train)
        if cfg.strategy != "fedgta":
            return ClientReport(i, trained, int(g.train_mask.sum()), 0.0, np.zeros(0))
        preds = forward(trained, self.features[i])
        return build_report(i, trained, g, preds, cfg.lp_alpha, cfg.lp_steps, cfg.moment_order)

    def _sample(self, t: int) -> list[int]:
        attempt = 0
        while True:
            picked = sample_clients(self.num_clients, self.cfg.participation_fraction, t, self.cfg.seed, attempt)
            picked = [i for i in picked if self.trainable[i]]
            if picked:
                return picked
            attempt += 1

    def run_round(self, t: int) -> RoundRecord:
        cfg = self.cfg
        participants = self._sample(t)

        tic = time.perf_counter()
        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                reports = list(pool.map(self._client_update, participants))
        else:
            reports = [self._client_update(i) for i in participants]
        client_seconds = time.perf_counter() - tic
        self.last_reports = reports

        tic = time.perf_counter()
        if cfg.strategy == "fedgta":
            self._personalize(reports)
        else:
            merged = fedavg(reports)
            self.client_weights = [merged.copy() for _ in range(self.num_clients)]
        server_seconds = time.perf_counter() - tic

        per_client = []
        for w, x, y, g in zip(self.client_weights, self.features, self.labels, self.graphs):
            c, n = count_correct(w, x, y, g.test_mask)
            per_client.append(c / n if n else None)
        acc = global_test_accuracy(self.client_weights, self.features, self.labels,
                                   [g.test_mask for g in self.graphs])
        try:
            val = global_test_accuracy(self.client_weights, self.features, self.labels,
                                       [g.val_mask for g in self.graphs])
        except ValueError:
            val = None
        return RoundRecord(t, participants, per_client, acc, val, client_seconds, server_seconds)

    def _personalize(self, reports: list[ClientReport]) -> None:
        cfg = self.cfg
        for r in reports:
            self.server_pool[r.client_id] = r
        if cfg.stale_reports:
            pool = [self.server_pool[i] for i in sorted(self.server_pool)]
        else:
            pool = reports
        n = len(pool)
        sim = moment_similarity(pool) if cfg.use_moments else np.ones((n, n))
        conf = [r.confidence for r in pool] if cfg.use_confidence else np.ones(n)
        plan = build_plan(sim, conf, cfg.epsilon)
        merged = aggregate_personalized(plan, pool)
        fresh = {r.client_id for r in reports}
        for r, w in zip(pool, merged):
            if r.client_id in fresh:
                self.client_weights[r.client_id] = w
        self.last_plan = plan
        self.last_pool_ids = [r.client_id for r in pool]


ROUNDS_HEADER = ["round", "participants", "global_test_accuracy", "global_val_accuracy", "client_test_accuracy"]


def _fmt_acc(a):
    return "" if a is None else repr(float(a))


def write_rounds_csv(path, records: list[RoundRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ROUNDS_HEADER)
        for r in records:
            w.writerow([r.round, ";".join(map(str, r.participants)), repr(float(r.global_accuracy)),
                        _fmt_acc(r.val_accuracy), ";".join(_fmt_acc(a) for a in r.client_accuracy)])


def write_timings_csv(path, records: list[RoundRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "client_seconds", "server_seconds"])
        for r in records:
            w.writerow([r.round, f"{r.client_seconds:.6f}", f"{r.server_seconds:.6f}"])


def run_federation(
    partition: PartitionAssignment,
    cfg: FederationConfig,
    out_dir=None,
    workers: int = 1,
    write_aggregation: bool = False,
) -> list[RoundRecord]:
    """Run ``cfg.rounds`` rounds; optionally write CSVs and final weights to ``out_dir``.

    Timings live in ``timings.csv`` so that ``rounds.csv`` is reproducible
    byte for byte under a fixed seed.
    """
    fed = Federation(partition, cfg, workers)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    records = []
    for t in range(1, cfg.rounds + 1):
        rec = fed.run_round(t)
        records.append(rec)
        log.info("round %d: participants=%d acc=%.4f", t, len(rec.participants), rec.global_accuracy)
        if out is not None and write_aggregation and fed.last_plan is not None:
            agg = out / "aggregation"
            agg.mkdir(exist_ok=True)
            ids = fed.last_pool_ids
            write_matrix_csv(agg / f"round_{t:04d}_similarity.csv", fed.last_plan.similarity, ids)
            write_matrix_csv(agg / f"round_{t:04d}_membership.csv", fed.last_plan.membership_matrix(), ids)
            write_matrix_csv(agg / f"round_{t:04d}_weights.csv", fed.last_plan.weight_matrix(), ids)
    if out is not None:
        write_rounds_csv(out / "rounds.csv", records)
        write_timings_csv(out / "timings.csv", records)
        wdir = out / "weights"
        wdir.mkdir(exist_ok=True)
        for i, w in enumerate(fed.client_weights):
            w.save(wdir / f"client_{i:04d}.bin")
    return records

"""Client simulation: split a global graph into per-client induced subgraphs.

Two splitters are provided. ``louvain`` + ``communities_to_clients`` assigns
whole communities to clients; ``balanced_edge_cut`` is a metis-like
balanced partitioner (BFS region growing plus greedy boundary refinement).
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graph import SparseGraph, induced_subgraph
from .seeding import rng_for

log = logging.getLogger(__name__)


class PartitionError(ValueError):
    pass


@dataclass(eq=False)
class PartitionAssignment:
    num_clients: int
    assignment: np.ndarray
    client_subgraphs: list[SparseGraph] = field(default_factory=list)

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=np.int64)
        check_exact_cover(self.assignment, self.num_clients)

    def client_nodes(self, client: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == client)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.num_clients)


def check_exact_cover(assignment: np.ndarray, num_clients: int) -> None:
    if assignment.ndim != 1:
        raise PartitionError("assignment must be one-dimensional")
    if assignment.size and (assignment.min() < 0 or assignment.max() >= num_clients):
        raise PartitionError(f"assignment has client ids outside [0, {num_clients})")
    empty = np.flatnonzero(np.bincount(assignment, minlength=num_clients) == 0)
    if empty.size:
        raise PartitionError(f"client {int(empty[0])} received no nodes")


def make_assignment(graph: SparseGraph, assignment, num_clients: int) -> PartitionAssignment:
    part = PartitionAssignment(num_clients, assignment)
    part.client_subgraphs = [induced_subgraph(graph, part.client_nodes(i)) for i in range(num_clients)]
    return part


# ---------------------------------------------------------------- modularity

def modularity(graph: SparseGraph, labels, resolution: float = 1.0) -> float:
    """Newman modularity of a node labeling. Defined as 0 for an edgeless graph."""
    labels = np.asarray(labels)
    two_m = float(len(graph.col_indices))
    if two_m == 0:
        return 0.0
    deg = graph.degrees().astype(np.float64)
    rows = np.repeat(np.arange(graph.num_nodes), graph.degrees())
    internal = np.count_nonzero(labels[rows] == labels[graph.col_indices])
    _, inv = np.unique(labels, return_inverse=True)
    tot = np.bincount(inv, weights=deg)
    return internal / two_m - resolution * float(np.sum((tot / two_m) ** 2))


# ---------------------------------------------------------------- louvain

def _local_moving(indptr, indices, weights, k, two_m, resolution, order):
    """One Louvain phase-1 on a weighted graph; returns community per node."""
    n = len(k)
    comm = np.arange(n)
    tot = k.copy()
    improved = True
    while improved:
        improved = False
        for u in order:
            cu = comm[u]
            links: dict[int, float] = {}
            for idx in range(indptr[u], indptr[u + 1]):
                v = indices[idx]
                if v == u:
                    continue
                c = comm[v]
                links[c] = links.get(c, 0.0) + weights[idx]
            tot[cu] -= k[u]
            scale = resolution * k[u] / two_m
            best_c = cu
            best_gain = links.get(cu, 0.0) - tot[cu] * scale
            for c, w in links.items():
                gain = w - tot[c] * scale
                if gain > best_gain + 1e-12:
                    best_c, best_gain = c, gain
            tot[best_c] += k[u]
            if best_c != cu:
                comm[u] = best_c
                improved = True
    _, comm = np.unique(comm, return_inverse=True)
    return comm


def louvain(
    graph: SparseGraph, seed: int = 0, resolution: float = 1.0, history: list[float] | None = None
) -> np.ndarray:
    """Louvain community detection (local moving + coarsening).

    Node visit order at every level is shuffled with a generator derived
    from ``seed``. Communities are renumbered by first occurrence. If
    ``history`` is given, the modularity after each level is appended to it,
    starting with the singleton partition.
    """
    n = graph.num_nodes
    if graph.num_edges == 0:
        return np.arange(n)
    rng = rng_for(seed, "partition", 0)
    adj = graph.adjacency().tocsr()
    membership = np.arange(n)
    best_q = modularity(graph, membership, resolution)
    if history is not None:
        history.append(best_q)
    level = 0
    while True:
        k = np.asarray(adj.sum(axis=1)).ravel()
        two_m = float(k.sum())
        order = rng.permutation(adj.shape[0])
        comm = _local_moving(adj.indptr, adj.indices, adj.data, k, two_m, resolution, order)
        num_comm = int(comm.max()) + 1
        if num_comm == adj.shape[0]:
            break
        membership = comm[membership]
        q = modularity(graph, membership, resolution)
        assert q >= best_q - 1e-12, f"modularity decreased at level {level}: {best_q} -> {q}"
        log.debug("louvain level %d: %d communities, Q=%.6f", level, num_comm, q)
        best_q = q
        if history is not None:
            history.append(q)
        level += 1
        proj = sp.csr_matrix((np.ones(len(comm)), (np.arange(len(comm)), comm)),
                             shape=(len(comm), num_comm))
        adj = (proj.T @ adj @ proj).tocsr()
        adj.sort_indices()
    _, first = np.unique(membership, return_index=True)
    relabel = np.argsort(np.argsort(first))
    return relabel[membership]


def communities_to_clients(
    graph: SparseGraph, communities, num_clients: int, seed: int = 0
) -> PartitionAssignment:
    """Pack whole communities into clients, largest first, onto the lightest client.

    Equal-size communities are ordered by a seeded shuffle; load ties go to
    the lower client index.
    """
    communities = np.asarray(communities, dtype=np.int64)
    ids, inv = np.unique(communities, return_inverse=True)
    if num_clients < 1:
        raise PartitionError("num_clients must be at least 1")
    if num_clients > len(ids):
        raise PartitionError(f"{num_clients} clients requested but only {len(ids)} communities found")
    sizes = np.bincount(inv)
    shuffled = rng_for(seed, "partition", 1).permutation(len(ids))
    order = shuffled[np.argsort(-sizes[shuffled], kind="stable")]
    load = np.zeros(num_clients, dtype=np.int64)
    owner = np.empty(len(ids), dtype=np.int64)
    for c in order:
        target = int(np.argmin(load))
        owner[c] = target
        load[target] += sizes[c]
    return make_assignment(graph, owner[inv], num_clients)


def louvain_split(graph: SparseGraph, num_clients: int, seed: int = 0) -> PartitionAssignment:
    return communities_to_clients(graph, louvain(graph, seed), num_clients, seed)


# ---------------------------------------------------------------- edge cut

def edge_cut(graph: SparseGraph, assignment) -> int:
    edges = graph.edge_list()
    assignment = np.asarray(assignment)
    return int(np.count_nonzero(assignment[edges[:, 0]] != assignment[edges[:, 1]]))


def _balance_bounds(n: int, num_clients: int) -> tuple[int, int]:
    target = n / num_clients
    return max(1, math.floor(0.9 * target)), math.ceil(1.1 * target)


def _peripheral(graph: SparseGraph, free: np.ndarray, start: int) -> int:
    """Last node reached by BFS from ``start`` over free nodes (lowest id on ties)."""
    seen = {start}
    frontier = [start]
    last = [start]
    while frontier:
        nxt = []
        for u in frontier:
            for v in graph.neighbors(u):
                v = int(v)
                if free[v] and v not in seen:
                    seen.add(v)
                    nxt.append(v)
        if nxt:
            last = nxt
        frontier = nxt
    return min(last)


def balanced_edge_cut(graph: SparseGraph, num_clients: int, seed: int = 0) -> PartitionAssignment:
    """Balanced low-cut split: seeded BFS region growing then boundary refinement.

    Refinement only applies moves that strictly reduce the cut and keep
    every client within ``[floor(0.9 n/N), ceil(1.1 n/N)]`` nodes.
    """
    n = graph.num_nodes
    if num_clients < 1:
        raise PartitionError("num_clients must be at least 1")
    if num_clients > n:
        raise PartitionError(f"{num_clients} clients requested for {n} nodes")
    rng = rng_for(seed, "partition", 2)
    targets = [n // num_clients + (1 if i < n % num_clients else 0) for i in range(num_clients)]
    part = np.full(n, -1, dtype=np.int64)
    free = np.ones(n, dtype=bool)

    for client, target in enumerate(targets):
        grown = 0
        queue: deque[int] = deque()
        while grown < target:
            if not queue:
                candidates = np.flatnonzero(free)
                start = _peripheral(graph, free, int(rng.choice(candidates)))
                queue.append(start)
                free[start] = False
            u = queue.popleft()
            part[u] = client
            grown += 1
            for v in graph.neighbors(u):
                if free[v] and grown + len(queue) < target:
                    free[v] = False
                    queue.append(int(v))
        # queued nodes beyond the target are never pushed, so the queue is empty here
        assert not queue

    lo, hi = _balance_bounds(n, num_clients)
    sizes = np.bincount(part, minlength=num_clients)
    cut = edge_cut(graph, part)
    for _ in range(20):
        moved = False
        for u in rng.permutation(n):
            own = part[u]
            if sizes[own] - 1 < lo:
                continue
            counts = np.bincount(part[graph.neighbors(u)], minlength=num_clients)
            gains = counts - counts[own]
            gains[own] = 0
            gains[sizes + 1 > hi] = 0
            best = int(np.argmax(gains))
            if gains[best] <= 0:
                continue
            part[u] = best
            sizes[own] -= 1
            sizes[best] += 1
            new_cut = cut - int(gains[best])
            assert new_cut < cut, "refinement move increased edge cut"
            cut = new_cut
            moved = True
        if not moved:
            break
    return make_assignment(graph, part, num_clients)


def label_distribution(assignment: PartitionAssignment, graph: SparseGraph) -> np.ndarray:
    """Per-client class histogram of labeled nodes, shape ``(N, c)``."""
    labeled = graph.labeled_mask()
    counts = np.zeros((assignment.num_clients, graph.num_classes), dtype=np.int64)
    np.add.at(counts, (assignment.assignment[labeled], graph.labels[labeled]), 1)
    return counts

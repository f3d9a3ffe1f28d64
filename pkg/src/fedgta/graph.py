"""CSR graph substrate: construction, normalization and sparse-dense products.

Graphs are undirected and stored with both edge directions. Self-loops are
never materialized in the CSR arrays; a normalized operator adds them
implicitly when ``self_loops`` is set.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

UNLABELED = -1


class GraphError(ValueError):
    """Raised when graph inputs violate a structural invariant."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Undirected attributed graph in CSR form.

    ``node_ids`` maps local node index to the id in the graph this one was
    carved out of (identity for a freshly built graph).
    """

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    node_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.node_ids is None:
            object.__setattr__(self, "node_ids", np.arange(self.num_nodes, dtype=np.int64))
        for name in ("row_offsets", "col_indices", "features", "labels",
                     "train_mask", "val_mask", "test_mask", "node_ids"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def num_edges(self) -> int:
        return len(self.col_indices) // 2

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def neighbors(self, u: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[u]:self.row_offsets[u + 1]]

    def edge_list(self) -> np.ndarray:
        """Undirected edges as an ``(m, 2)`` array with ``u < v``, sorted."""
        rows = np.repeat(np.arange(self.num_nodes), self.degrees())
        keep = rows < self.col_indices
        return np.stack([rows[keep], self.col_indices[keep]], axis=1)

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(len(self.col_indices), dtype=np.float64)
        return sp.csr_matrix(
            (data, self.col_indices, self.row_offsets), shape=(self.num_nodes, self.num_nodes)
        )

    def labeled_mask(self) -> np.ndarray:
        return self.labels != UNLABELED


def build_graph(
    edges,
    features,
    labels,
    train_mask,
    val_mask,
    test_mask,
    num_classes: int | None = None,
) -> SparseGraph:
    """Build a symmetric, deduplicated CSR graph.

    ``edges`` may contain both directions, duplicates and self-loops; the
    first two are folded and self-loops are dropped.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[:, None]
    n = features.shape[0]
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise GraphError(f"labels length {labels.shape[0]} does not match {n} feature rows")
    masks = []
    for name, m in (("train", train_mask), ("val", val_mask), ("test", test_mask)):
        m = np.asarray(m, dtype=bool)
        if m.shape != (n,):
            raise GraphError(f"{name}_mask length {m.shape[0]} does not match {n} nodes")
        masks.append(m)

    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        bad = np.flatnonzero((edges < 0).any(axis=1) | (edges >= n).any(axis=1))[0]
        raise GraphError(f"edge {bad} ({edges[bad, 0]}, {edges[bad, 1]}) has node id outside [0, {n})")
    edges = edges[edges[:, 0] != edges[:, 1]]
    both = np.concatenate([edges, edges[:, ::-1]])
    # unique over (row, col) also sorts by row then col
    both = np.unique(both, axis=0) if len(both) else both.reshape(0, 2)
    row_offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(both[:, 0], minlength=n), out=row_offsets[1:])

    if num_classes is None:
        num_classes = int(labels.max()) + 1 if (labels >= 0).any() else 0
    graph = SparseGraph(
        num_nodes=n,
        row_offsets=row_offsets,
        col_indices=both[:, 1].copy(),
        features=features,
        labels=labels,
        num_classes=int(num_classes),
        train_mask=masks[0],
        val_mask=masks[1],
        test_mask=masks[2],
    )
    validate(graph)
    return graph


def validate(graph: SparseGraph) -> None:
    """Check every SparseGraph invariant, raising GraphError on the first failure."""
    n = graph.num_nodes
    ro, ci = graph.row_offsets, graph.col_indices
    if ro.shape != (n + 1,) or ro[0] != 0:
        raise GraphError("row_offsets must have length n+1 and start at 0")
    if np.any(np.diff(ro) < 0):
        raise GraphError("row_offsets must be non-decreasing")
    if ro[-1] != len(ci):
        raise GraphError("row_offsets[n] must equal len(col_indices)")
    if len(ci) and (ci.min() < 0 or ci.max() >= n):
        raise GraphError("col_indices out of range")
    rows = np.repeat(np.arange(n), np.diff(ro))
    if np.any(rows == ci):
        raise GraphError("self-loops must not be stored in CSR")
    # strictly increasing within a row: no duplicates, sorted
    same_row = rows[1:] == rows[:-1]
    if np.any(same_row & (ci[1:] <= ci[:-1])):
        raise GraphError("col_indices must be strictly increasing within each row")
    fwd = rows * n + ci
    rev = ci * n + rows
    if not np.array_equal(np.sort(fwd), np.sort(rev)):
        raise GraphError("adjacency is not symmetric")
    if graph.features.shape[0] != n or graph.labels.shape != (n,):
        raise GraphError("feature/label row count does not match num_nodes")
    if not np.all(np.isfinite(graph.features)):
        raise GraphError("features contain non-finite values")
    lab = graph.labels
    if np.any((lab != UNLABELED) & ((lab < 0) | (lab >= graph.num_classes))):
        raise GraphError(f"labels must lie in [0, {graph.num_classes}) or be {UNLABELED}")
    tr, va, te = graph.train_mask, graph.val_mask, graph.test_mask
    if np.any(tr & va) or np.any(tr & te) or np.any(va & te):
        raise GraphError("train/val/test masks must be pairwise disjoint")
    if np.any(tr & (lab == UNLABELED)):
        node = int(np.flatnonzero(tr & (lab == UNLABELED))[0])
        raise GraphError(f"train-masked node {node} has no label")


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """The operator D^(r-1) A D^(-r) over a graph, A optionally with self-loops."""

    graph: SparseGraph
    kernel_coefficient: float
    self_loops: bool
    degrees: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    def to_dense(self) -> np.ndarray:
        return spmm(self, np.eye(self.num_nodes))

    def __matmul__(self, dense):
        return spmm(self, dense)


def normalize(graph: SparseGraph, r: float = 0.5, self_loops: bool = True) -> NormalizedAdjacency:
    if not 0.0 <= r <= 1.0:
        raise GraphError(f"kernel coefficient r={r} outside [0, 1]")
    deg = graph.degrees().astype(np.float64) + (1.0 if self_loops else 0.0)
    if np.any(deg == 0):
        node = int(np.flatnonzero(deg == 0)[0])
        raise GraphError(f"node {node} is isolated; normalization needs self_loops=True")
    return NormalizedAdjacency(graph, float(r), bool(self_loops), _frozen(deg))


def spmm(adj: NormalizedAdjacency, dense) -> np.ndarray:
    """Apply the normalized operator to an ``n x d`` matrix (or length-n vector)."""
    dense = np.asarray(dense, dtype=np.float64)
    vector = dense.ndim == 1
    if vector:
        dense = dense[:, None]
    if dense.shape[0] != adj.num_nodes:
        raise GraphError(f"operand has {dense.shape[0]} rows, operator has {adj.num_nodes} nodes")
    r = adj.kernel_coefficient
    right = dense * (adj.degrees ** -r)[:, None]
    out = adj.graph.adjacency() @ right
    if adj.self_loops:
        out = out + right
    out = out * (adj.degrees ** (r - 1.0))[:, None]
    return out[:, 0] if vector else out


def induced_subgraph(graph: SparseGraph, node_set) -> SparseGraph:
    """Restrict ``graph`` to ``node_set`` (in the given order), dropping outside edges."""
    node_set = np.asarray(node_set, dtype=np.int64)
    if node_set.size == 0:
        raise GraphError("node_set is empty")
    if np.unique(node_set).size != node_set.size:
        raise GraphError("node_set contains duplicates")
    if node_set.min() < 0 or node_set.max() >= graph.num_nodes:
        raise GraphError("node_set has ids out of range")
    local = np.full(graph.num_nodes, -1, dtype=np.int64)
    local[node_set] = np.arange(node_set.size)
    edges = graph.edge_list()
    mapped = local[edges]
    mapped = mapped[(mapped >= 0).all(axis=1)]
    sub = build_graph(
        mapped,
        graph.features[node_set],
        graph.labels[node_set],
        graph.train_mask[node_set],
        graph.val_mask[node_set],
        graph.test_mask[node_set],
        num_classes=graph.num_classes,
    )
    return replace(sub, node_ids=graph.node_ids[node_set])

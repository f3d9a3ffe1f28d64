"""Datasets on disk, synthetic SBM graphs and experiment configuration files.

Dataset directory layout::

    edges.txt      whitespace-separated "u v" per line, '#' comments
    features.csv   one row of floats per node
    labels.csv     one integer per node, -1 for unlabeled
    masks.csv      "train,val,test" 0/1 flags per node
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .federation import FederationConfig
from .graph import UNLABELED, GraphError, SparseGraph, build_graph
from .local_model import PrecomputeConfig, TrainConfig
from .partition import PartitionAssignment, make_assignment
from .seeding import rng_for


class DatasetError(ValueError):
    pass


# ---------------------------------------------------------------- SBM

@dataclass(frozen=True)
class SbmSpec:
    blocks: int = 4
    nodes_per_block: int = 150
    p_in: float = 0.05
    p_out: float = 0.005
    feature_dim: int = 8
    feature_noise: float = 1.0
    classes_equal_blocks: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise ValueError(f"need 0 <= p_out <= p_in <= 1, got p_in={self.p_in}, p_out={self.p_out}")
        if self.blocks < 1 or self.nodes_per_block < 1:
            raise ValueError("blocks and nodes_per_block must be >= 1")
        if self.feature_dim < self.blocks:
            raise ValueError("feature_dim must be at least the number of blocks")
        if self.feature_noise < 0:
            raise ValueError("feature_noise must be >= 0")


def stratified_split(labels: np.ndarray, rng: np.random.Generator, fractions=(0.2, 0.4, 0.4)):
    """Per-class shuffled train/val/test masks; unlabeled nodes get no mask."""
    n = len(labels)
    masks = [np.zeros(n, dtype=bool) for _ in range(3)]
    for cls in np.unique(labels[labels != UNLABELED]):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        n_train = round(fractions[0] * len(idx))
        n_val = round(fractions[1] * len(idx))
        masks[0][idx[:n_train]] = True
        masks[1][idx[n_train:n_train + n_val]] = True
        masks[2][idx[n_train + n_val:]] = True
    return masks


def generate_sbm(spec: SbmSpec) -> SparseGraph:
    """Planted-partition graph with block-centroid features and stratified 20/40/40 masks.

    With ``classes_equal_blocks=False`` labels are drawn uniformly at random
    over the blocks, independent of structure.
    """
    rng = rng_for(spec.seed, "graph")
    B, npb = spec.blocks, spec.nodes_per_block
    n = B * npb
    block = np.repeat(np.arange(B), npb)
    edges = []
    for a in range(B):
        for b in range(a, B):
            p = spec.p_in if a == b else spec.p_out
            hits = rng.random((npb, npb)) < p
            if a == b:
                hits = np.triu(hits, k=1)
            u, v = np.nonzero(hits)
            edges.append(np.stack([u + a * npb, v + b * npb], axis=1))
    edges = np.concatenate(edges)
    features = np.zeros((n, spec.feature_dim))
    features[np.arange(n), block] = 1.0
    features += spec.feature_noise * rng.standard_normal((n, spec.feature_dim))
    labels = block.copy() if spec.classes_equal_blocks else rng.integers(0, B, size=n)
    masks = stratified_split(labels, rng_for(spec.seed, "split"))
    return build_graph(edges, features, labels, *masks, num_classes=B)


# ---------------------------------------------------------------- dataset dirs

def save_dataset(graph: SparseGraph, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "edges.txt", "w") as fh:
        fh.write(f"# {graph.num_nodes} nodes, {graph.num_edges} undirected edges\n")
        for u, v in graph.edge_list():
            fh.write(f"{u} {v}\n")
    np.savetxt(path / "features.csv", graph.features, delimiter=",", fmt="%.17g")
    np.savetxt(path / "labels.csv", graph.labels, fmt="%d")
    masks = np.stack([graph.train_mask, graph.val_mask, graph.test_mask], axis=1).astype(np.int64)
    np.savetxt(path / "masks.csv", masks, delimiter=",", fmt="%d")


def read_edges(path) -> np.ndarray:
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DatasetError(f"{path}:{lineno}: expected two node ids, got {line!r}")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-integer node id in {line!r}") from None
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def _read_matrix(path, dtype) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", dtype=dtype, ndmin=2)
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from None


def load_dataset(path) -> SparseGraph:
    path = Path(path)
    for name in ("edges.txt", "features.csv", "labels.csv", "masks.csv"):
        if not (path / name).is_file():
            raise DatasetError(f"{path}: missing {name}")
    edges = read_edges(path / "edges.txt")
    features = _read_matrix(path / "features.csv", np.float64)
    labels = _read_matrix(path / "labels.csv", np.int64)
    if labels.shape[1] != 1:
        raise DatasetError(f"{path / 'labels.csv'}: expected one column, found {labels.shape[1]}")
    masks = _read_matrix(path / "masks.csv", np.int64)
    if masks.shape[1] != 3:
        raise DatasetError(f"{path / 'masks.csv'}: expected 3 columns, found {masks.shape[1]}")
    if np.any((masks != 0) & (masks != 1)):
        raise DatasetError(f"{path / 'masks.csv'}: mask flags must be 0 or 1")
    n = features.shape[0]
    bad = np.flatnonzero((edges < 0).any(axis=1) | (edges >= n).any(axis=1))
    if bad.size:
        lineno = _edge_line(path / "edges.txt", int(bad[0]))
        raise DatasetError(f"{path / 'edges.txt'}:{lineno}: node id out of range [0, {n})")
    try:
        return build_graph(edges, features, labels[:, 0], *(masks[:, j].astype(bool) for j in range(3)))
    except GraphError as exc:
        raise DatasetError(f"{path}: {exc}") from None


def _edge_line(path, index: int) -> int:
    seen = -1
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.split("#", 1)[0].strip():
                seen += 1
                if seen == index:
                    return lineno
    return -1


def save_assignment(part: PartitionAssignment, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "client_id"])
        for node, client in enumerate(part.assignment):
            w.writerow([node, int(client)])


def load_assignment(graph: SparseGraph, path) -> PartitionAssignment:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    if rows.shape[0] != graph.num_nodes or not np.array_equal(np.sort(rows[:, 0]), np.arange(graph.num_nodes)):
        raise DatasetError(f"{path}: assignment must list every node exactly once")
    assignment = np.empty(graph.num_nodes, dtype=np.int64)
    assignment[rows[:, 0]] = rows[:, 1]
    return make_assignment(graph, assignment, int(assignment.max()) + 1)


def save_matrix(path, matrix, header=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header is not None:
            w.writerow(header)
        for row in np.asarray(matrix):
            w.writerow(row.tolist())


# ---------------------------------------------------------------- config

SECTIONS = {
    "federation": FederationConfig,
    "train": TrainConfig,
    "precompute": PrecomputeConfig,
}
ALIASES = {
    "federation": {"T": "rounds", "K": "moment_order", "k": "lp_steps", "alpha": "lp_alpha"},
    "train": {"E": "local_epochs", "eta": "learning_rate"},
    "precompute": {},
}
NESTED = {"train", "precompute"}


def _fields(cls) -> dict[str, type]:
    hints = {"int": int, "float": float, "bool": bool, "str": str}
    return {f.name: hints[f.type] for f in dataclasses.fields(cls) if f.name not in NESTED}


def _coerce(raw: str, typ: type, where: str):
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if typ is str:
            return raw.strip('"').strip("'")
        return typ(raw)
    except ValueError:
        raise ValueError(f"{where}: cannot read {raw!r} as {typ.__name__}") from None


def config_from_mapping(values: dict[str, dict[str, str]]) -> FederationConfig:
    """Build a FederationConfig from ``{section: {key: raw string}}``."""
    kwargs: dict[str, dict] = {s: {} for s in SECTIONS}
    for section, items in values.items():
        if section not in SECTIONS:
            raise ValueError(f"unknown config section [{section}]")
        fields = _fields(SECTIONS[section])
        for key, raw in items.items():
            name = ALIASES[section].get(key, key)
            if name not in fields:
                raise ValueError(f"unknown key {key!r} in [{section}]")
            kwargs[section][name] = _coerce(raw, fields[name], f"[{section}] {key}")
    return FederationConfig(
        **kwargs["federation"],
        train=TrainConfig(**kwargs["train"]),
        precompute=PrecomputeConfig(**kwargs["precompute"]),
    )


def read_config_values(path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    with open(path) as fh:
        parser.read_file(fh)
    return {s: dict(parser.items(s)) for s in parser.sections()}


def parse_config(path) -> FederationConfig:
    return config_from_mapping(read_config_values(path))


def config_to_ini(cfg: FederationConfig) -> str:
    lines = ["[federation]"]
    for f in dataclasses.fields(cfg):
        if f.name not in NESTED:
            lines.append(f"{f.name} = {getattr(cfg, f.name)}")
    for section in ("train", "precompute"):
        lines.append(f"\n[{section}]")
        sub = getattr(cfg, section)
        for f in dataclasses.fields(sub):
            lines.append(f"{f.name} = {getattr(sub, f.name)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- planetoid

def convert_planetoid(content_path, cites_path, out_dir, seed: int = 0) -> SparseGraph:
    """Convert the raw Cora/CiteSeer ``.content`` + ``.cites`` pair into a dataset dir.

    Documents are numbered in ``.content`` order and classes by sorted name.
    Citations to documents missing from ``.content`` are skipped. Masks are a
    stratified 20/40/40 split drawn from ``seed``.
    """
    ids, rows, names = [], [], []
    with open(content_path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 3:
                raise DatasetError(f"{content_path}:{lineno}: expected id, features and a class")
            ids.append(parts[0])
            try:
                rows.append([float(v) for v in parts[1:-1]])
            except ValueError:
                raise DatasetError(f"{content_path}:{lineno}: non-numeric feature") from None
            names.append(parts[-1])
    if len({len(r) for r in rows}) != 1:
        raise DatasetError(f"{content_path}: rows have differing feature counts")
    index = {pid: i for i, pid in enumerate(ids)}
    classes = sorted(set(names))
    labels = np.array([classes.index(c) for c in names], dtype=np.int64)
    edges = []
    with open(cites_path) as fh:
        for line in fh:
            parts = line.split()
            if len(parts) == 2 and parts[0] in index and parts[1] in index:
                edges.append((index[parts[0]], index[parts[1]]))
    masks = stratified_split(labels, rng_for(seed, "split"))
    graph = build_graph(np.array(edges, dtype=np.int64).reshape(-1, 2), np.array(rows), labels,
                        *masks, num_classes=len(classes))
    save_dataset(graph, out_dir)
    return graph

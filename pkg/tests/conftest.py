"""Shared fixtures and brute-force oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from fedgta.graph import build_graph

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def record_acceptance(name: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS.append((name, passed, detail))
    print(f"[{'PASS' if passed else 'FAIL'}] {name} {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


def random_graph(rng: np.random.Generator, n: int, p: float, f: int = 3, c: int = 3, labeled=True):
    """Erdos-Renyi graph with Gaussian features and a random 1/3 train split."""
    upper = np.triu(rng.random((n, n)) < p, k=1)
    edges = np.argwhere(upper)
    features = rng.standard_normal((n, f))
    labels = rng.integers(0, c, size=n) if labeled else np.full(n, -1)
    train = rng.random(n) < 0.34 if labeled else np.zeros(n, dtype=bool)
    rest = ~train
    val = rest & (rng.random(n) < 0.5)
    test = rest & ~val
    return build_graph(edges, features, labels, train, val, test, num_classes=c)


def graph_from_edges(n: int, edges, f: int = 2, c: int = 2, seed: int = 0):
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % c
    train = np.zeros(n, dtype=bool)
    train[0] = True
    return build_graph(np.asarray(edges).reshape(-1, 2), rng.standard_normal((n, f)), labels,
                       train, np.zeros(n, dtype=bool), ~train, num_classes=c)


def dense_adjacency(graph) -> np.ndarray:
    """Adjacency matrix assembled entry by entry from the edge list."""
    a = np.zeros((graph.num_nodes, graph.num_nodes))
    for u, v in graph.edge_list():
        a[u, v] = 1.0
        a[v, u] = 1.0
    return a


def dense_operator(graph, r: float = 0.5, self_loops: bool = True) -> np.ndarray:
    """``D^(r-1) (A + I) D^(-r)`` formed densely."""
    a = dense_adjacency(graph)
    if self_loops:
        a = a + np.eye(graph.num_nodes)
    d = a.sum(axis=1)
    return np.diag(d ** (r - 1.0)) @ a @ np.diag(d ** -r)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

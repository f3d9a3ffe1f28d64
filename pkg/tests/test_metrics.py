import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import dense_adjacency, graph_from_edges, random_graph
from fedgta.local_model import LinearModelWeights
from fedgta.metrics import (
    INV_E,
    ClientReport,
    SoftLabelSequence,
    build_report,
    confidence_terms,
    mixed_moments,
    nonparam_lp,
    smoothing_confidence,
)


def soft_labels(rng, n, c):
    y = rng.random((n, c)) ** 3
    return y / y.sum(axis=1, keepdims=True)


def dense_lp(graph, y0, alpha, k, self_loop=True):
    a = dense_adjacency(graph)
    d = a.sum(axis=1) + 1.0
    if self_loop:
        a = a + np.eye(graph.num_nodes)
    s = a / np.sqrt(np.outer(d, d))
    steps = [y0]
    for _ in range(k):
        steps.append(alpha * y0 + (1 - alpha) * s @ steps[-1])
    return steps


def test_alpha_one_freezes_labels(rng):
    g = random_graph(rng, 12, 0.3)
    y0 = soft_labels(rng, 12, 3)
    seq = nonparam_lp(g, y0, alpha=1.0, k=4)
    assert all(np.array_equal(y, y0) for y in seq.steps)


def test_edgeless_without_self_loop_gives_scaled_rows(rng):
    g = graph_from_edges(5, np.zeros((0, 2), dtype=int))
    y0 = soft_labels(rng, 5, 3)
    seq = nonparam_lp(g, y0, alpha=0.5, k=3, self_loop=False)
    for y in seq.steps[1:]:
        assert np.allclose(y, 0.5 * y0, atol=1e-15)


def test_self_loop_only_graph_is_fixed_point(rng):
    g = graph_from_edges(5, np.zeros((0, 2), dtype=int))
    y0 = soft_labels(rng, 5, 3)
    seq = nonparam_lp(g, y0, alpha=0.3, k=5)
    assert all(np.array_equal(y, y0) for y in seq.steps)


def test_path_matches_dense_oracle():
    g = graph_from_edges(3, [(0, 1), (1, 2)])
    y0 = np.array([[0.9, 0.1], [0.5, 0.5], [0.2, 0.8]])
    for self_loop in (True, False):
        seq = nonparam_lp(g, y0, alpha=0.5, k=2, self_loop=self_loop)
        for got, want in zip(seq.steps, dense_lp(g, y0, 0.5, 2, self_loop)):
            assert np.max(np.abs(got - want)) <= 1e-12


def test_lp_validation(rng):
    g = graph_from_edges(3, [(0, 1)])
    with pytest.raises(ValueError):
        nonparam_lp(g, np.ones((3, 2)), alpha=1.5)
    with pytest.raises(ValueError):
        nonparam_lp(g, np.ones((3, 2)), alpha=float("nan"))
    with pytest.raises(ValueError):
        nonparam_lp(g, np.ones((3, 2)), k=-1)
    with pytest.raises(ValueError):
        nonparam_lp(g, np.ones((4, 2)))


def test_confidence_one_hot_and_max_entropy_point():
    terms = confidence_terms(np.eye(4))
    assert np.all(terms == INV_E)
    assert abs(confidence_terms(np.array([[INV_E, 1 - INV_E]]))[0, 0]) <= 1e-12
    degrees = np.array([1.0, 2.0, 3.0, 4.0])
    assert smoothing_confidence(np.eye(4), degrees) == pytest.approx(INV_E * 4 * degrees.sum())


def test_confidence_hand_example():
    rows = np.array([[1.0, 0.0], [0.5, 0.5]])
    want = INV_E * 2 * 1 + 2 * 2 * (INV_E - 0.5 * math.log(2))
    assert smoothing_confidence(rows, [1.0, 2.0]) == pytest.approx(want, abs=1e-14)


def test_confidence_rejects_negative_and_clips_above_one():
    with pytest.raises(ValueError):
        confidence_terms(np.array([[-0.1, 1.1]]))
    assert confidence_terms(np.array([[1.2, 0.0]]))[0, 0] == INV_E


@settings(max_examples=100, deadline=None)
@given(p=st.floats(0.0, 0.5), shift=st.floats(0.0, 1.0))
def test_sharper_rows_are_more_confident(p, shift):
    # moving mass from the minority to the majority entry majorizes the row
    q = p * (1 - shift)
    flat = confidence_terms(np.array([[p, 1 - p]])).sum()
    sharp = confidence_terms(np.array([[q, 1 - q]])).sum()
    # -x log x summed over a 2-vector is Schur-concave
    assert sharp >= flat - 1e-15


def test_confidence_uses_final_step(rng):
    g = random_graph(rng, 10, 0.3)
    seq = nonparam_lp(g, soft_labels(rng, 10, 3), 0.5, 3)
    d = g.degrees() + 1.0
    assert smoothing_confidence(seq, d) == smoothing_confidence(seq.final, d)


def test_moments_uniform_rows_vanish(rng):
    g = random_graph(rng, 10, 0.3)
    seq = nonparam_lp(g, np.full((10, 4), 0.25), 0.5, 3)
    assert np.all(mixed_moments(seq, 4) == 0.0)


def test_moments_hand_example():
    y = np.array([[0.9, 0.1]])
    seq = SoftLabelSequence([y, y], 0.5)
    m = mixed_moments(seq, 2)
    assert np.allclose(m, [0.4, -0.4, 0.16, 0.16], atol=1e-15)


def test_first_order_moments_sum_to_zero(rng):
    g = random_graph(rng, 30, 0.2)
    seq = nonparam_lp(g, soft_labels(rng, 30, 5), 0.5, 4)
    m = mixed_moments(seq, 3).reshape(4, 3, 5)
    assert np.all(np.abs(m[:, 0, :].sum(axis=1)) <= 1e-12)


def test_moments_are_node_permutation_invariant(rng):
    y = [soft_labels(rng, 40, 4) for _ in range(3)]
    perm = rng.permutation(40)
    a = mixed_moments(SoftLabelSequence(y, 0.5), 5)
    b = mixed_moments(SoftLabelSequence([s[perm] for s in y], 0.5), 5)
    assert np.array_equal(a, b)


def test_moment_validation():
    seq = SoftLabelSequence([np.ones((2, 2))], 0.5)
    with pytest.raises(ValueError):
        mixed_moments(seq, 2)
    with pytest.raises(ValueError):
        mixed_moments(SoftLabelSequence([np.ones((2, 2))] * 2, 0.5), 0)


def make_report(rng, n=8, c=3, k=2, order=3, client=0):
    g = random_graph(rng, n, 0.4, c=c)
    w = LinearModelWeights(rng.standard_normal((3, c)), rng.standard_normal(c))
    preds = soft_labels(rng, n, c)
    return g, w, preds, build_report(client, w, g, preds, 0.5, k, order)


def test_report_length():
    rng = np.random.default_rng(0)
    *_, rep = make_report(rng, n=12, c=7, k=5, order=10)
    assert rep.moments.shape == (350,)


def test_report_is_composition(rng):
    g = graph_from_edges(2, [(0, 1)], c=2)
    w = LinearModelWeights(np.ones((2, 2)), np.zeros(2))
    preds = np.array([[0.7, 0.3], [0.4, 0.6]])
    rep = build_report(3, w, g, preds, alpha=0.5, k=1, moment_order=1)
    seq = nonparam_lp(g, preds, 0.5, 1)
    assert rep.client_id == 3
    assert rep.confidence == smoothing_confidence(seq, g.degrees() + 1.0)
    assert np.array_equal(rep.moments, mixed_moments(seq, 1))


def test_identical_inputs_give_identical_reports(rng):
    g, w, preds, rep = make_report(rng)
    again = build_report(0, w, g, preds, 0.5, 2, 3)
    assert again.to_bytes() == rep.to_bytes()


def test_report_bytes_round_trip(rng):
    *_, rep = make_report(rng)
    back = ClientReport.from_bytes(rep.to_bytes(), rep.client_id, rep.sample_count)
    assert back.confidence == rep.confidence
    assert np.array_equal(back.moments, rep.moments)
    assert np.array_equal(back.weights.weight, rep.weights.weight)
    with pytest.raises(ValueError, match="size"):
        ClientReport.from_bytes(rep.to_bytes()[:-8], 0, 1)

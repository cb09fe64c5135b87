import math

import numpy as np
import pytest

import hgnn


def test_tokenize_collapses_specials():
    assert hgnn.tokenize("Hi @bob see https://x.co #Tag") == ["hi", "<mention>", "see", "<url>", "<hashtag>"]


def test_pmi_and_tfidf_hand_examples():
    edges = hgnn.pmi_edges([["a", "b"], ["c", "d"]], min_count=1, window=2)
    assert sorted((min(a, b), max(a, b)) for a, b, _ in edges) == [("a", "b"), ("c", "d")]
    assert all(math.isclose(w, math.log(2.0)) for _, _, w in edges)
    weights = hgnn.tfidf([["x", "x", "y"], ["y", "z"], ["z"]], min_count=1)
    assert math.isclose(weights[0]["x"], 2 * math.log(3.0))


def test_knn_matches_numpy_cosine():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(30, 8))
    src, dst, w = hgnn.knn_doc_edges(x, 3)
    assert len(src) == 90
    unit = x / np.linalg.norm(x, axis=1, keepdims=True)
    cos = unit @ unit.T
    np.fill_diagonal(cos, -np.inf)
    for i in range(30):
        want = sorted(range(30), key=lambda j: (-cos[i, j], j))[:3]
        assert list(dst[3 * i : 3 * i + 3]) == want
    assert np.allclose(w, cos[src, dst])


def test_segment_softmax_sums_to_one():
    scores = np.array([[1.0], [2.0], [-3.0], [500.0], [0.5]])
    alpha = hgnn.segment_softmax(scores, [0, 0, 1, 1, 2], 3)
    assert np.allclose(np.bincount([0, 0, 1, 1, 2], weights=alpha[:, 0]), 1.0)


def test_graph_train_evaluate_and_round_trip(tmp_path):
    g = hgnn.Graph.synthetic(users=10, docs_per_user=6)
    counts = g.counts
    assert counts["user_doc"] == counts["doc_nodes"] == 60
    assert counts["doc_doc"] == 3 * 60
    assert g.features("doc").shape[0] == 60
    assert g.apply_variant("no-word").counts["word_nodes"] == 0
    with pytest.raises(ValueError):
        g.node_count("sentence")

    model, history = hgnn.train(g, model="gat", epochs=30, hidden=16, seed=2)
    assert len(history) == 30
    assert history[-1]["train_loss"] < history[0]["train_loss"]
    metrics = model.evaluate(g, "train")
    assert 0.0 <= metrics["accuracy"] <= 1.0

    g.save(tmp_path / "g.bin")
    model.save(tmp_path / "m.ckpt")
    assert hgnn.Graph.load(tmp_path / "g.bin") == g
    again = hgnn.Model.load(tmp_path / "m.ckpt")
    assert np.array_equal(again.logits(g), model.logits(g))
    assert again.kind == "gat"


def test_errors_surface_as_python_exceptions(tmp_path):
    bad = tmp_path / "junk.bin"
    bad.write_bytes(b"not a graph")
    with pytest.raises(Exception):
        hgnn.Graph.load(bad)
    with pytest.raises(Exception):
        hgnn.train(hgnn.Graph.synthetic(users=4, docs_per_user=4), variant="nonsense")

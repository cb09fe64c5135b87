"""Heterogeneous graph neural networks for author profiling."""

from ._core import (
    Graph,
    Model,
    knn_doc_edges,
    pmi_edges,
    segment_softmax,
    tfidf,
    tokenize,
    train,
)

__all__ = [
    "Graph",
    "Model",
    "knn_doc_edges",
    "pmi_edges",
    "segment_softmax",
    "tfidf",
    "tokenize",
    "train",
]

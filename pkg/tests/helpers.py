"""Small builders shared by the test modules."""

import numpy as np

from graphclass.graph import DirectedGraph, LabelPartition


def make_graph(n, edges, tokens=None):
    src = [u for u, _ in edges]
    dst = [v for _, v in edges]
    if tokens is None:
        tokens = [() for _ in range(n)]
    return DirectedGraph.from_edges(n, src, dst, tokens=tokens)


def make_partition(K, roles, labels):
    return LabelPartition(K, np.asarray(roles), np.asarray(labels))

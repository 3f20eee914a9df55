"""Directed attributed graphs and their label partitions.

Nodes carry a dense integer id ``0..n-1``, the original string id from the
input table, the raw text and its token sequence.  Labels are stored as
0-based indices ``0..K-1`` (``-1`` when absent); files use ``1..K``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .text import tokenize

logger = logging.getLogger(__name__)

TRAIN, VAL, TEST, UNKNOWN = 0, 1, 2, 3
ROLE_NAMES = ("train", "val", "test", "unknown")
_ROLE_CODES = {name: code for code, name in enumerate(ROLE_NAMES)}


class GraphFormatError(ValueError):
    """Raised when a node table or edge list violates the input contract."""


@dataclass(eq=False)
class DirectedGraph:
    """Simple directed graph with a token sequence per node.

    ``adjacency[u, v] == 1`` iff the edge ``u -> v`` exists.
    """

    adjacency: sparse.csr_matrix
    tokens: list[tuple[str, ...]]
    names: list[str] = field(default_factory=list)
    texts: list[str] = field(default_factory=list)
    n_duplicate_edges: int = 0

    def __post_init__(self):
        n = self.adjacency.shape[0]
        if not self.names:
            self.names = [str(i) for i in range(n)]
        if not self.texts:
            self.texts = [" ".join(t) for t in self.tokens]
        if not (len(self.tokens) == len(self.names) == len(self.texts) == n):
            raise GraphFormatError("per-node attribute lists must have length n")

    @classmethod
    def from_edges(cls, n: int, src, dst, tokens=None, names=None, texts=None) -> "DirectedGraph":
        """Build a graph from parallel edge arrays.

        Self-loops raise; duplicate edges are collapsed and counted.
        """
        src = np.asarray(src, dtype=np.int64).reshape(-1)
        dst = np.asarray(dst, dtype=np.int64).reshape(-1)
        if src.shape != dst.shape:
            raise GraphFormatError("src and dst must have equal length")
        if src.size and (src.min() < 0 or dst.min() < 0 or src.max() >= n or dst.max() >= n):
            raise GraphFormatError("edge endpoint outside 0..n-1")
        loops = np.flatnonzero(src == dst)
        if loops.size:
            raise GraphFormatError(f"self-loop on node {int(src[loops[0]])}")
        keys = np.unique(src * n + dst)
        n_dup = int(src.size - keys.size)
        u, v = np.divmod(keys, n)
        adj = sparse.csr_matrix(
            (np.ones(keys.size, dtype=np.int8), (u, v)), shape=(n, n)
        )
        adj.sort_indices()
        if tokens is None:
            tokens = [()] * n
        return cls(
            adjacency=adj,
            tokens=[tuple(t) for t in tokens],
            names=list(names) if names is not None else [],
            texts=list(texts) if texts is not None else [],
            n_duplicate_edges=n_dup,
        )

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def m(self) -> int:
        return int(self.adjacency.nnz)

    @cached_property
    def in_adjacency(self) -> sparse.csr_matrix:
        """Transposed adjacency: row ``v`` lists the predecessors of ``v``."""
        t = self.adjacency.T.tocsr()
        t.sort_indices()
        return t

    @cached_property
    def undirected(self) -> sparse.csr_matrix:
        und = (self.adjacency + self.in_adjacency).tocsr()
        und.data[:] = 1
        und.sort_indices()
        return und

    @cached_property
    def out_degree(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr).astype(np.int64)

    @cached_property
    def in_degree(self) -> np.ndarray:
        return np.diff(self.in_adjacency.indptr).astype(np.int64)

    def successors(self, v: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    def predecessors(self, v: int) -> np.ndarray:
        a = self.in_adjacency
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Edge arrays ``(src, dst)`` sorted by source then target."""
        coo = self.adjacency.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order].astype(np.int64), coo.col[order].astype(np.int64)

    def check_symmetry(self) -> bool:
        """True when in- and out-adjacency describe the same edge set."""
        diff = self.adjacency - self.in_adjacency.T
        return diff.count_nonzero() == 0


@dataclass(eq=False)
class LabelPartition:
    """Role and (optional) label of every node.

    ``labels`` holds 0-based label indices with ``-1`` meaning absent.
    """

    K: int
    roles: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.roles = np.asarray(self.roles, dtype=np.int8)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.roles.shape != self.labels.shape:
            raise GraphFormatError("roles and labels must have the same length")
        if self.K < 1:
            raise GraphFormatError("K must be at least 1")
        if np.any((self.roles < 0) | (self.roles > UNKNOWN)):
            raise GraphFormatError("unknown role code")
        has = self.labels >= 0
        if np.any(self.labels >= self.K):
            raise GraphFormatError(f"label outside 1..{self.K}")
        missing = (self.roles != UNKNOWN) & ~has
        if np.any(missing):
            i = int(np.flatnonzero(missing)[0])
            raise GraphFormatError(f"{ROLE_NAMES[self.roles[i]]} node {i} has no label")
        if np.any((self.roles == UNKNOWN) & has):
            raise GraphFormatError("unknown-role nodes must not carry a label")

    @property
    def n(self) -> int:
        return self.roles.size

    def mask(self, role: int) -> np.ndarray:
        return self.roles == role

    @property
    def train_mask(self) -> np.ndarray:
        return self.roles == TRAIN

    @property
    def unlabeled_nodes(self) -> np.ndarray:
        """Nodes whose labels are hidden during prediction (everything but train)."""
        return np.flatnonzero(self.roles != TRAIN)

    def train_labels(self) -> np.ndarray:
        """Label array with every non-training label masked to ``-1``."""
        return np.where(self.train_mask, self.labels, -1)


def load_graph(node_table, edge_list, num_labels: int | None = None) -> tuple[DirectedGraph, LabelPartition]:
    """Read a node table and an edge list (both UTF-8 TSV).

    Parameters
    ----------
    node_table, edge_list : path or iterable of lines
        Node rows are ``id  role  label  text``; edge rows are ``src  dst``.
        Lines starting with ``#`` are skipped.
    num_labels : int, optional
        Number of labels K.  Defaults to the largest label present.
    """
    names: list[str] = []
    roles: list[int] = []
    labels: list[int] = []
    texts: list[str] = []
    index: dict[str, int] = {}
    for lineno, line in _lines(node_table):
        parts = line.split("\t", 3)
        if len(parts) < 2:
            raise GraphFormatError(f"node table line {lineno}: expected id, role, label, text")
        parts += [""] * (4 - len(parts))
        name, role, label, text = parts
        if name in index:
            raise GraphFormatError(f"node table line {lineno}: duplicate id {name!r}")
        if role not in _ROLE_CODES:
            raise GraphFormatError(f"node table line {lineno}: unknown role {role!r}")
        label = label.strip()
        if label:
            try:
                lab = int(label)
            except ValueError:
                raise GraphFormatError(f"node table line {lineno}: bad label {label!r}") from None
            if lab < 1 or (num_labels is not None and lab > num_labels):
                raise GraphFormatError(
                    f"node table line {lineno}: label {lab} outside 1..{num_labels or 'K'}"
                )
        else:
            lab = 0
        index[name] = len(names)
        names.append(name)
        roles.append(_ROLE_CODES[role])
        labels.append(lab - 1)
        texts.append(text)

    src: list[int] = []
    dst: list[int] = []
    for lineno, line in _lines(edge_list):
        parts = line.split("\t")
        if len(parts) < 2:
            raise GraphFormatError(f"edge list line {lineno}: expected src, dst")
        a, b = parts[0].strip(), parts[1].strip()
        for name in (a, b):
            if name not in index:
                raise GraphFormatError(f"edge list line {lineno}: unknown node id {name!r}")
        if a == b:
            raise GraphFormatError(f"edge list line {lineno}: self-loop on {a!r}")
        src.append(index[a])
        dst.append(index[b])

    K = num_labels if num_labels is not None else max(max(labels, default=-1) + 1, 1)
    partition = LabelPartition(K=K, roles=np.array(roles), labels=np.array(labels))
    graph = DirectedGraph.from_edges(
        len(names), src, dst, tokens=[tokenize(t) for t in texts], names=names, texts=texts
    )
    if graph.n_duplicate_edges:
        logger.warning("collapsed %d duplicate edge(s)", graph.n_duplicate_edges)
    return graph, partition


def _lines(source) -> Iterable[tuple[int, str]]:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    else:
        lines = [ln.rstrip("\r\n") for ln in source]
    for lineno, line in enumerate(lines, 1):
        if not line.strip() or line.startswith("#"):
            continue
        yield lineno, line


def write_graph(graph: DirectedGraph, partition: LabelPartition, node_path, edge_path) -> None:
    """Write the graph back in the node-table/edge-list format."""
    with open(node_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# id\trole\tlabel\ttext\n")
        for v in range(graph.n):
            lab = partition.labels[v]
            text = graph.texts[v].replace("\t", " ").replace("\n", " ")
            fh.write(f"{graph.names[v]}\t{ROLE_NAMES[partition.roles[v]]}\t"
                     f"{lab + 1 if lab >= 0 else ''}\t{text}\n")
    src, dst = graph.edges()
    with open(edge_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# src\tdst\n")
        for u, v in zip(src.tolist(), dst.tolist()):
            fh.write(f"{graph.names[u]}\t{graph.names[v]}\n")


def one_hot(labels: np.ndarray, K: int) -> sparse.csr_matrix:
    """Sparse indicator matrix; rows with label ``-1`` are empty."""
    labels = np.asarray(labels)
    rows = np.flatnonzero(labels >= 0)
    return sparse.csr_matrix(
        (np.ones(rows.size), (rows, labels[rows])), shape=(labels.size, K)
    )


def label_count_matrices(graph: DirectedGraph, labels: np.ndarray, K: int,
                         nodes: Sequence[int] | None = None,
                         require_complete: bool = True) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """Predecessor and successor label counts ``(P, S)`` for many nodes.

    Row ``r`` corresponds to ``nodes[r]`` (all nodes when ``nodes`` is None).
    With ``require_complete`` every neighbour must carry a label; otherwise
    unlabelled neighbours are simply not counted.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if nodes is None:
        a_in, a_out = graph.in_adjacency, graph.adjacency
        d_in, d_out = graph.in_degree, graph.out_degree
    else:
        nodes = np.asarray(nodes, dtype=np.int64)
        a_in, a_out = graph.in_adjacency[nodes], graph.adjacency[nodes]
        d_in, d_out = graph.in_degree[nodes], graph.out_degree[nodes]
    ind = one_hot(labels, K)
    P = (a_in.astype(np.float64) @ ind).tocsr()
    S = (a_out.astype(np.float64) @ ind).tocsr()
    for M in (P, S):
        M.eliminate_zeros()
        M.sort_indices()
    if require_complete:
        if np.any(np.asarray(P.sum(axis=1)).ravel() != d_in) or \
                np.any(np.asarray(S.sum(axis=1)).ravel() != d_out):
            raise ValueError("a neighbour has no label in effect")
    return P, S


def neighbor_label_counts(graph: DirectedGraph, labels: np.ndarray, K: int, v: int) -> tuple[np.ndarray, np.ndarray]:
    """Label frequency vectors of the predecessors and successors of ``v``."""
    labels = np.asarray(labels)
    pred, succ = graph.predecessors(v), graph.successors(v)
    if np.any(labels[pred] < 0) or np.any(labels[succ] < 0):
        raise ValueError(f"a neighbour of node {v} has no label in effect")
    p = np.bincount(labels[pred], minlength=K).astype(np.int64)
    s = np.bincount(labels[succ], minlength=K).astype(np.int64)
    return p, s


def _fallback_label(K: int, seed: int, v: int) -> int:
    return int(np.random.default_rng([seed, int(v)]).integers(K))


def nearest_labeled(graph: DirectedGraph, partition: LabelPartition, v: int, seed: int = 0) -> int:
    """Label of the closest training node, exploring the undirected view.

    Ties at equal distance go to the smallest node id.  If no training
    node is reachable a label is drawn uniformly from a generator seeded
    by ``(seed, v)``.
    """
    known = partition.train_mask
    und = graph.undirected
    seen = {int(v)}
    frontier = [int(v)]
    while frontier:
        nxt = set()
        for u in frontier:
            for w in und.indices[und.indptr[u]:und.indptr[u + 1]].tolist():
                if w not in seen:
                    seen.add(w)
                    nxt.add(w)
        hits = [w for w in nxt if known[w]]
        if hits:
            return int(partition.labels[min(hits)])
        frontier = sorted(nxt)
    return _fallback_label(partition.K, seed, v)


def nearest_labels(graph: DirectedGraph, partition: LabelPartition, nodes, seed: int = 0) -> np.ndarray:
    """Vectorised :func:`nearest_labeled` for many nodes.

    Runs one multi-source breadth-first search from every training node;
    each node keeps the smallest source id among those at minimum distance.
    Training nodes in ``nodes`` resolve to themselves only if they are the
    query, so queries are answered at distance >= 1 as in the single-node
    routine.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    n = graph.n
    und = graph.undirected
    known = partition.train_mask
    # source[v] = smallest training id at minimal distance from v (distance 0 for training nodes)
    source = np.full(n, -1, dtype=np.int64)
    source[known] = np.flatnonzero(known)
    frontier = np.flatnonzero(known)
    while frontier.size:
        starts, ends = und.indptr[frontier], und.indptr[frontier + 1]
        counts = ends - starts
        if counts.sum() == 0:
            break
        origin = np.repeat(frontier, counts)
        offsets = np.repeat(starts - np.concatenate(([0], np.cumsum(counts)[:-1])), counts)
        nbr = und.indices[np.arange(counts.sum()) + offsets]
        fresh = source[nbr] < 0
        nbr, origin = nbr[fresh], origin[fresh]
        if nbr.size == 0:
            break
        cand = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
        np.minimum.at(cand, nbr, source[origin])
        newly = np.unique(nbr)
        source[newly] = cand[newly]
        frontier = newly

    out = np.empty(nodes.size, dtype=np.int64)
    for r, v in enumerate(nodes.tolist()):
        if known[v]:
            # distance-0 source is the node itself; the query wants its neighbourhood
            out[r] = nearest_labeled(graph, partition, v, seed)
        elif source[v] >= 0:
            out[r] = partition.labels[source[v]]
        else:
            out[r] = _fallback_label(partition.K, seed, v)
    return out

"""ML/MAP prediction, discrepancy breakdowns and iterative refinement over a graph.

All scores are negative log probabilities ("discrepancies"); the
predicted label minimises their sum.  Ties go to the smallest label
index, and a row in which every label is impossible falls back to the
most probable label under the prior.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import sparse, special

from .estimation import ModelParams
from .graph import VAL, DirectedGraph, LabelPartition, label_count_matrices, nearest_labels
from .metrics import METRICS
from .text import log_omega_matrix

logger = logging.getLogger(__name__)

ML, MAP = "ml", "map"
TEXT_ONLY, NEAREST_NODE = "text_only", "nearest_node"
CHUNK = 4096

TERMS = ("label_predecessors", "label_successors", "predecessor_count",
         "successor_count", "attribute", "prior")
TERM_TITLES = {
    "attribute": "Attribute discrepancy",
    "predecessor_count": "Predecessor count discrepancy",
    "successor_count": "Successor count discrepancy",
    "label_predecessors": "Label Predecessors discrepancy",
    "label_successors": "Label Successors discrepancy",
    "prior": "Prior discrepancy",
}


@dataclass
class NodeView:
    """Everything the single-node predictor reads: attribute vector, degrees, neighbour label counts."""

    x: Mapping[int, float]
    d_in: int
    d_out: int
    p: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.int64)
        self.s = np.asarray(self.s, dtype=np.int64)
        if int(self.p.sum()) != self.d_in or int(self.s.sum()) != self.d_out:
            raise ValueError("neighbour label counts must sum to the degrees")


@dataclass
class DiscrepancyBreakdown:
    label_predecessors: np.ndarray
    label_successors: np.ndarray
    predecessor_count: np.ndarray
    successor_count: np.ndarray
    attribute: np.ndarray
    prior: np.ndarray

    @property
    def ml_total(self) -> np.ndarray:
        return _ml_sum(self.label_predecessors, self.label_successors, self.predecessor_count,
                       self.successor_count, self.attribute)

    @property
    def map_total(self) -> np.ndarray:
        return self.ml_total + self.prior

    def total(self, mode: str) -> np.ndarray:
        return self.map_total if mode == MAP else self.ml_total

    def ranked(self, mode: str = MAP, top_k: int | None = None) -> list[int]:
        """Label indices ordered by total discrepancy (ties by index)."""
        order = np.argsort(self.total(mode), kind="stable")
        return [int(i) for i in order[:top_k]]

    def term(self, name: str) -> np.ndarray:
        return getattr(self, name)


def _ml_sum(lp, ls, pc, sc, at):
    # fixed left-to-right order so every code path produces identical floats
    return (((lp + ls) + pc) + sc) + at


def _pick(totals: np.ndarray, log_pi: np.ndarray) -> np.ndarray:
    labels = np.argmin(totals, axis=1)
    dead = ~np.isfinite(totals).any(axis=1)
    if dead.any():
        labels[dead] = int(np.argmax(log_pi))
    return labels


def _multinomial_terms(C: sparse.csr_matrix, log_rows_T: np.ndarray, degree: np.ndarray) -> np.ndarray:
    """``-log g(c; d, row_i)`` for every row ``c`` of ``C`` and every label ``i``."""
    coef = special.gammaln(degree + 1.0)
    if C.nnz:
        G = C.copy()
        G.data = special.gammaln(G.data + 1.0)
        coef = coef - np.asarray(G.sum(axis=1)).ravel()
    # sparse product touches stored (positive) counts only, so 0 * -inf never occurs
    return -(coef[:, None] + np.asarray(C @ log_rows_T))


def _degree_terms(dists, degree: np.ndarray) -> np.ndarray:
    out = np.empty((degree.size, len(dists)))
    for i, d in enumerate(dists):
        out[:, i] = -np.atleast_1d(d.log_pmf(degree))
    return out


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def batch_breakdown(params: ModelParams, X, d_in, d_out, P, S) -> DiscrepancyBreakdown:
    """Discrepancy terms for many nodes at once; every field is ``n x K``."""
    d_in = np.asarray(d_in, dtype=np.int64)
    d_out = np.asarray(d_out, dtype=np.int64)
    P = sparse.csr_matrix(P, dtype=np.float64)
    S = sparse.csr_matrix(S, dtype=np.float64)
    P.eliminate_zeros()
    S.eliminate_zeros()
    n = d_in.size
    return DiscrepancyBreakdown(
        label_predecessors=_multinomial_terms(P, _log(params.xi).T, d_in.astype(np.float64)),
        label_successors=_multinomial_terms(S, _log(params.theta).T, d_out.astype(np.float64)),
        predecessor_count=_degree_terms(params.psi, d_in),
        successor_count=_degree_terms(params.phi, d_out),
        attribute=-log_omega_matrix(X, params.eta),
        prior=np.broadcast_to(-_log(params.pi), (n, params.K)).copy(),
    )


def _view_matrices(view: NodeView, params: ModelParams):
    items = sorted((j, w) for j, w in view.x.items() if w)
    X = sparse.csr_matrix(
        ([w for _, w in items], ([0] * len(items), [j for j, _ in items])),
        shape=(1, params.eta.size),
    )
    return X, [view.d_in], [view.d_out], sparse.csr_matrix(view.p[None, :]), sparse.csr_matrix(view.s[None, :])


def discrepancies(view: NodeView, params: ModelParams) -> DiscrepancyBreakdown:
    """The six per-label discrepancy terms for a single node."""
    b = batch_breakdown(params, *_view_matrices(view, params))
    return DiscrepancyBreakdown(**{name: b.term(name)[0] for name in TERMS})


def predict_ml(view: NodeView, params: ModelParams) -> int:
    return int(_pick(discrepancies(view, params).ml_total[None, :], _log(params.pi))[0])


def predict_map(view: NodeView, params: ModelParams) -> int:
    return int(_pick(discrepancies(view, params).map_total[None, :], _log(params.pi))[0])


def predict_batch(breakdown: DiscrepancyBreakdown, params: ModelParams, mode: str) -> np.ndarray:
    return _pick(breakdown.total(mode), _log(params.pi))


# ---------------------------------------------------------------------------
# many nodes

@dataclass
class PredictionHistory:
    """Label estimates for the unlabelled nodes at every iteration."""

    nodes: np.ndarray
    labels: list[np.ndarray] = field(default_factory=list)
    changed: list[float] = field(default_factory=list)

    @property
    def n_iterations(self) -> int:
        return len(self.labels)

    def labels_in_effect(self, partition: LabelPartition, t: int) -> np.ndarray:
        """True training labels plus the iteration-``t`` estimates for everyone else."""
        out = partition.train_labels().copy()
        out[self.nodes] = self.labels[t]
        return out


class GraphPredictor:
    """Caches the label-independent discrepancy terms of the unlabelled nodes.

    Work is split into fixed-size row chunks, so the result does not depend
    on ``workers``.
    """

    def __init__(self, graph: DirectedGraph, partition: LabelPartition, params: ModelParams,
                 workers: int = 1, X=None):
        if partition.K != params.K:
            raise ValueError(f"model has K={params.K} labels but the partition has K={partition.K}")
        self.graph, self.partition, self.params = graph, partition, params
        self.workers = max(1, int(workers))
        self.nodes = partition.unlabeled_nodes
        if X is None:
            X = params.document_matrix(graph)
        self.X = sparse.csr_matrix(X)[self.nodes]
        self.d_in = graph.in_degree[self.nodes]
        self.d_out = graph.out_degree[self.nodes]
        self.log_pi = _log(params.pi)
        self._chunks = [slice(a, min(a + CHUNK, self.nodes.size)) for a in range(0, self.nodes.size, CHUNK)]
        static = self._map(self._static_chunk)
        self.predecessor_count = _stack([s[0] for s in static], params.K)
        self.successor_count = _stack([s[1] for s in static], params.K)
        self.attribute = _stack([s[2] for s in static], params.K)

    def _map(self, fn, *args):
        if self.workers > 1 and len(self._chunks) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                return list(pool.map(lambda sl: fn(sl, *args), self._chunks))
        return [fn(sl, *args) for sl in self._chunks]

    def _static_chunk(self, sl):
        return (_degree_terms(self.params.psi, self.d_in[sl]),
                _degree_terms(self.params.phi, self.d_out[sl]),
                -log_omega_matrix(self.X[sl], self.params.eta))

    def text_only(self) -> np.ndarray:
        return _pick(self.attribute, self.log_pi)

    def breakdown(self, labels_in_effect: np.ndarray) -> DiscrepancyBreakdown:
        parts = self._map(self._breakdown_chunk, labels_in_effect)
        return DiscrepancyBreakdown(**{name: _stack([p.term(name) for p in parts], self.params.K)
                                       for name in TERMS})

    def _breakdown_chunk(self, sl, labels_in_effect):
        P, S = label_count_matrices(self.graph, labels_in_effect, self.params.K, nodes=self.nodes[sl])
        n = sl.stop - sl.start
        return DiscrepancyBreakdown(
            label_predecessors=_multinomial_terms(P, _log(self.params.xi).T, self.d_in[sl].astype(np.float64)),
            label_successors=_multinomial_terms(S, _log(self.params.theta).T, self.d_out[sl].astype(np.float64)),
            predecessor_count=self.predecessor_count[sl],
            successor_count=self.successor_count[sl],
            attribute=self.attribute[sl],
            prior=np.broadcast_to(-self.log_pi, (n, self.params.K)).copy(),
        )

    def step(self, labels_in_effect: np.ndarray, mode: str) -> np.ndarray:
        parts = self._map(self._step_chunk, labels_in_effect, mode)
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)

    def _step_chunk(self, sl, labels_in_effect, mode):
        return _pick(self._breakdown_chunk(sl, labels_in_effect).total(mode), self.log_pi)


def _stack(blocks, K):
    return np.concatenate(blocks) if blocks else np.zeros((0, K))


def initial_estimates(graph: DirectedGraph, partition: LabelPartition, params: ModelParams,
                      strategy: str = NEAREST_NODE, seed: int = 0, predictor: GraphPredictor | None = None,
                      workers: int = 1) -> np.ndarray:
    """Iteration-0 labels for the unlabelled nodes (aligned with ``partition.unlabeled_nodes``)."""
    if strategy == TEXT_ONLY:
        predictor = predictor or GraphPredictor(graph, partition, params, workers)
        return predictor.text_only()
    if strategy == NEAREST_NODE:
        return nearest_labels(graph, partition, partition.unlabeled_nodes, seed)
    raise ValueError(f"unknown iteration-0 strategy {strategy!r}")


def iterate_predictions(graph: DirectedGraph, partition: LabelPartition, params: ModelParams,
                        mode: str = MAP, T: int = 6, epsilon: float = 1e-3,
                        strategy: str = NEAREST_NODE, seed: int = 0, workers: int = 1,
                        predictor: GraphPredictor | None = None) -> PredictionHistory:
    """Synchronous refinement: iteration ``t`` reads only iteration ``t-1`` estimates.

    Stops after ``T`` iterations or once at most a fraction ``epsilon`` of
    the unlabelled nodes changed label.
    """
    if T < 1 or not 0 < epsilon < 1:
        raise ValueError("need T >= 1 and 0 < epsilon < 1")
    if mode not in (ML, MAP):
        raise ValueError(f"mode must be {ML!r} or {MAP!r}")
    nodes = partition.unlabeled_nodes
    history = PredictionHistory(nodes=nodes)
    if nodes.size == 0:
        history.labels.append(np.zeros(0, dtype=np.int64))
        return history
    predictor = predictor or GraphPredictor(graph, partition, params, workers)
    current = initial_estimates(graph, partition, params, strategy, seed, predictor)
    history.labels.append(current)
    for t in range(1, T + 1):
        state = partition.train_labels().copy()
        state[nodes] = current
        new = predictor.step(state, mode)
        frac = float(np.mean(new != current))
        history.labels.append(new)
        history.changed.append(frac)
        logger.info("iteration %d: %.4f of unlabelled nodes changed", t, frac)
        current = new
        if frac <= epsilon:
            break
    return history


def iteration_scores(history: PredictionHistory, partition: LabelPartition,
                     metric: str = "macro_f1", role: int = VAL) -> list[float]:
    """Metric per iteration over the nodes with the given role."""
    fn = METRICS[metric]
    sel = partition.roles[history.nodes] == role
    truth = partition.labels[history.nodes][sel]
    return [fn(truth, labels[sel], partition.K) for labels in history.labels]


def select_iteration(history: PredictionHistory, partition: LabelPartition,
                     metric: str = "macro_f1") -> int:
    """Iteration with the best validation score (earliest on ties)."""
    if not np.any(partition.roles[history.nodes] == VAL):
        logger.warning("no validation nodes; using the last iteration")
        return history.n_iterations - 1
    scores = iteration_scores(history, partition, metric)
    return int(np.argmax(scores))


def node_view(graph: DirectedGraph, params: ModelParams, labels_in_effect: np.ndarray, v: int,
              X=None) -> NodeView:
    """Assemble the :class:`NodeView` of node ``v`` under the given labels."""
    from .graph import neighbor_label_counts

    p, s = neighbor_label_counts(graph, labels_in_effect, params.K, v)
    if X is None:
        X = params.document_matrix(graph)
    row = sparse.csr_matrix(X)[v]
    x = {int(j): float(w) for j, w in zip(row.indices, row.data)}
    return NodeView(x=x, d_in=int(graph.in_degree[v]), d_out=int(graph.out_degree[v]), p=p, s=s)


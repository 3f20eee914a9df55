"""Text-only multinomial Naive Bayes, written independently of the graph model."""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .graph import DirectedGraph, LabelPartition
from .text import COUNT, Vocabulary, build_vocabulary, document_matrix

DEFAULT_ALPHA = 0.01


class MultinomialNaiveBayes:
    """Multinomial NB with additive smoothing and a fitted class prior.

    Parameters
    ----------
    alpha : float
        Pseudo-count added to every (class, term) weight.
    """

    def __init__(self, alpha: float = DEFAULT_ALPHA):
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        self.alpha = alpha
        self.class_log_prior_: np.ndarray | None = None
        self.feature_log_prob_: np.ndarray | None = None

    def fit(self, X, y, K: int) -> "MultinomialNaiveBayes":
        X = sparse.csr_matrix(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        counts = np.bincount(y, minlength=K).astype(np.float64)
        # class-by-term weight totals
        totals = np.zeros((K, X.shape[1]))
        for i in range(K):
            rows = np.flatnonzero(y == i)
            if rows.size:
                totals[i] = np.asarray(X[rows].sum(axis=0)).ravel()
        smoothed = totals + self.alpha
        den = totals.sum(axis=1, keepdims=True) + X.shape[1] * self.alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            self.class_log_prior_ = np.log(counts / counts.sum())
            self.feature_log_prob_ = np.log(smoothed / den)
        # a class with no weight at all and no smoothing gets a flat row
        self.feature_log_prob_[den.ravel() == 0] = -np.log(max(X.shape[1], 1))
        return self

    def joint_log_likelihood(self, X) -> np.ndarray:
        X = sparse.csr_matrix(X, dtype=np.float64)
        X.eliminate_zeros()
        return np.asarray(X @ self.feature_log_prob_.T) + self.class_log_prior_

    def predict(self, X) -> np.ndarray:
        """Arg-max class; ties resolve to the smallest index."""
        jll = self.joint_log_likelihood(X)
        labels = np.argmax(jll, axis=1)
        dead = ~np.isfinite(jll).any(axis=1)
        if dead.any():
            labels[dead] = int(np.argmax(self.class_log_prior_))
        return labels


def text_only_predictions(graph: DirectedGraph, partition: LabelPartition, vocab_config,
                          alpha: float = DEFAULT_ALPHA) -> tuple[np.ndarray, MultinomialNaiveBayes, Vocabulary]:
    """Train on the training nodes' count vectors and label every non-training node."""
    train = np.flatnonzero(partition.train_mask)
    vocab = build_vocabulary([graph.tokens[v] for v in train.tolist()], vocab_config)
    X = document_matrix(graph.tokens, vocab, COUNT)
    nb = MultinomialNaiveBayes(alpha).fit(X[train], partition.labels[train], partition.K)
    return nb.predict(X[partition.unlabeled_nodes]), nb, vocab

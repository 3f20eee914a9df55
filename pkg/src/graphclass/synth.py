"""Synthetic data from the generative model, plus an extended-precision prediction oracle.

Two samplers:

* :func:`sample_local_views` draws exact single-node views (label, degrees,
  neighbour label counts, document) from the model's conditionals.
* :func:`sample_sbm_graph` draws an approximate global graph from a
  block model whose expected label-pair edge fractions follow ``theta``.
  It does not reproduce the degree distributions or ``xi``.

:func:`brute_force_totals` recomputes every probability by direct
multiplication in mpmath and shares no code with :mod:`graphclass.inference`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import mpmath
import numpy as np
from scipy import sparse

from . import distributions as dist
from .estimation import FitConfig, ModelParams
from .graph import ROLE_NAMES, UNKNOWN, DirectedGraph, LabelPartition, write_graph
from .text import COUNT, TermProbMatrix, VocabConfig, Vocabulary

DOC_LENGTH = (3, 12)


def term_names(tau: int) -> list[str]:
    return [f"w{j:04d}" for j in range(tau)]


def random_model(K: int, tau: int = 20, seed: int = 0, *, d_max: int = 6, concentration: float = 1.0,
                 uniform_prior: bool = False, degree_family: str = dist.TABLE) -> ModelParams:
    """A count-mode model with Dirichlet-drawn rows.

    ``degree_family`` other than ``table`` draws zero-inflated parametric
    degree laws with moderate random parameters.
    """
    rng = np.random.default_rng(seed)

    def rows(k, m):
        return rng.dirichlet(np.full(m, concentration), size=k)

    pi = np.full(K, 1.0 / K) if uniform_prior else rows(1, K)[0]
    theta, xi = rows(K, K), rows(K, K)

    def degree_dists():
        if degree_family == dist.TABLE:
            return [dist.SmoothedTable(r, 0.0) for r in rows(K, d_max + 1)]
        out = []
        for _ in range(K):
            beta = float(rng.uniform(0.05, 0.5))
            if degree_family == dist.POWERLAW:
                out.append(dist.ZeroInflatedTruncPowerLaw(beta, kappa=float(rng.uniform(1.0, 2.5)),
                                                          lam=float(rng.uniform(0.05, 0.5))))
            else:
                out.append(dist.ZeroInflatedDiscreteLogNormal(beta, mu=float(rng.uniform(0.0, 1.5)),
                                                              sigma=float(rng.uniform(0.4, 1.2))))
        return out

    psi, phi = degree_dists(), degree_dists()
    eta = TermProbMatrix(eta=rows(K, tau), alpha=0.0, mode=COUNT)
    vocab = Vocabulary(terms=term_names(tau), df=np.ones(tau, dtype=np.int64), n_docs=1,
                       config=VocabConfig(stop_words="none"))
    config = FitConfig(vectorizer=COUNT, ngram_min=1, ngram_max=1, min_df=1, max_df=1.0, stop_words="none",
                       psi_family=degree_family, phi_family=degree_family)
    return ModelParams(pi=pi, theta=theta, xi=xi, psi=psi, phi=phi, vocab=vocab, eta=eta, config=config)


def uniform_model(K: int, tau: int = 5, d_max: int = 6) -> ModelParams:
    """Every component uniform, so every view is a full tie."""
    params = random_model(K, tau, 0, d_max=d_max)
    params.pi = np.full(K, 1.0 / K)
    params.theta = np.full((K, K), 1.0 / K)
    params.xi = np.full((K, K), 1.0 / K)
    table = np.full(d_max + 1, 1.0 / (d_max + 1))
    params.psi = [dist.SmoothedTable(table.copy(), 0.0) for _ in range(K)]
    params.phi = [dist.SmoothedTable(table.copy(), 0.0) for _ in range(K)]
    params.eta = TermProbMatrix(eta=np.full((K, tau), 1.0 / tau), alpha=0.0, mode=COUNT)
    return params


# ---------------------------------------------------------------------------
# local views

@dataclass
class LocalViewSample:
    """``n`` independent node views stored column-wise."""

    y: np.ndarray
    d_in: np.ndarray
    d_out: np.ndarray
    P: np.ndarray
    S: np.ndarray
    docs: list[np.ndarray]
    tau: int

    @property
    def n(self) -> int:
        return self.y.size

    def X(self) -> sparse.csr_matrix:
        """Term-count matrix of the documents."""
        indptr = np.concatenate([[0], np.cumsum([d.size for d in self.docs])])
        cols = np.concatenate(self.docs) if self.docs else np.zeros(0, dtype=np.int64)
        X = sparse.csr_matrix((np.ones(cols.size), cols, indptr), shape=(self.n, self.tau))
        X.sum_duplicates()
        return X

    def view(self, k: int):
        from .inference import NodeView

        terms, counts = np.unique(self.docs[k], return_counts=True)
        return NodeView(x=dict(zip(terms.tolist(), counts.astype(float).tolist())),
                        d_in=int(self.d_in[k]), d_out=int(self.d_out[k]), p=self.P[k], s=self.S[k])


def _labelwise_degrees(dists, y, rng) -> np.ndarray:
    out = np.zeros(y.size, dtype=np.int64)
    for i, d in enumerate(dists):
        idx = np.flatnonzero(y == i)
        if idx.size:
            out[idx] = dist.sample_degrees(d, idx.size, rng)
    return out


def sample_local_views(params: ModelParams, n: int, seed: int = 0) -> LocalViewSample:
    """Draw ``n`` views: label from ``pi``, degrees from ``psi``/``phi``,
    neighbour labels from ``xi``/``theta`` rows, documents from ``eta``."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    K = params.K
    y = rng.choice(K, size=n, p=params.pi)
    d_in = _labelwise_degrees(params.psi, y, rng)
    d_out = _labelwise_degrees(params.phi, y, rng)
    P = rng.multinomial(d_in, params.xi[y]).astype(np.int64)
    S = rng.multinomial(d_out, params.theta[y]).astype(np.int64)
    docs = _documents_for(params, y, rng)
    return LocalViewSample(y=y, d_in=d_in, d_out=d_out, P=P, S=S, docs=docs, tau=params.eta.size)


# ---------------------------------------------------------------------------
# global block-model graphs

def _pairs_without_diagonal(rng, m: int, size: int) -> tuple[np.ndarray, np.ndarray]:
    k = rng.choice(size * (size - 1), size=m, replace=False)
    u = k // (size - 1)
    r = k % (size - 1)
    return u, r + (r >= u)


def sample_sbm_graph(params: ModelParams, n: int, seed: int = 0, mean_degree: float = 5.0,
                     attach_documents: bool = True) -> tuple[DirectedGraph, np.ndarray]:
    """Approximate global sampler.

    ``u -> v`` appears independently with probability
    ``c * theta[y_u, y_v] / pi[y_v]`` where ``c = mean_degree / n``, so the
    expected fraction of a label-``i`` node's out-edges landing on label
    ``j`` is ``theta[i, j]``.  ``c`` is reduced (with a warning) if any
    probability would exceed 1.
    """
    rng = np.random.default_rng(seed)
    K = params.K
    y = rng.choice(K, size=n, p=params.pi)
    members = [np.flatnonzero(y == i) for i in range(K)]
    sizes = np.array([m.size for m in members])
    with np.errstate(divide="ignore", invalid="ignore"):
        kernel = np.where(params.pi[None, :] > 0, params.theta / params.pi[None, :], 0.0)
    c = mean_degree / n if n else 0.0
    peak = float(kernel.max()) * c
    if peak > 1.0:
        warnings.warn(f"block probabilities up to {peak:.3g}; scaling the edge rate down", RuntimeWarning,
                      stacklevel=2)
        c /= peak
    src, dst = [], []
    for i in range(K):
        for j in range(K):
            prob = c * kernel[i, j]
            slots = sizes[i] * (sizes[j] - (i == j))
            if prob <= 0 or slots <= 0:
                continue
            m = int(rng.binomial(slots, min(prob, 1.0)))
            if m == 0:
                continue
            if i == j:
                a, b = _pairs_without_diagonal(rng, m, int(sizes[i]))
            else:
                k = rng.choice(slots, size=m, replace=False)
                a, b = k // sizes[j], k % sizes[j]
            src.append(members[i][a])
            dst.append(members[j][b])
    src_a = np.concatenate(src) if src else np.zeros(0, dtype=np.int64)
    dst_a = np.concatenate(dst) if dst else np.zeros(0, dtype=np.int64)
    if attach_documents:
        names = params.vocab.terms
        tokens = [tuple(names[j] for j in doc) for doc in _documents_for(params, y, rng)]
    else:
        tokens = [() for _ in range(n)]
    return DirectedGraph.from_edges(n, src_a, dst_a, tokens=tokens), y


def _documents_for(params: ModelParams, y: np.ndarray, rng) -> list[np.ndarray]:
    lengths = rng.integers(DOC_LENGTH[0], DOC_LENGTH[1] + 1, size=y.size)
    cdf = np.cumsum(params.eta.eta, axis=1)
    cdf /= cdf[:, -1:]
    owner = np.repeat(y, lengths)
    u = rng.random(owner.size)
    flat = np.empty(u.size, dtype=np.int64)
    for i in range(params.K):
        sel = owner == i
        flat[sel] = np.searchsorted(cdf[i], u[sel], side="right")
    np.minimum(flat, params.eta.size - 1, out=flat)
    return np.split(flat, np.cumsum(lengths)[:-1])


def assign_roles(n: int, fractions=(0.6, 0.1, 0.3, 0.0), seed: int = 0) -> np.ndarray:
    """Random role codes with the given train/val/test/unknown fractions."""
    fractions = np.asarray(fractions, dtype=np.float64)
    if fractions.size != len(ROLE_NAMES) or np.any(fractions < 0) or fractions.sum() <= 0:
        raise ValueError("need four non-negative role fractions")
    rng = np.random.default_rng(seed)
    return rng.choice(len(ROLE_NAMES), size=n, p=fractions / fractions.sum()).astype(np.int8)


def write_dataset(graph: DirectedGraph, labels: np.ndarray, roles: np.ndarray, K: int, directory) -> tuple[Path, Path]:
    """Write ``nodes.tsv`` and ``edges.tsv``; unknown-role nodes lose their labels."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    partition = LabelPartition(K, roles, np.where(roles == UNKNOWN, -1, labels))
    nodes, edges = directory / "nodes.tsv", directory / "edges.tsv"
    write_graph(graph, partition, nodes, edges)
    return nodes, edges


# ---------------------------------------------------------------------------
# extended-precision oracle

_WORKING_DIGITS = 60
_norm_cache: dict[tuple, float] = {}


def _positive_normalizer(d) -> float:
    key = (type(d).__name__, *sorted(d.params.items()))
    if key not in _norm_cache:
        ks = range(1, dist.D_MAX + 1)
        if isinstance(d, dist.ZeroInflatedTruncPowerLaw):
            terms = (k ** -d.kappa * math.exp(-d.lam * k) for k in ks)
        else:
            terms = (math.exp(-(math.log(k) - d.mu) ** 2 / (2 * d.sigma ** 2)) / (d.sigma * k) for k in ks)
        _norm_cache[key] = math.fsum(terms)
    return _norm_cache[key]


def _degree_probability(d, k: int):
    if isinstance(d, dist.SmoothedTable):
        return mpmath.mpf(float(d.probs[min(k, d.probs.size - 1)]))
    if k == 0:
        return mpmath.mpf(d.beta)
    if isinstance(d, dist.ZeroInflatedTruncPowerLaw):
        w = mpmath.power(k, -d.kappa) * mpmath.exp(-d.lam * k)
    else:
        w = mpmath.exp(-(mpmath.log(k) - d.mu) ** 2 / (2 * mpmath.mpf(d.sigma) ** 2)) / (d.sigma * k)
    return (1 - mpmath.mpf(d.beta)) * w / _positive_normalizer(d)


def _multinomial_probability(counts, row):
    d = int(sum(counts))
    prob = mpmath.factorial(d)
    for c, q in zip(counts, row):
        c = int(c)
        prob = prob / mpmath.factorial(c) * mpmath.power(mpmath.mpf(float(q)), c)
    return prob


def _label_probabilities(view, params: ModelParams, mode: str) -> list:
    out = []
    for i in range(params.K):
        prob = _multinomial_probability(view.p, params.xi[i])
        prob *= _multinomial_probability(view.s, params.theta[i])
        prob *= _degree_probability(params.psi[i], int(view.d_in))
        prob *= _degree_probability(params.phi[i], int(view.d_out))
        for j, w in view.x.items():
            prob *= mpmath.power(mpmath.mpf(float(params.eta.eta[i, j])), w)
        if mode == "map":
            prob *= mpmath.mpf(float(params.pi[i]))
        out.append(prob)
    return out


def brute_force_totals(view, params: ModelParams, mode: str = "ml") -> list[float]:
    """``-log`` of the joint view probability for every label, as floats."""
    with mpmath.workdps(_WORKING_DIGITS):
        return [float(-mpmath.log(p)) if p > 0 else math.inf
                for p in _label_probabilities(view, params, mode)]


def brute_force_predict(view, params: ModelParams, mode: str = "ml") -> int:
    """Label with the largest directly multiplied probability (smallest index on ties)."""
    with mpmath.workdps(_WORKING_DIGITS):
        probs = _label_probabilities(view, params, mode)
        best = max(probs)
        if best > 0:
            return probs.index(best)
    prior = params.pi.tolist()
    return prior.index(max(prior))

"""Tokenisation, vocabularies, document vectors and class-conditional term probabilities."""

from __future__ import annotations

import re
import struct
import warnings
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

_TOKEN_RE = re.compile(r"[^\W_]+")

COUNT, TFIDF = "count", "tfidf"
_MODE_CODES = {COUNT: 0, TFIDF: 1}
_ETA_MAGIC = b"GCETA\x00\x01\x00"


@lru_cache(maxsize=None)
def stop_words(list_id: str = "english") -> frozenset[str]:
    if list_id == "none":
        return frozenset()
    if list_id != "english":
        raise ValueError(f"unknown stop-word list {list_id!r}")
    raw = resources.files("graphclass").joinpath("stopwords.txt").read_text(encoding="utf-8")
    return frozenset(w for w in raw.split() if w)


def tokenize(text: str, stop_list: str = "english") -> tuple[str, ...]:
    """Lowercase, split on non-alphanumerics, drop 1-char tokens and stop words."""
    stops = stop_words(stop_list)
    return tuple(t for t in _TOKEN_RE.findall(text.lower()) if len(t) > 1 and t not in stops)


def ngrams(tokens: Sequence[str], ngram_range: tuple[int, int]) -> list[str]:
    lo, hi = ngram_range
    out = []
    for k in range(lo, hi + 1):
        out.extend(" ".join(tokens[i:i + k]) for i in range(len(tokens) - k + 1))
    return out


@dataclass(frozen=True)
class VocabConfig:
    ngram_range: tuple[int, int] = (1, 1)
    min_df: int = 1
    # fraction of training documents
    max_df: float = 1.0
    max_features: int | None = None
    stop_words: str = "english"

    def validate(self) -> None:
        lo, hi = self.ngram_range
        if lo < 1 or hi < lo:
            raise ValueError(f"empty n-gram range {self.ngram_range}")
        if self.min_df < 1:
            raise ValueError("min_df must be >= 1")
        if not 0.0 < self.max_df <= 1.0:
            raise ValueError("max_df must be a fraction in (0, 1]")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be positive")


@dataclass(eq=False)
class Vocabulary:
    """Ordered term list with training-corpus document frequencies."""

    terms: list[str]
    df: np.ndarray
    n_docs: int
    config: VocabConfig = field(default_factory=VocabConfig)

    def __post_init__(self):
        self.df = np.asarray(self.df, dtype=np.int64)
        if self.df.size != len(self.terms):
            raise ValueError("df must have one entry per term")

    @property
    def size(self) -> int:
        return len(self.terms)

    @cached_property
    def index(self) -> dict[str, int]:
        return {t: j for j, t in enumerate(self.terms)}

    @cached_property
    def idf(self) -> np.ndarray:
        """Smoothed inverse document frequency ``ln((1+N)/(1+df)) + 1``."""
        return np.log((1.0 + self.n_docs) / (1.0 + self.df)) + 1.0

    def counts(self, tokens: Sequence[str]) -> Counter:
        index = self.index
        return Counter(index[g] for g in ngrams(tokens, self.config.ngram_range) if g in index)


def build_vocabulary(corpus: Iterable[Sequence[str]], config: VocabConfig = VocabConfig()) -> Vocabulary:
    """Collect every n-gram of the tokenised training corpus that meets the df limits."""
    config.validate()
    df: Counter = Counter()
    freq: Counter = Counter()
    n_docs = 0
    for tokens in corpus:
        grams = ngrams(tokens, config.ngram_range)
        freq.update(grams)
        df.update(set(grams))
        n_docs += 1
    max_count = config.max_df * n_docs
    keep = [t for t, c in df.items() if config.min_df <= c <= max_count]
    if config.max_features is not None and len(keep) > config.max_features:
        keep.sort(key=lambda t: (-freq[t], t))
        keep = keep[:config.max_features]
    keep.sort()
    return Vocabulary(terms=keep, df=np.array([df[t] for t in keep], dtype=np.int64),
                      n_docs=n_docs, config=config)


def vectorize_count(doc: Sequence[str], vocab: Vocabulary) -> dict[int, int]:
    """In-vocabulary n-gram counts of one tokenised document."""
    return dict(sorted(vocab.counts(doc).items()))


def vectorize_tfidf(corpus: Iterable[Sequence[str]], vocab: Vocabulary) -> list[dict[int, float]]:
    """TF-IDF vectors (no length normalisation) using training-corpus df."""
    idf = vocab.idf
    return [{j: c * float(idf[j]) for j, c in vectorize_count(doc, vocab).items()} for doc in corpus]


def document_matrix(corpus: Sequence[Sequence[str]], vocab: Vocabulary, mode: str = COUNT) -> sparse.csr_matrix:
    """Stack document vectors into an ``n_docs x tau`` CSR matrix."""
    if mode not in _MODE_CODES:
        raise ValueError(f"unknown vectorization mode {mode!r}")
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for doc in corpus:
        counts = sorted(vocab.counts(doc).items())
        indices.extend(j for j, _ in counts)
        data.extend(float(c) for _, c in counts)
        indptr.append(len(indices))
    X = sparse.csr_matrix(
        (np.array(data, dtype=np.float64), np.array(indices, dtype=np.int64), np.array(indptr)),
        shape=(len(indptr) - 1, vocab.size),
    )
    if mode == TFIDF and X.nnz:
        X.data *= vocab.idf[X.indices]
    return X


@dataclass(eq=False)
class TermProbMatrix:
    """Row ``i`` holds the smoothed probability of each term under label ``i``."""

    eta: np.ndarray
    alpha: float
    mode: str = COUNT
    degenerate_rows: tuple[int, ...] = ()

    @property
    def K(self) -> int:
        return self.eta.shape[0]

    @property
    def size(self) -> int:
        return self.eta.shape[1]

    @cached_property
    def log_eta(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.eta)


def estimate_eta(X: sparse.spmatrix, labels: np.ndarray, K: int, alpha: float, mode: str = COUNT) -> TermProbMatrix:
    """Additively smoothed term probabilities per label.

    ``eta[i, j] = (w_ij + alpha) / (sum_j w_ij + tau * alpha)`` where ``w_ij``
    sums the weight of term ``j`` over documents with label ``i``.  Rows
    with ``-1`` labels are ignored.  A label with no weight and
    ``alpha == 0`` gets a uniform row and a warning.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    X = sparse.csr_matrix(X)
    labels = np.asarray(labels, dtype=np.int64)
    tau = X.shape[1]
    rows = np.flatnonzero(labels >= 0)
    Y = sparse.csr_matrix((np.ones(rows.size), (labels[rows], rows)), shape=(K, X.shape[0]))
    weights = np.asarray((Y @ X).todense(), dtype=np.float64)
    num = weights + alpha
    den = weights.sum(axis=1, keepdims=True) + tau * alpha
    degenerate = tuple(int(i) for i in np.flatnonzero(den.ravel() == 0))
    with np.errstate(invalid="ignore", divide="ignore"):
        eta = num / den
    if degenerate:
        warnings.warn(f"labels {[i + 1 for i in degenerate]} have no term weight; using uniform rows",
                      RuntimeWarning, stacklevel=2)
        eta[list(degenerate)] = 1.0 / tau if tau else 0.0
    return TermProbMatrix(eta=eta, alpha=float(alpha), mode=mode, degenerate_rows=degenerate)


def log_omega(x: Mapping[int, float], tpm: TermProbMatrix, i: int) -> float:
    """Unnormalised log attribute likelihood ``sum_j x_j ln eta_ij`` for label ``i``."""
    total = 0.0
    row = tpm.log_eta[i]
    for j, w in sorted(x.items()):
        if w:
            total += w * row[j]
    return float(total)


def log_omega_matrix(X: sparse.spmatrix, tpm: TermProbMatrix) -> np.ndarray:
    """``log_omega`` for every (document, label) pair as an ``n x K`` array."""
    X = sparse.csr_matrix(X)
    X.eliminate_zeros()
    if X.shape[1] == 0:
        return np.zeros((X.shape[0], tpm.K))
    # stored entries only, so 0 * -inf never arises
    return np.asarray(X @ tpm.log_eta.T)


def save_vocabulary(vocab: Vocabulary, directory: Path) -> None:
    directory = Path(directory)
    with open(directory / "vocab.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for j, t in enumerate(vocab.terms):
            fh.write(f"{t}\t{j}\n")
    with open(directory / "docfreq.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# n_docs={vocab.n_docs}\n")
        for j, d in enumerate(vocab.df.tolist()):
            fh.write(f"{j}\t{d}\n")


def load_vocabulary(directory: Path, config: VocabConfig) -> Vocabulary:
    directory = Path(directory)
    terms: list[str] = []
    with open(directory / "vocab.tsv", encoding="utf-8") as fh:
        for line in fh:
            term, j = line.rstrip("\n").rsplit("\t", 1)
            if int(j) != len(terms):
                raise ValueError("vocab.tsv indices must be 0..tau-1 in order")
            terms.append(term)
    df = np.zeros(len(terms), dtype=np.int64)
    n_docs = 0
    with open(directory / "docfreq.tsv", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                n_docs = int(line.split("=", 1)[1])
                continue
            j, d = line.split("\t")
            df[int(j)] = int(d)
    return Vocabulary(terms=terms, df=df, n_docs=n_docs, config=config)


def save_eta(tpm: TermProbMatrix, path: Path) -> None:
    """Binary layout: magic, ``<qqdq`` (K, tau, alpha, mode), little-endian float64 rows."""
    with open(path, "wb") as fh:
        fh.write(_ETA_MAGIC)
        fh.write(struct.pack("<qqdq", tpm.K, tpm.size, tpm.alpha, _MODE_CODES[tpm.mode]))
        fh.write(np.ascontiguousarray(tpm.eta, dtype="<f8").tobytes())


def load_eta(path: Path) -> TermProbMatrix:
    with open(path, "rb") as fh:
        if fh.read(8) != _ETA_MAGIC:
            raise ValueError(f"{path}: not an eta matrix file")
        K, tau, alpha, code = struct.unpack("<qqdq", fh.read(32))
        eta = np.frombuffer(fh.read(), dtype="<f8")
    if eta.size != K * tau:
        raise ValueError(f"{path}: truncated eta matrix")
    mode = {v: k for k, v in _MODE_CODES.items()}[code]
    eta = eta.reshape(K, tau).astype(np.float64)
    return TermProbMatrix(eta=eta, alpha=alpha, mode=mode)


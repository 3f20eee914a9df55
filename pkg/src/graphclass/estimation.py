"""Fitting the generative model from the training partition."""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import sparse

from . import distributions as dist
from .graph import UNKNOWN, DirectedGraph, LabelPartition, label_count_matrices
from .text import (
    COUNT,
    TFIDF,
    TermProbMatrix,
    VocabConfig,
    Vocabulary,
    build_vocabulary,
    document_matrix,
    estimate_eta,
    load_eta,
    load_vocabulary,
    save_eta,
    save_vocabulary,
)

logger = logging.getLogger(__name__)

IN, OUT = "in", "out"


@dataclass
class FitConfig:
    """Estimation hyperparameters.  Defaults equal the ``mgp`` preset."""

    alpha_pi: float = 0.0
    alpha_theta: float = 1.0
    alpha_xi: float = 1.0
    alpha_psi: float = 0.1
    alpha_phi: float = 0.1
    alpha_omega: float = 0.03
    vectorizer: str = TFIDF
    ngram_min: int = 1
    ngram_max: int = 2
    min_df: int = 2
    max_df: float = 0.5
    max_features: int | None = None
    stop_words: str = "english"
    psi_family: str = dist.TABLE
    phi_family: str = dist.POWERLAW
    n_fitted_params: int = 3

    @classmethod
    def mgp(cls) -> "FitConfig":
        return cls()

    @classmethod
    def arxiv(cls) -> "FitConfig":
        return cls(min_df=1, alpha_omega=0.002, psi_family=dist.LOGNORMAL, phi_family=dist.LOGNORMAL)

    def validate(self) -> None:
        for name in ("alpha_pi", "alpha_theta", "alpha_xi", "alpha_psi", "alpha_phi", "alpha_omega"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.vectorizer not in (COUNT, TFIDF):
            raise ValueError(f"vectorizer must be {COUNT!r} or {TFIDF!r}")
        for name in ("psi_family", "phi_family"):
            if getattr(self, name) not in dist.FAMILIES:
                raise ValueError(f"{name} must be one of {dist.FAMILIES}")
        self.vocab_config().validate()

    def vocab_config(self) -> VocabConfig:
        return VocabConfig(ngram_range=(self.ngram_min, self.ngram_max), min_df=self.min_df,
                           max_df=self.max_df, max_features=self.max_features, stop_words=self.stop_words)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_strings(cls, values: dict[str, str]) -> "FitConfig":
        kwargs = {}
        types = {f.name: f.type for f in fields(cls)}
        for key, raw in values.items():
            if key not in types:
                raise KeyError(key)
            kwargs[key] = parse_value(types[key], raw)
        return cls(**kwargs)


def parse_value(type_name: str, raw: str):
    raw = raw.strip()
    if type_name == "float":
        return float(raw)
    if type_name == "int":
        return int(raw)
    if type_name == "int | None":
        return None if raw.lower() in ("", "none") else int(raw)
    return raw


@dataclass(eq=False)
class ModelParams:
    pi: np.ndarray
    theta: np.ndarray
    xi: np.ndarray
    psi: list
    phi: list
    vocab: Vocabulary
    eta: TermProbMatrix
    config: FitConfig = field(default_factory=FitConfig)

    @property
    def K(self) -> int:
        return self.pi.size

    def document_matrix(self, graph: DirectedGraph) -> sparse.csr_matrix:
        return document_matrix(graph.tokens, self.vocab, self.eta.mode)


@dataclass
class FitReport:
    sample_sizes: np.ndarray
    gof: dict[tuple[str, int], dist.GofResult] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def gof_passes(self, direction: str) -> tuple[int, int]:
        results = [r for (d, _), r in self.gof.items() if d == direction]
        return sum(1 for r in results if r.accepted), len(results)

    def summary_lines(self, params: ModelParams) -> list[str]:
        lines = ["# label\tdirection\tfamily\tT\tdof\tp\tdecision"]
        for (direction, i), r in sorted(self.gof.items()):
            fam = (params.psi if direction == IN else params.phi)[i].family
            lines.append(f"{i + 1}\t{direction}\t" + r.summary_line(i + 1, fam).split("\t", 1)[1])
        return lines


def estimate_pi(train_labels, K: int, alpha: float) -> np.ndarray:
    """``(count(i) + alpha) / (n_train + K*alpha)``."""
    train_labels = np.asarray(train_labels, dtype=np.int64)
    train_labels = train_labels[train_labels >= 0]
    if alpha == 0 and train_labels.size == 0:
        raise ValueError("need at least one training label when alpha_pi = 0")
    counts = np.bincount(train_labels, minlength=K).astype(np.float64)
    return (counts + alpha) / (train_labels.size + K * alpha)


def smooth_rows(counts: np.ndarray, alpha: float, what: str = "row") -> tuple[np.ndarray, list[str]]:
    """Row-normalise ``counts + alpha``; all-zero rows become uniform with a warning."""
    counts = np.asarray(counts, dtype=np.float64)
    width = counts.shape[1]
    num = counts + alpha
    den = num.sum(axis=1, keepdims=True)
    notes = []
    empty = np.flatnonzero(den.ravel() == 0)
    with np.errstate(invalid="ignore"):
        out = num / den
    if empty.size:
        out[empty] = 1.0 / width
        notes.append(f"{what}: labels {[int(i) + 1 for i in empty]} have no observations; set uniform")
    return out, notes


def transitions_from_counts(labels, P, S, K: int, alpha_theta: float, alpha_xi: float):
    """Transition estimates from per-node neighbour label counts.

    Row ``i`` of Theta pools the successor counts ``S`` of nodes labelled
    ``i``; row ``i`` of Xi pools their predecessor counts ``P``.  Rows of
    ``P``/``S`` whose label is ``-1`` are skipped.
    """
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.flatnonzero(labels >= 0)
    Y = sparse.csr_matrix((np.ones(rows.size), (labels[rows], rows)), shape=(K, labels.size))
    theta_counts = np.asarray((Y @ sparse.csr_matrix(S)).todense())
    xi_counts = np.asarray((Y @ sparse.csr_matrix(P)).todense())
    theta, n1 = smooth_rows(theta_counts, alpha_theta, "theta")
    xi, n2 = smooth_rows(xi_counts, alpha_xi, "xi")
    return theta, xi, n1 + n2


def estimate_transitions(graph: DirectedGraph, partition: LabelPartition, alpha_theta: float, alpha_xi: float):
    """Transition matrices counted over edges whose endpoints are both training nodes."""
    labels = partition.train_labels()
    train = np.flatnonzero(partition.train_mask)
    P, S = label_count_matrices(graph, labels, partition.K, nodes=train, require_complete=False)
    theta, xi, notes = transitions_from_counts(labels[train], P, S, partition.K, alpha_theta, alpha_xi)
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    return theta, xi


def _smoothed_table(degrees: np.ndarray, d_max: int, alpha: float) -> tuple[dist.SmoothedTable, bool]:
    counts = np.bincount(degrees, minlength=d_max + 1)[:d_max + 1].astype(np.float64)
    den = degrees.size + (d_max + 1) * alpha
    if den == 0:
        return dist.SmoothedTable(np.full(d_max + 1, 1.0 / (d_max + 1)), alpha), True
    return dist.SmoothedTable((counts + alpha) / den, alpha), False


def estimate_degree_dists(graph: DirectedGraph, partition: LabelPartition, direction: str, family: str,
                          alpha: float = 0.0, n_fitted_params: int = 3, workers: int = 1):
    """Per-label degree distributions for one direction.

    Degrees are measured on the full graph; only training nodes enter the
    fit.  Parametric fits are checked against all labelled nodes of the
    label with a chi-squared test.

    Returns ``(dists, gof, notes)`` where ``gof`` maps label -> GofResult.
    """
    degrees = graph.in_degree if direction == IN else graph.out_degree
    K = partition.K
    train = partition.train_mask
    labelled = partition.roles != UNKNOWN
    d_max = int(degrees.max()) if degrees.size else 0
    notes: list[str] = []
    groups = [degrees[train & (partition.labels == i)] for i in range(K)]

    if family == dist.TABLE:
        dists = []
        for i, g in enumerate(groups):
            table, empty = _smoothed_table(g, d_max, alpha)
            if empty:
                notes.append(f"{direction}-degree: label {i + 1} has no training nodes; uniform table")
            dists.append(table)
        return dists, {}, notes

    def fit_one(i: int):
        g = groups[i]
        if g.size == 0:
            return _smoothed_table(g, d_max, 0.0)[0], None
        fitted = dist.fit_zero_inflated(g, family)
        check = degrees[labelled & (partition.labels == i)]
        try:
            result = dist.chi_square_gof(check, fitted, n_fitted_params)
        except ValueError:
            result = dist.GofResult.inconclusive_result(check.size)
        return fitted, result

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fit_one, range(K)))
    else:
        results = [fit_one(i) for i in range(K)]

    dists, gof = [], {}
    for i, (fitted, result) in enumerate(results):
        dists.append(fitted)
        if result is None:
            notes.append(f"{direction}-degree: label {i + 1} has no training nodes; uniform table")
            continue
        gof[i] = result
        if getattr(fitted, "degenerate", False):
            notes.append(f"{direction}-degree: label {i + 1} has no positive degrees; degenerate fit")
        elif fitted.tail_mass() > dist.TAIL_TOLERANCE:
            notes.append(f"{direction}-degree: label {i + 1} tail beyond D_MAX is {fitted.tail_mass():.3g}")
    return dists, gof, notes


def fit_model(graph: DirectedGraph, partition: LabelPartition, config: FitConfig | None = None,
              workers: int = 1) -> tuple[ModelParams, FitReport]:
    """Estimate every model component from the training nodes."""
    config = config or FitConfig()
    config.validate()
    K = partition.K
    train = np.flatnonzero(partition.train_mask)
    if train.size == 0:
        raise ValueError("the partition has no training nodes")
    labels = partition.labels[train]
    report = FitReport(sample_sizes=np.bincount(labels, minlength=K))

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        pi = estimate_pi(labels, K, config.alpha_pi)
        theta, xi = estimate_transitions(graph, partition, config.alpha_theta, config.alpha_xi)
        docs = [graph.tokens[v] for v in train.tolist()]
        vocab = build_vocabulary(docs, config.vocab_config())
        X = document_matrix(docs, vocab, config.vectorizer)
        eta = estimate_eta(X, labels, K, config.alpha_omega, config.vectorizer)
    report.warnings.extend(str(w.message) for w in caught)

    psi, gof_in, notes_in = estimate_degree_dists(graph, partition, IN, config.psi_family,
                                                  config.alpha_psi, config.n_fitted_params, workers)
    phi, gof_out, notes_out = estimate_degree_dists(graph, partition, OUT, config.phi_family,
                                                    config.alpha_phi, config.n_fitted_params, workers)
    report.gof.update({(IN, i): r for i, r in gof_in.items()})
    report.gof.update({(OUT, i): r for i, r in gof_out.items()})
    report.warnings.extend(notes_in + notes_out)
    for note in report.warnings:
        logger.warning(note)
    params = ModelParams(pi=pi, theta=theta, xi=xi, psi=psi, phi=phi, vocab=vocab, eta=eta, config=config)
    return params, report


# ---------------------------------------------------------------------------
# persistence

def _write_matrix(path: Path, M: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in np.atleast_2d(M):
            fh.write("\t".join(repr(float(x)) for x in row) + "\n")


def _read_matrix(path: Path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return np.array([[float(x) for x in line.split("\t")] for line in fh if line.strip()])


def _write_degree(path: Path, d) -> None:
    lines = [f"family\t{d.family}"]
    if isinstance(d, dist.SmoothedTable):
        lines.append(f"alpha\t{d.alpha!r}")
        lines.extend(f"{k}\t{float(p)!r}" for k, p in enumerate(d.probs))
    else:
        lines.extend(f"{k}\t{float(v)!r}" for k, v in d.params.items())
        lines.append(f"degenerate\t{int(d.degenerate)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_degree(path: Path):
    rows = [ln.split("\t") for ln in path.read_text(encoding="utf-8").splitlines() if ln]
    family = rows[0][1]
    if family == dist.TABLE:
        alpha = float(rows[1][1])
        probs = np.array([float(v) for _, v in rows[2:]])
        return dist.SmoothedTable(probs, alpha)
    kv = {k: v for k, v in rows[1:]}
    degenerate = bool(int(kv.get("degenerate", "0")))
    if family == dist.POWERLAW:
        return dist.ZeroInflatedTruncPowerLaw(float(kv["beta"]), kappa=float(kv["kappa"]),
                                              lam=float(kv["lambda"]), degenerate=degenerate)
    return dist.ZeroInflatedDiscreteLogNormal(float(kv["beta"]), mu=float(kv["mu"]),
                                              sigma=float(kv["sigma"]), degenerate=degenerate)


def save_model(params: ModelParams, directory) -> None:
    """Write the model directory (TSV tables, per-label degree files, ``eta.bin``)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cfg = params.config.to_dict()
    lines = [f"K = {params.K}", f"tau = {params.vocab.size}"]
    lines += [f"{k} = {'none' if v is None else v}" for k, v in cfg.items()]
    (directory / "config.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    with open(directory / "pi.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for i, p in enumerate(params.pi.tolist()):
            fh.write(f"{i + 1}\t{p!r}\n")
    _write_matrix(directory / "theta.tsv", params.theta)
    _write_matrix(directory / "xi.tsv", params.xi)
    for i in range(params.K):
        _write_degree(directory / f"degree_in_{i + 1}.txt", params.psi[i])
        _write_degree(directory / f"degree_out_{i + 1}.txt", params.phi[i])
    save_eta(params.eta, directory / "eta.bin")
    save_vocabulary(params.vocab, directory)


def load_model(directory) -> ModelParams:
    directory = Path(directory)
    raw = {}
    for line in (directory / "config.txt").read_text(encoding="utf-8").splitlines():
        if line.strip() and not line.startswith("#"):
            k, v = line.split("=", 1)
            raw[k.strip()] = v.strip()
    K = int(raw.pop("K"))
    raw.pop("tau", None)
    config = FitConfig.from_strings(raw)
    pi = np.array([float(ln.split("\t")[1]) for ln in
                   (directory / "pi.tsv").read_text(encoding="utf-8").splitlines() if ln])
    theta = _read_matrix(directory / "theta.tsv")
    xi = _read_matrix(directory / "xi.tsv")
    psi = [_read_degree(directory / f"degree_in_{i + 1}.txt") for i in range(K)]
    phi = [_read_degree(directory / f"degree_out_{i + 1}.txt") for i in range(K)]
    eta = load_eta(directory / "eta.bin")
    vocab = load_vocabulary(directory, config.vocab_config())
    if pi.size != K or theta.shape != (K, K) or xi.shape != (K, K) or eta.K != K or eta.size != vocab.size:
        raise ValueError(f"{directory}: inconsistent model files")
    return ModelParams(pi=pi, theta=theta, xi=xi, psi=psi, phi=phi, vocab=vocab, eta=eta, config=config)

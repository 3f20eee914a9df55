"""``graphclass`` command line: fit, predict, evaluate, explain, gof, synth, baseline-nb, grid.

Exit codes: 0 success, 2 invalid input or configuration, 3 I/O failure,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import math
import shutil
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import distributions as dist
from . import plotting
from .baseline import text_only_predictions
from .config import ConfigError, RunConfig, load_config
from .estimation import IN, OUT, estimate_degree_dists, fit_model, load_model, save_model
from .graph import TEST, VAL, GraphFormatError, load_graph
from .inference import (
    TERM_TITLES,
    TERMS,
    discrepancies,
    iterate_predictions,
    iteration_scores,
    node_view,
    select_iteration,
)
from .metrics import METRICS, evaluate
from .synth import assign_roles, random_model, sample_sbm_graph, write_dataset

logger = logging.getLogger("graphclass")

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class NumericFailure(ArithmeticError):
    """A computation produced no usable number (e.g. every score NaN)."""


def _out(cfg: RunConfig) -> Path:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return cfg.output_dir


def _load_inputs(cfg: RunConfig, num_labels: int | None = None):
    cfg.require("nodes", "edges")
    return load_graph(cfg.nodes, cfg.edges, num_labels or cfg.num_labels)


def _write_lines(path: Path, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


# ---------------------------------------------------------------------------
# fit

def cmd_fit(cfg: RunConfig) -> int:
    cfg.require("model_dir", must_exist=False)
    graph, partition = _load_inputs(cfg)
    params, report = fit_model(graph, partition, cfg.fit, cfg.workers)
    # write to a scratch directory first so a failure leaves no partial model
    target = Path(cfg.model_dir)
    target.parent.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=".fit-", dir=target.parent))
    try:
        save_model(params, scratch)
        _write_lines(scratch / "fit_report.tsv", report.summary_lines(params))
        _write_lines(scratch / "warnings.txt", report.warnings)
        if target.exists():
            shutil.rmtree(target)
        scratch.rename(target)
    finally:
        if scratch.exists():
            shutil.rmtree(scratch)
    for direction, name in ((IN, "predecessor"), (OUT, "successor")):
        passed, total = report.gof_passes(direction)
        if total:
            print(f"{name} count fits accepted: {passed}/{total} ({100.0 * passed / total:.2f}%)")
    print(f"model written to {target}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# predict

def _run_prediction(cfg: RunConfig, params, graph, partition):
    history = iterate_predictions(graph, partition, params, cfg.mode, cfg.iterations, cfg.epsilon,
                                  cfg.strategy, cfg.seed, cfg.workers)
    best = select_iteration(history, partition, cfg.metric)
    return history, best


def _check_compatible(params, partition) -> None:
    if partition.K != params.K:
        raise ConfigError(f"model has {params.K} labels but the node table implies {partition.K}")


def cmd_predict(cfg: RunConfig) -> int:
    cfg.require("model_dir")
    params = load_model(cfg.model_dir)
    graph, partition = _load_inputs(cfg, params.K)
    _check_compatible(params, partition)
    history, best = _run_prediction(cfg, params, graph, partition)
    out = _out(cfg)
    names = graph.names
    final = history.labels[best]
    _write_lines(out / "predictions.tsv",
                 ["# node_id\titeration\tlabel"]
                 + [f"{names[v]}\t{best}\t{lab + 1}" for v, lab in zip(history.nodes.tolist(), final.tolist())])
    header = "# node_id\t" + "\t".join(f"it{t}" for t in range(history.n_iterations))
    stacked = np.stack(history.labels, axis=1) + 1 if history.nodes.size else np.zeros((0, 1), dtype=int)
    _write_lines(out / "history.tsv",
                 [header] + [names[v] + "\t" + "\t".join(map(str, row))
                             for v, row in zip(history.nodes.tolist(), stacked.tolist())])
    has_val = bool(np.any(partition.roles[history.nodes] == VAL))
    scores = iteration_scores(history, partition, cfg.metric) if has_val else [math.nan] * history.n_iterations
    changed = [math.nan] + history.changed
    _write_lines(out / "iterations.tsv",
                 [f"# iteration\tchanged_fraction\tval_{cfg.metric}"]
                 + [f"{t}\t{c!r}\t{s!r}" for t, (c, s) in enumerate(zip(changed, scores))])
    if cfg.figures and has_val:
        plotting.plot_iterations(scores, history.changed, out / "iterations.png", cfg.metric, best)
    print(f"iterations computed: {history.n_iterations - 1}; selected iteration: {best}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate

def read_predictions(path) -> dict[str, int]:
    out: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.startswith("#") or not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise GraphFormatError(f"{path}:{lineno}: expected node_id, iteration, label")
            if parts[0] in out:
                raise GraphFormatError(f"{path}:{lineno}: duplicate node id {parts[0]!r}")
            out[parts[0]] = int(parts[2]) - 1
    return out


def _score(cfg: RunConfig, graph, partition, predicted: dict[str, int], stem: str) -> int:
    role = {"val": VAL, "test": TEST}[cfg.eval_role]
    index = {name: v for v, name in enumerate(graph.names)}
    unknown = sorted(set(predicted) - set(index))
    if unknown:
        raise GraphFormatError(f"predictions name {len(unknown)} node(s) missing from the node table, "
                               f"e.g. {unknown[0]!r}")
    targets = np.flatnonzero(partition.roles == role)
    missing = [graph.names[v] for v in targets.tolist() if graph.names[v] not in predicted]
    if missing:
        raise GraphFormatError(f"no prediction for {len(missing)} {cfg.eval_role} node(s), e.g. {missing[0]!r}")
    true = partition.labels[targets]
    pred = np.array([predicted[graph.names[v]] for v in targets.tolist()], dtype=np.int64)
    if np.any((pred < 0) | (pred >= partition.K)):
        raise GraphFormatError("predicted label outside 1..K")
    report = evaluate(true, pred, partition.K)
    out = _out(cfg)
    _write_lines(out / f"{stem}.txt", report.to_lines())
    _write_lines(out / f"{stem}_confusion.tsv",
                 ["\t".join(map(str, row)) for row in report.confusion.tolist()])
    if cfg.figures:
        plotting.plot_confusion(report.confusion, out / f"{stem}_confusion.png", f"{cfg.eval_role} nodes")
    print(f"{cfg.eval_role}: macro_f1 = {report.macro_f1:.4f}  accuracy = {report.accuracy:.4f}  "
          f"(n = {report.total})")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig) -> int:
    predictions = cfg.predictions or cfg.output_dir / "predictions.tsv"
    cfg = replace(cfg, predictions=predictions)
    cfg.require("predictions")
    graph, partition = _load_inputs(cfg)
    return _score(cfg, graph, partition, read_predictions(cfg.predictions), "metrics")


# ---------------------------------------------------------------------------
# explain

def cmd_explain(cfg: RunConfig) -> int:
    cfg.require("model_dir")
    if not cfg.explain_nodes:
        raise ConfigError("explain_nodes lists no node ids")
    params = load_model(cfg.model_dir)
    graph, partition = _load_inputs(cfg, params.K)
    _check_compatible(params, partition)
    index = {name: v for v, name in enumerate(graph.names)}
    for name in cfg.explain_nodes:
        if name not in index:
            raise ConfigError(f"unknown node id {name!r}")
    history, best = _run_prediction(cfg, params, graph, partition)
    # the selected labels were computed from the previous iteration's state
    state = history.labels_in_effect(partition, max(best - 1, 0))
    X = params.document_matrix(graph)
    out = _out(cfg)
    rows = ["# node_id\tlabel\tterm\tvalue"]
    for name in cfg.explain_nodes:
        b = discrepancies(node_view(graph, params, state, index[name], X=X), params)
        ranked = b.ranked(cfg.mode, cfg.top_k)
        print(format_explanation(name, b, ranked, cfg.mode))
        for i in ranked:
            for term in TERMS:
                rows.append(f"{name}\t{i + 1}\t{term}\t{float(b.term(term)[i])!r}")
            rows.append(f"{name}\t{i + 1}\tml_total\t{float(b.ml_total[i])!r}")
            rows.append(f"{name}\t{i + 1}\tmap_total\t{float(b.map_total[i])!r}")
        if cfg.figures:
            terms = {t: b.term(t)[ranked] for t in TERMS if cfg.mode == "map" or t != "prior"}
            plotting.plot_discrepancies([i + 1 for i in ranked], terms, TERM_TITLES,
                                        out / f"explain_{_safe(name)}.png", f"node {name}")
    _write_lines(out / "explain.tsv", rows)
    return EXIT_OK


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in name)


def format_explanation(name: str, b, ranked: list[int], mode: str) -> str:
    width = max(len(t) for t in TERM_TITLES.values()) + 2
    head = "Label".ljust(width) + "".join(f"{i + 1:>10}" for i in ranked)
    lines = [f"node {name}", head]
    for term in ("attribute", "predecessor_count", "successor_count", "label_predecessors", "label_successors",
                 "prior"):
        lines.append((TERM_TITLES[term] + ":").ljust(width)
                     + "".join(f"{float(b.term(term)[i]):>10.2f}" for i in ranked))
    total = b.total(mode)
    lines.append("Total discrepancy:".ljust(width) + "".join(f"{float(total[i]):>10.2f}" for i in ranked))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# gof

def cmd_gof(cfg: RunConfig) -> int:
    graph, partition = _load_inputs(cfg)
    out = _out(cfg)
    lines = ["# direction\tlabel\tfamily\tT\tdof\tp\tdecision"]
    cells = ["# direction\tlabel\tlower\tupper\tobserved\texpected"]
    for direction, family in ((IN, cfg.fit.psi_family), (OUT, cfg.fit.phi_family)):
        if family == dist.TABLE:
            print(f"{direction}-degree: table family has no parametric fit to test")
            continue
        dists, gof, notes = estimate_degree_dists(graph, partition, direction, family, 0.0,
                                                  cfg.fit.n_fitted_params, cfg.workers)
        for note in notes:
            logger.warning(note)
        passed = 0
        for i in sorted(gof):
            r = gof[i]
            passed += bool(r.accepted)
            lines.append(f"{direction}\t" + r.summary_line(i + 1, family))
            cells.extend(f"{direction}\t{i + 1}\t{row}" for row in r.cell_rows()[1:])
            if cfg.figures and not r.inconclusive:
                plotting.plot_gof(r, out / f"gof_{direction}_{i + 1}.png", f"{direction}-degree, label {i + 1}")
        if gof:
            print(f"{direction}-degree {family}: {passed}/{len(gof)} accepted at level 0.05")
    _write_lines(out / "gof.tsv", lines)
    _write_lines(out / "gof_cells.tsv", cells)
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth

def cmd_synth(cfg: RunConfig) -> int:
    out = _out(cfg)
    params = random_model(cfg.synth_labels, cfg.synth_terms, cfg.seed, concentration=0.5)
    K = cfg.synth_labels
    # keep every label reasonably common and the transitions homophilous
    params.pi = 0.5 * params.pi + 0.5 / K
    params.theta = 0.7 * np.eye(K) + 0.3 * params.theta
    params.xi = 0.7 * np.eye(K) + 0.3 * params.xi
    graph, labels = sample_sbm_graph(params, cfg.synth_nodes, cfg.seed, cfg.synth_mean_degree)
    roles = assign_roles(graph.n, cfg.synth_roles, cfg.seed + 1)
    nodes, edges = write_dataset(graph, labels, roles, K, out)
    save_model(params, out / "generating_model")
    print(f"wrote {graph.n} nodes and {graph.m} edges to {nodes.parent}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# baseline

def cmd_baseline_nb(cfg: RunConfig) -> int:
    graph, partition = _load_inputs(cfg)
    vocab_config = replace(cfg.fit, vectorizer="count").vocab_config()
    labels, _, _ = text_only_predictions(graph, partition, vocab_config, cfg.baseline_alpha)
    out = _out(cfg)
    nodes = partition.unlabeled_nodes
    _write_lines(out / "baseline_predictions.tsv",
                 ["# node_id\titeration\tlabel"]
                 + [f"{graph.names[v]}\t0\t{lab + 1}" for v, lab in zip(nodes.tolist(), labels.tolist())])
    if np.any(partition.roles == {"val": VAL, "test": TEST}[cfg.eval_role]):
        predicted = {graph.names[v]: int(lab) for v, lab in zip(nodes.tolist(), labels.tolist())}
        return _score(cfg, graph, partition, predicted, "baseline_metrics")
    return EXIT_OK


# ---------------------------------------------------------------------------
# grid

def grid_points(grid: dict[str, list[str]]) -> list[dict[str, str]]:
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def cmd_grid(cfg: RunConfig) -> int:
    points = grid_points(cfg.grid)
    if not cfg.grid or not points:
        raise ConfigError("empty grid: add grid.<hyperparameter> = v1, v2 entries")
    graph, partition = _load_inputs(cfg)
    if not np.any(partition.roles == VAL):
        raise ConfigError("grid search needs validation nodes")
    fn = METRICS[cfg.metric]
    rows = ["# point\t" + "\t".join(cfg.grid) + f"\tbest_iteration\tval_{cfg.metric}"]
    best_score, best_point = -math.inf, None
    for k, point in enumerate(points):
        run = cfg.with_fit_values(point)
        params, _ = fit_model(graph, partition, run.fit, cfg.workers)
        history, t = _run_prediction(run, params, graph, partition)
        sel = partition.roles[history.nodes] == VAL
        score = fn(partition.labels[history.nodes][sel], history.labels[t][sel], partition.K)
        if math.isnan(score):
            raise NumericFailure(f"grid point {k} scored NaN")
        rows.append(f"{k}\t" + "\t".join(point.values()) + f"\t{t}\t{score!r}")
        if score > best_score:
            best_score, best_point = score, (k, point)
    _write_lines(_out(cfg) / "grid.tsv", rows)
    k, point = best_point
    _write_lines(cfg.output_dir / "best_config.txt", [f"{key} = {v}" for key, v in point.items()])
    print(f"best grid point {k}: " + ", ".join(f"{key}={v}" for key, v in point.items())
          + f" ({cfg.metric} = {best_score:.4f})")
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "explain": cmd_explain,
    "gof": cmd_gof,
    "synth": cmd_synth,
    "baseline-nb": cmd_baseline_nb,
    "grid": cmd_grid,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphclass", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=list(COMMANDS))
    parser.add_argument("--config", required=True, type=Path, help="flat key = value run configuration")
    parser.add_argument("--workers", type=int, help="worker threads (overrides the config)")
    parser.add_argument("--seed", type=int, help="random seed (overrides the config)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if not args.config.is_file():
            raise ConfigError(f"no such config file {args.config}")
        cfg = load_config(args.config)
        if args.workers is not None:
            cfg = replace(cfg, workers=args.workers)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        cfg.validate()
        return COMMANDS[args.command](cfg)
    except (ArithmeticError, FloatingPointError) as exc:
        print(f"graphclass: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError) as exc:
        print(f"graphclass: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"graphclass: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


"""Acceptance criteria, one test per criterion.

Each test records a one-line PASS/FAIL verdict (printed at the end of the
pytest run by ``conftest.pytest_terminal_summary``) and then asserts it.
Criterion 8 needs the ogbn-arxiv raw text and only runs when
``GRAPHCLASS_ARXIV_DIR`` points at a directory holding ``nodes.tsv`` and
``edges.tsv``.
"""

import itertools
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from graphclass import distributions as dist
from graphclass.cli import EXIT_OK, main, read_predictions
from graphclass.estimation import estimate_pi, transitions_from_counts
from graphclass.graph import TRAIN, DirectedGraph, LabelPartition, nearest_labels
from graphclass.inference import ML, MAP, batch_breakdown, predict_batch, predict_map, predict_ml
from graphclass.synth import brute_force_predict, brute_force_totals, random_model, sample_local_views

RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> bool:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    return ok


def write_config(path, **entries):
    path.write_text("".join(f"{k} = {v}\n" for k, v in entries.items()))
    return path


def run(command, cfg, *extra):
    return main([command, "--config", str(cfg), *extra])


def _small_views(n_total, seed):
    """Views with K <= 4 and both degrees <= 6 from a spread of random models."""
    families = [dist.TABLE, dist.POWERLAW, dist.LOGNORMAL]
    per_model = 500
    for m in itertools.count():
        if n_total <= 0:
            return
        K = 1 + m % 4
        params = random_model(K, 10, seed + m, d_max=6, degree_family=families[m % 3])
        sample = sample_local_views(params, 2 * per_model, seed + m)
        keep = np.flatnonzero((sample.d_in <= 6) & (sample.d_out <= 6))[:min(per_model, n_total)]
        n_total -= keep.size
        yield params, sample, keep


def test_criterion_1_oracle_equivalence():
    start = time.perf_counter()
    mismatches, worst, views = 0, 0.0, 0
    for params, sample, keep in _small_views(10_000, 100):
        b = batch_breakdown(params, sample.X()[keep], sample.d_in[keep], sample.d_out[keep],
                            sample.P[keep], sample.S[keep])
        batch_ml, batch_map = predict_batch(b, params, ML), predict_batch(b, params, MAP)
        for row, k in enumerate(keep.tolist()):
            view = sample.view(k)
            ml, mp = predict_ml(view, params), predict_map(view, params)
            mismatches += ml != brute_force_predict(view, params, "ml")
            mismatches += mp != brute_force_predict(view, params, "map")
            mismatches += (ml != batch_ml[row]) + (mp != batch_map[row])
            for ours, oracle in ((b.ml_total[row], brute_force_totals(view, params, "ml")),
                                 (b.map_total[row], brute_force_totals(view, params, "map"))):
                oracle = np.array(oracle)
                same_inf = np.isinf(ours) == np.isinf(oracle)
                if not same_inf.all():
                    worst = math.inf
                fin = np.isfinite(oracle)
                if fin.any():
                    worst = max(worst, float(np.max(np.abs(ours[fin] - oracle[fin]))))
            views += 1
    elapsed = time.perf_counter() - start
    ok = views == 10_000 and mismatches == 0 and worst <= 1e-10 and elapsed < 60
    assert record(1, ok, f"{views} views, {mismatches} mismatches, max total error {worst:.2e}, "
                         f"{elapsed:.1f}s"), RESULTS[1]


def test_criterion_2_naive_bayes_reduction(tmp_path):
    start = time.perf_counter()
    synth = write_config(tmp_path / "synth.cfg", output_dir="data", synth_labels=4, synth_nodes=1000,
                         synth_terms=40, synth_mean_degree=0, synth_roles="0.5, 0, 0.5, 0", seed=8)
    assert run("synth", synth) == EXIT_OK
    data = tmp_path / "data"
    cfg = write_config(tmp_path / "run.cfg", nodes=data / "nodes.tsv", edges=data / "edges.tsv",
                       model_dir=tmp_path / "model", output_dir=tmp_path / "out", vectorizer="count",
                       stop_words="none", min_df=1, max_df=1.0, alpha_pi=0, alpha_omega=0.01,
                       baseline_alpha=0.01, psi_family="table", phi_family="table", mode="map", figures="off")
    codes = [run(c, cfg) for c in ("fit", "predict", "baseline-nb")]
    ours = read_predictions(tmp_path / "out" / "predictions.tsv")
    nb = read_predictions(tmp_path / "out" / "baseline_predictions.tsv")
    edges = [ln for ln in (data / "edges.tsv").read_text().splitlines() if ln and not ln.startswith("#")]
    agree = sum(ours[k] == nb.get(k) for k in ours)
    elapsed = time.perf_counter() - start
    ok = codes == [0, 0, 0] and not edges and len(ours) == len(nb) > 0 and agree == len(ours) and elapsed < 60
    assert record(2, ok, f"{agree}/{len(ours)} unlabelled nodes agree on an edgeless 1000-node graph, "
                         f"{elapsed:.1f}s"), RESULTS[2]


def test_criterion_3_map_equals_ml_under_uniform_prior():
    params = random_model(4, 15, 33, uniform_prior=True, degree_family=dist.LOGNORMAL)
    sample = sample_local_views(params, 1000, 33)
    differ = sum(predict_ml(sample.view(k), params) != predict_map(sample.view(k), params)
                 for k in range(sample.n))
    assert record(3, differ == 0, f"{differ} of 1000 views differ between ML and MAP"), RESULTS[3]


def test_criterion_4_estimator_recovery():
    start = time.perf_counter()
    params = random_model(3, 10, 44, d_max=8)
    sample = sample_local_views(params, 50_000, 44)
    pi = estimate_pi(sample.y, 3, 0.0)
    theta, xi, _ = transitions_from_counts(sample.y, sample.P, sample.S, 3, 0.0, 0.0)
    table_err = max(float(np.max(np.abs(pi - params.pi))), float(np.max(np.abs(theta - params.theta))),
                    float(np.max(np.abs(xi - params.xi))))
    rng = np.random.default_rng(44)
    rel = []
    for truth, family, keys in (
        (dist.ZeroInflatedTruncPowerLaw(0.3, kappa=1.5, lam=0.1), dist.POWERLAW, ("kappa", "lambda")),
        (dist.ZeroInflatedDiscreteLogNormal(0.2, mu=1.2, sigma=0.7), dist.LOGNORMAL, ("mu", "sigma")),
    ):
        fitted = dist.fit_zero_inflated(dist.sample_degrees(truth, 100_000, rng), family)
        rel += [abs(fitted.params[k] / truth.params[k] - 1.0) for k in keys]
    elapsed = time.perf_counter() - start
    ok = table_err <= 0.02 and max(rel) <= 0.05 and elapsed < 120
    assert record(4, ok, f"max abs error pi/Theta/Xi {table_err:.4f}, max relative error of degree-law "
                         f"parameters {max(rel):.4f}, {elapsed:.1f}s"), RESULTS[4]


def _compositions(d, K):
    for cut in itertools.combinations(range(d + K - 1), K - 1):
        bounds = (-1,) + cut + (d + K - 1,)
        yield tuple(bounds[i + 1] - bounds[i] - 1 for i in range(K))


def test_criterion_5_normalisation():
    rng = np.random.default_rng(55)
    worst_multi = 0.0
    for K in range(1, 5):
        for row in [np.full(K, 1 / K), rng.dirichlet(np.ones(K)), rng.dirichlet(np.full(K, 0.1))]:
            for d in range(7):
                total = math.fsum(math.exp(dist.multinomial_log_pmf(z, d, row)) for z in _compositions(d, K))
                worst_multi = max(worst_multi, abs(total - 1.0))
    laws = [dist.ZeroInflatedTruncPowerLaw(b, kappa=k, lam=lam)
            for b, k, lam in itertools.product((0.0, 0.3, 0.9), (0.5, 1.5, 3.0), (1e-4, 0.05, 2.0))]
    laws += [dist.ZeroInflatedDiscreteLogNormal(b, mu=mu, sigma=s)
             for b, mu, s in itertools.product((0.0, 0.3, 0.9), (-1.0, 1.0, 4.0), (0.2, 1.0, 2.5))]
    laws += [dist.SmoothedTable(rng.dirichlet(np.ones(m)), 0.0) for m in (1, 7, 500)]
    laws.append(dist.fit_zero_inflated(dist.sample_degrees(laws[4], 3000, rng), dist.POWERLAW))
    worst_pmf = max(abs(math.fsum(law.pmf_table(dist.D_MAX)) - 1.0) for law in laws)
    ok = worst_multi <= 1e-12 and worst_pmf <= 1e-9
    assert record(5, ok, f"multinomial max deviation {worst_multi:.1e}, degree pmf max deviation "
                         f"{worst_pmf:.1e} over {len(laws)} laws"), RESULTS[5]


def test_criterion_6_gof_calibration():
    truths = [(dist.ZeroInflatedTruncPowerLaw(0.3, kappa=1.5, lam=0.1), dist.POWERLAW),
              (dist.ZeroInflatedDiscreteLogNormal(0.25, mu=1.0, sigma=0.8), dist.LOGNORMAL)]
    rejected = inconclusive = 0
    for trial in range(200):
        truth, family = truths[trial % 2]
        samples = dist.sample_degrees(truth, 2000, np.random.default_rng(6000 + trial))
        r = dist.chi_square_gof(samples, dist.fit_zero_inflated(samples, family))
        inconclusive += r.inconclusive
        rejected += r.accepted is False
    rate = rejected / 200
    reported = [(12.109, 11, "accept"), (25.5, 11, "reject"), (14.36, 11, "accept")]
    decisions = ["accept" if dist.chi2_sf(t, k) > 0.05 else "reject" for t, k, _ in reported]
    ok = 0.01 <= rate <= 0.12 and inconclusive == 0 and decisions == [d for _, _, d in reported]
    assert record(6, ok, f"rejection rate {rate:.3f} over 200 trials; reported cases -> "
                         f"{', '.join(decisions)}"), RESULTS[6]


def test_criterion_7_determinism(tmp_path):
    synth = write_config(tmp_path / "synth.cfg", output_dir="data", synth_labels=5, synth_nodes=12_000,
                         synth_terms=60, synth_mean_degree=4, synth_roles="0.5, 0.1, 0.3, 0.1", seed=7)
    assert run("synth", synth) == EXIT_OK
    data = tmp_path / "data"
    trees = []
    for w in (1, 8):
        d = tmp_path / f"w{w}"
        cfg = write_config(tmp_path / f"w{w}.cfg", nodes=data / "nodes.tsv", edges=data / "edges.tsv",
                           model_dir=d / "model", output_dir=d / "out", preset="mgp", min_df=1,
                           psi_family="lognormal", phi_family="powerlaw", seed=3)
        assert run("fit", cfg, "--workers", str(w)) == EXIT_OK
        assert run("predict", cfg, "--workers", str(w)) == EXIT_OK
        trees.append({p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()})
    identical = trees[0].keys() == trees[1].keys() and all(trees[0][k] == trees[1][k] for k in trees[0])

    # nodes with no path to a training node take a seeded random label
    g = DirectedGraph.from_edges(6, [0, 2], [1, 3])
    part = LabelPartition(7, np.array([TRAIN, 2, 2, 2, 2, 2]), np.array([0, 0, 0, 0, 0, 0]))
    draws = [nearest_labels(g, part, np.arange(2, 6), seed=13).tolist() for _ in range(3)]
    others = {tuple(nearest_labels(g, part, np.arange(2, 6), seed=s).tolist()) for s in range(20)}
    reproducible = draws[0] == draws[1] == draws[2] and len(others) > 1
    ok = identical and reproducible
    assert record(7, ok, f"{len(trees[0])} output files byte-identical across 1 and 8 workers: {identical}; "
                         f"seeded fallback reproducible: {reproducible}"), RESULTS[7]


ARXIV_DIR = os.environ.get("GRAPHCLASS_ARXIV_DIR")


@pytest.mark.skipif(not ARXIV_DIR, reason="GRAPHCLASS_ARXIV_DIR not set")
def test_criterion_8_arxiv_reproduction(tmp_path):
    data = Path(ARXIV_DIR)
    cfg = write_config(tmp_path / "arxiv.cfg", nodes=data / "nodes.tsv", edges=data / "edges.tsv",
                       model_dir=tmp_path / "model", output_dir=tmp_path / "out", preset="arxiv",
                       iterations=4, mode="map", strategy="text_only", metric="accuracy", workers=os.cpu_count())
    codes = [run(c, cfg) for c in ("fit", "predict", "evaluate")]
    metrics = dict(line.split(" = ") for line in (tmp_path / "out" / "metrics.txt").read_text().splitlines())
    acc = float(metrics["accuracy"])
    assert record(8, codes == [0, 0, 0] and acc >= 0.72, f"test accuracy {acc:.4f}"), RESULTS[8]


def test_criterion_8_skip_notice():
    if ARXIV_DIR:
        pytest.skip("arXiv data present; the real check runs instead")
    RESULTS[8] = "criterion 8: SKIP  needs the ogbn-arxiv raw text; set GRAPHCLASS_ARXIV_DIR to run it"
    print(RESULTS[8])

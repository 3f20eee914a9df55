from pathlib import Path

import pytest

from graphclass.config import ConfigError, RunConfig, build_config, load_config, parse_entries


def _build(text, base=Path("/data/run")):
    return build_config(parse_entries(text), base)


def test_defaults_are_valid():
    cfg = RunConfig()
    cfg.validate()
    assert (cfg.mode, cfg.iterations, cfg.epsilon, cfg.strategy) == ("map", 6, 1e-3, "nearest_node")


def test_relative_paths_resolve_against_config_dir(tmp_path):
    (tmp_path / "sub").mkdir()
    path = tmp_path / "sub" / "run.cfg"
    path.write_text("nodes = n.tsv\nedges = /abs/e.tsv\noutput_dir = ../out\n")
    cfg = load_config(path)
    assert cfg.nodes == tmp_path / "sub" / "n.tsv"
    assert cfg.edges == Path("/abs/e.tsv")
    assert cfg.output_dir == tmp_path / "sub" / ".." / "out"


@pytest.mark.parametrize("text, message", [
    ("colour = blue\n", "unknown key"),
    ("seed = 1\nseed = 2\n", "duplicate key"),
    ("seed one\n", "expected 'key = value'"),
    ("iterations = many\n", "bad value"),
    ("preset = cora\n", "unknown preset"),
    ("figures = maybe\n", "not a boolean"),
])
def test_bad_entries(text, message):
    with pytest.raises(ConfigError, match=message):
        _build(text)


@pytest.mark.parametrize("text", [
    "mode = bayes", "iterations = 0", "epsilon = 1.0", "strategy = random", "metric = auc",
    "workers = 0", "alpha_theta = -1", "psi_family = gaussian", "grid.alpha_omega = ",
    "grid.seed = 1, 2", "grid.alpha_pi = 0, -1", "synth_roles = 1, 0",
])
def test_invalid_values_rejected(tmp_path, text):
    path = tmp_path / "c.cfg"
    path.write_text(text + "\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_preset_then_overrides_in_any_order():
    cfg = _build("alpha_omega = 0.5\npreset = mgp\n")
    assert cfg.fit.alpha_omega == 0.5
    assert cfg.fit.vectorizer == "tfidf" and cfg.fit.phi_family == "powerlaw"
    assert _build("preset = arxiv\n").fit.psi_family == "lognormal"


def test_grid_and_lists():
    cfg = _build("grid.alpha_omega = 0.01, 0.03\ngrid.vectorizer = count\nexplain_nodes = a, b\n"
                 "synth_roles = 0.5, 0.2, 0.3, 0\nnum_labels = none\nfigures = off\n")
    cfg.validate()
    assert cfg.grid == {"alpha_omega": ["0.01", "0.03"], "vectorizer": ["count"]}
    assert cfg.explain_nodes == ("a", "b") and cfg.synth_roles == (0.5, 0.2, 0.3, 0.0)
    assert cfg.num_labels is None and cfg.figures is False
    assert cfg.with_fit_values({"alpha_omega": "0.03"}).fit.alpha_omega == 0.03


def test_require(tmp_path):
    cfg = RunConfig(nodes=tmp_path / "missing.tsv", model_dir=tmp_path / "m")
    with pytest.raises(ConfigError, match="required"):
        cfg.require("edges")
    with pytest.raises(ConfigError, match="no such file"):
        cfg.require("nodes")
    with pytest.raises(ConfigError, match="no such directory"):
        cfg.require("model_dir")
    cfg.require("model_dir", must_exist=False)

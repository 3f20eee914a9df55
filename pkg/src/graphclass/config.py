"""Run configuration: a flat ``key = value`` file.

Every key is validated before any work starts; unknown keys are errors.
Relative paths resolve against the directory holding the config file.
Keys of the form ``grid.<name> = v1, v2, ...`` list values for the
hyperparameter grid; ``preset = mgp|arxiv`` seeds the estimation defaults
before the remaining keys are applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .estimation import FitConfig, parse_value
from .inference import MAP, ML, NEAREST_NODE, TEXT_ONLY
from .metrics import METRICS


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


_FIT_KEYS = {f.name: f.type for f in fields(FitConfig)}
_PATH_KEYS = ("nodes", "edges", "model_dir", "output_dir", "predictions")
_PRESETS = {"mgp": FitConfig.mgp, "arxiv": FitConfig.arxiv}


@dataclass
class RunConfig:
    nodes: Path | None = None
    edges: Path | None = None
    model_dir: Path | None = None
    output_dir: Path = Path("out")
    predictions: Path | None = None
    num_labels: int | None = None
    fit: FitConfig = field(default_factory=FitConfig)
    mode: str = MAP
    iterations: int = 6
    epsilon: float = 1e-3
    strategy: str = NEAREST_NODE
    metric: str = "macro_f1"
    eval_role: str = "test"
    workers: int = 1
    seed: int = 0
    baseline_alpha: float = 0.01
    explain_nodes: tuple[str, ...] = ()
    top_k: int = 3
    figures: bool = True
    synth_labels: int = 4
    synth_nodes: int = 2000
    synth_terms: int = 50
    synth_mean_degree: float = 5.0
    synth_roles: tuple[float, ...] = (0.6, 0.1, 0.3, 0.0)
    grid: dict[str, list[str]] = field(default_factory=dict)

    def validate(self) -> None:
        try:
            self.fit.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.mode not in (ML, MAP):
            raise ConfigError(f"mode must be {ML!r} or {MAP!r}")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError("epsilon must lie in (0, 1)")
        if self.strategy not in (TEXT_ONLY, NEAREST_NODE):
            raise ConfigError(f"strategy must be {TEXT_ONLY!r} or {NEAREST_NODE!r}")
        if self.metric not in METRICS:
            raise ConfigError(f"metric must be one of {sorted(METRICS)}")
        if self.eval_role not in ("val", "test"):
            raise ConfigError("eval_role must be 'val' or 'test'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if self.baseline_alpha < 0:
            raise ConfigError("baseline_alpha must be non-negative")
        if self.num_labels is not None and self.num_labels < 1:
            raise ConfigError("num_labels must be positive")
        if self.synth_labels < 1 or self.synth_nodes < 1 or self.synth_terms < 1 or self.synth_mean_degree < 0:
            raise ConfigError("synthetic sizes must be positive")
        if len(self.synth_roles) != 4 or min(self.synth_roles) < 0 or sum(self.synth_roles) <= 0:
            raise ConfigError("synth_roles needs four non-negative fractions")
        for key, values in self.grid.items():
            if key not in _FIT_KEYS:
                raise ConfigError(f"grid.{key}: only estimation hyperparameters can be searched")
            if not values:
                raise ConfigError(f"grid.{key} lists no values")
            for v in values:
                try:
                    self.with_fit_values({key: v}).fit.validate()
                except ValueError as exc:
                    raise ConfigError(f"grid.{key}: {exc}") from None

    def with_fit_values(self, values: dict[str, str]) -> "RunConfig":
        try:
            fit = replace(self.fit, **{k: parse_value(_FIT_KEYS[k], v) for k, v in values.items()})
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return replace(self, fit=fit)

    def require(self, *names: str, must_exist: bool = True) -> None:
        """Fail unless the named paths are set and (for inputs) exist."""
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise ConfigError(f"config key {name!r} is required for this command")
            if not must_exist:
                continue
            if name in ("nodes", "edges", "predictions") and not Path(value).is_file():
                raise ConfigError(f"{name}: no such file {value}")
            if name == "model_dir" and not Path(value).is_dir():
                raise ConfigError(f"model_dir: no such directory {value}")


def _split_list(raw: str) -> list[str]:
    return [v.strip() for v in raw.split(",") if v.strip()]


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {raw!r}")


_SCALARS = {
    "num_labels": lambda s: None if s.lower() in ("", "none") else int(s),
    "mode": str, "iterations": int, "epsilon": float, "strategy": str, "metric": str,
    "eval_role": str, "workers": int, "seed": int, "baseline_alpha": float, "top_k": int,
    "figures": _parse_bool, "synth_labels": int, "synth_nodes": int, "synth_terms": int,
    "synth_mean_degree": float,
    "explain_nodes": lambda s: tuple(_split_list(s)),
    "synth_roles": lambda s: tuple(float(v) for v in _split_list(s)),
}


def parse_entries(text: str, source: str = "<config>") -> list[tuple[int, str, str]]:
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        entries.append((lineno, key.strip(), value.strip()))
    return entries


def build_config(entries, base_dir: Path = Path("."), source: str = "<config>") -> RunConfig:
    cfg = RunConfig()
    seen: set[str] = set()
    fit_values: dict[str, str] = {}
    for lineno, key, value in entries:
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        try:
            if key == "preset":
                if value not in _PRESETS:
                    raise ConfigError(f"unknown preset {value!r}")
                cfg.fit = _PRESETS[value]()
            elif key.startswith("grid."):
                cfg.grid[key[5:]] = _split_list(value)
            elif key in _PATH_KEYS:
                path = Path(value)
                setattr(cfg, key, path if path.is_absolute() else base_dir / path)
            elif key in _FIT_KEYS:
                fit_values[key] = value
            elif key in _SCALARS:
                setattr(cfg, key, _SCALARS[key](value))
            else:
                raise ConfigError(f"unknown key {key!r}")
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    # fit keys apply after any preset regardless of line order
    cfg = cfg.with_fit_values(fit_values)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    cfg = build_config(parse_entries(text, str(path)), path.parent, str(path))
    cfg.validate()
    return cfg

"""Experiment orchestration: configuration, ensemble execution, statistics
with standard errors, pass/fail rows and persisted outputs."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np
import yaml

from .engine import MODES
from .errors import InvalidParams, MissingSlot
from .params import ModelParams
from .testfn import TestFunction, from_spec

SE_MULTIPLIER = 4.0
RULES = ("within", "below", "at_most", "window", "holds")
_MODEL_KEYS = ("n", "gamma", "c_plus", "c_minus", "alpha", "beta", "alpha_a", "beta_a", "b")
_SIM_KEYS = ("horizon", "sample_dt", "seed", "ensemble", "mode")


# --- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs; ``options`` holds experiment-specific knobs."""

    experiment: str
    params: ModelParams
    testfns: Mapping[str, str] = field(default_factory=lambda: {"G": "dirneu_poly"})
    ensemble: int = 1
    sample_dt: float | None = None
    seed: int = 0
    mode: str = "dynkin"
    tolerances: Mapping[str, float] = field(default_factory=dict)
    options: Mapping[str, Any] = field(default_factory=dict)
    out_dir: str | None = None

    def __post_init__(self) -> None:
        from .experiments import EXPERIMENTS

        if self.experiment not in EXPERIMENTS:
            raise InvalidParams(f"unknown experiment {self.experiment!r}; choose from {sorted(EXPERIMENTS)}")
        if self.mode not in MODES:
            raise InvalidParams(f"sim.mode must be one of {MODES}")
        if isinstance(self.ensemble, bool) or int(self.ensemble) != self.ensemble or self.ensemble < 1:
            raise InvalidParams("sim.ensemble must be a positive integer")
        if isinstance(self.seed, bool) or int(self.seed) != self.seed or self.seed < 0:
            raise InvalidParams("sim.seed must be a non-negative integer")
        if self.sample_dt is not None and not 0.0 < self.sample_dt <= self.params.horizon:
            raise InvalidParams("sim.sample_dt must lie in (0, sim.horizon]")
        for label, spec in self.testfns.items():
            try:
                from_spec(spec)
            except (ValueError, TypeError) as exc:
                raise InvalidParams(f"testfns.{label}: {exc}") from exc
        for key, value in self.tolerances.items():
            if not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
                raise InvalidParams(f"tolerances.{key} must be a non-negative number")

    @property
    def horizon(self) -> float:
        return self.params.horizon

    def tests(self) -> dict[str, TestFunction]:
        return {label: from_spec(spec) for label, spec in self.testfns.items()}

    def option(self, key: str, default: Any) -> Any:
        return self.options.get(key, default)

    def tol(self, key: str, default: float) -> float:
        return float(self.tolerances.get(key, default))

    def with_(self, **changes: Any) -> "ExperimentConfig":
        return replace(self, **changes)

    def to_flat(self) -> dict[str, Any]:
        """Inverse of ``config_from_mapping``."""
        flat: dict[str, Any] = {"experiment": self.experiment}
        p = self.params
        for key in _MODEL_KEYS:
            flat[f"model.{key}"] = getattr(p, key)
        flat["sim.horizon"] = p.horizon
        if self.sample_dt is not None:
            flat["sim.sample_dt"] = self.sample_dt
        flat.update({"sim.seed": self.seed, "sim.ensemble": self.ensemble, "sim.mode": self.mode})
        flat.update({f"testfns.{k}": v for k, v in self.testfns.items()})
        flat.update({f"tolerances.{k}": v for k, v in self.tolerances.items()})
        flat.update({f"options.{k}": v for k, v in self.options.items()})
        if self.out_dir is not None:
            flat["out.dir"] = self.out_dir
        return flat


def _flatten(data: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    out: dict[str, Any] = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        # Only the four open sections nest; option values may themselves be lists.
        if isinstance(value, Mapping) and name in ("model", "sim", "testfns", "tolerances", "options", "out"):
            out.update(_flatten(value, name + "."))
        else:
            out[name] = value
    return out


def config_from_mapping(data: Mapping[str, Any]) -> ExperimentConfig:
    """Build a config from flat dotted keys (nested sections are flattened first)."""
    if not isinstance(data, Mapping):
        raise InvalidParams("config must be a mapping of dotted keys")
    flat = _flatten(data)
    model: dict[str, Any] = {}
    sim: dict[str, Any] = {}
    sections: dict[str, dict[str, Any]] = {"testfns": {}, "tolerances": {}, "options": {}}
    experiment = out_dir = None
    for key, value in flat.items():
        head, _, rest = key.partition(".")
        if key == "experiment":
            experiment = value
        elif key == "out.dir":
            out_dir = None if value is None else str(value)
        elif head == "model" and rest in _MODEL_KEYS:
            model[rest] = value
        elif head == "sim" and rest in _SIM_KEYS:
            sim[rest] = value
        elif head in sections and rest:
            sections[head][rest] = value
        else:
            raise InvalidParams(f"unknown config key {key!r}")
    if experiment is None:
        raise InvalidParams("config needs an 'experiment' key")
    if "n" not in model or "gamma" not in model:
        raise InvalidParams("config needs model.n and model.gamma")
    try:
        params = ModelParams(horizon=float(sim.get("horizon", 1.0)), **model)
    except TypeError as exc:
        raise InvalidParams(str(exc)) from exc
    kwargs: dict[str, Any] = {
        "experiment": str(experiment),
        "params": params,
        "tolerances": sections["tolerances"],
        "options": sections["options"],
        "out_dir": out_dir,
    }
    if sections["testfns"]:
        kwargs["testfns"] = {k: str(v) for k, v in sections["testfns"].items()}
    for key in ("seed", "ensemble", "mode"):
        if key in sim:
            kwargs[key] = sim[key]
    if "sample_dt" in sim:
        kwargs["sample_dt"] = float(sim["sample_dt"])
    return ExperimentConfig(**kwargs)


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a YAML config of flat dotted keys."""
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise InvalidParams(f"cannot read config {path}: {exc}") from exc
    return config_from_mapping(data or {})


def apply_override(config: ExperimentConfig, key: str, value: Any) -> ExperimentConfig:
    """Copy of ``config`` with one dotted key replaced."""
    flat = config.to_flat()
    flat[key] = value
    return config_from_mapping(flat)


def parse_scalar(text: str) -> Any:
    """YAML scalar parsing for command-line values."""
    return yaml.safe_load(text)


# --- rows and summaries ------------------------------------------------------

@dataclass(frozen=True)
class Row:
    """One checked statistic; the pass flag is a pure function of the fields.

    Rules: ``within`` |est - target| <= max(4 SE, tol); ``below`` est < target;
    ``at_most`` est <= target; ``window`` |est - target| <= tol; ``holds``
    est == 1 (a boolean property).  ``se_budget`` marks the row as
    underpowered (and failing) when the standard error exceeds it.
    """

    name: str
    estimate: float
    stderr: float = 0.0
    target: float = 0.0
    rule: str = "within"
    tol: float = 0.0
    se_budget: float | None = None
    note: str = ""

    def __post_init__(self) -> None:
        if self.rule not in RULES:
            raise ValueError(f"unknown rule {self.rule!r}")

    @property
    def insufficient(self) -> bool:
        return self.se_budget is not None and not self.stderr <= self.se_budget

    @property
    def passed(self) -> bool:
        est, target = self.estimate, self.target
        if not math.isfinite(est) or self.insufficient:
            return False
        if self.rule == "within":
            return abs(est - target) <= max(SE_MULTIPLIER * self.stderr, self.tol)
        if self.rule == "below":
            return est < target
        if self.rule == "at_most":
            return est <= target
        if self.rule == "window":
            return abs(est - target) <= self.tol
        return est == 1.0

    @property
    def tol_rule(self) -> str:
        return {
            "within": f"|est-target| <= max({SE_MULTIPLIER:g}*stderr, {self.tol:g})",
            "below": "est < target",
            "at_most": "est <= target",
            "window": f"|est-target| <= {self.tol:g}",
            "holds": "property holds",
        }[self.rule]

    def to_dict(self) -> dict[str, Any]:
        out = {
            "name": self.name,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "target": self.target,
            "tol_rule": self.tol_rule,
            "pass": self.passed,
        }
        if self.insufficient:
            out["note"] = "insufficient ensemble: stderr exceeds budget " + repr(self.se_budget)
        elif self.note:
            out["note"] = self.note
        return out


def holds(name: str, condition: bool, note: str = "") -> Row:
    return Row(name, 1.0 if condition else 0.0, target=1.0, rule="holds", note=note)


@dataclass(frozen=True)
class Series:
    """Data for one plot: ``ys`` maps curve labels to y values over ``x``."""

    x: np.ndarray
    ys: Mapping[str, np.ndarray]
    loglog: bool = False
    xlabel: str = "x"
    ylabel: str = "y"


@dataclass
class EnsembleSummary:
    experiment: str
    params: dict[str, Any]
    rows: list[Row]
    counters: dict[str, int] = field(default_factory=dict)
    wall_time_s: float = 0.0
    series: dict[str, Series] = field(default_factory=dict)
    tables: dict[str, tuple[list[str], np.ndarray]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def row(self, name: str) -> Row:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_json(self) -> dict[str, Any]:
        return {
            "experiment": self.experiment,
            "params": self.params,
            "rows": [r.to_dict() for r in self.rows],
            "counters": self.counters,
            "wall_time_s": self.wall_time_s,
        }

    def report(self) -> str:
        lines = []
        for r in self.rows:
            status = "PASS" if r.passed else "FAIL"
            lines.append(f"{status} {self.experiment}:{r.name} estimate={r.estimate:.6g} "
                         f"stderr={r.stderr:.3g} target={r.target:.6g} [{r.tol_rule}]")
        return "\n".join(lines)


# --- ensembles ---------------------------------------------------------------

def aggregate(slots: Sequence[Any]) -> tuple[np.ndarray, np.ndarray]:
    """Index-ordered mean and standard error (sample std / sqrt(N)) of the slots."""
    if len(slots) == 0:
        raise MissingSlot("no slots")
    missing = [i for i, s in enumerate(slots) if s is None]
    if missing:
        raise MissingSlot(f"slots {missing[:5]} were never filled")
    data = np.stack([np.asarray(s, dtype=float) for s in slots])
    mean = data.mean(axis=0)
    if data.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, data.std(axis=0, ddof=1) / math.sqrt(data.shape[0])


def default_workers() -> int:
    return max(1, os.cpu_count() or 1)


def run_members(member: Callable[[int], Any], size: int, workers: int = 1) -> list[Any]:
    """Evaluate ``member(stream)`` for streams 0..size-1 into index-ordered slots.

    ``member`` must be picklable when ``workers > 1``.
    """
    slots: list[Any] = [None] * size
    if workers <= 1 or size <= 1:
        for i in range(size):
            slots[i] = member(i)
        return slots
    with ProcessPoolExecutor(max_workers=min(workers, size)) as pool:
        futures = {pool.submit(member, i): i for i in range(size)}
        for fut, i in futures.items():
            slots[i] = fut.result()
    return slots


def sum_counters(dicts: Sequence[Mapping[str, int]]) -> dict[str, int]:
    total: dict[str, int] = {}
    for d in dicts:
        for k, v in d.items():
            total[k] = total.get(k, 0) + int(v)
    return total


# --- entry points --------------------------------------------------------------

def run_experiment(config: ExperimentConfig, workers: int = 1) -> EnsembleSummary:
    """Check the regime preconditions, run the experiment and time it."""
    from .experiments import EXPERIMENTS

    spec = EXPERIMENTS[config.experiment]
    spec.check(config)
    start = time.perf_counter()
    summary = spec.run(config, workers)
    summary.wall_time_s = time.perf_counter() - start
    return summary


def _fmt(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    return str(value)


def _write_table(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _plot(path: Path, name: str, series: Series) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    for label, y in series.ys.items():
        x = np.asarray(series.x, dtype=float)
        y = np.asarray(y, dtype=float)
        if series.loglog:
            keep = (x > 0) & (y > 0)
            ax.loglog(x[keep], y[keep], marker="o", label=label)
        else:
            ax.plot(x, y, label=label)
    ax.set_xlabel(series.xlabel)
    ax.set_ylabel(series.ylabel)
    ax.set_title(name)
    if len(series.ys) > 1:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def emit_outputs(summary: EnsembleSummary, out_dir: str | Path, plots: bool = True) -> list[Path]:
    """Write summary.json, rows.csv, one CSV per series and table, and plots."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / "summary.json"
    path.write_text(json.dumps(summary.to_json(), indent=2, default=float) + "\n")
    written.append(path)
    path = out / "rows.csv"
    _write_table(path, ["name", "estimate", "stderr", "target", "tol_rule", "pass"],
                 [[r.name, r.estimate, r.stderr, r.target, r.tol_rule, r.passed] for r in summary.rows])
    written.append(path)
    for name, s in summary.series.items():
        path = out / f"series_{name}.csv"
        labels = list(s.ys)
        _write_table(path, [s.xlabel, *labels],
                     [[x, *(s.ys[k][i] for k in labels)] for i, x in enumerate(np.asarray(s.x))])
        written.append(path)
        if plots:
            path = out / f"plot_{name}.png"
            _plot(path, name, s)
            written.append(path)
    for name, (header, data) in summary.tables.items():
        path = out / f"trace_{name}.csv"
        _write_table(path, header, np.atleast_2d(data).tolist() if len(data) else [])
        written.append(path)
    return written


def exit_code(summary: EnsembleSummary) -> int:
    return 0 if summary.passed else 1


__all__ = [
    "ExperimentConfig", "Row", "Series", "EnsembleSummary", "aggregate", "run_members",
    "run_experiment", "emit_outputs", "load_config", "config_from_mapping", "apply_override",
    "holds", "exit_code",
]

import json
import math

import numpy as np
import pytest

from longjump.errors import InvalidParams, MissingSlot, RegimeMismatch, SpaceMismatch
from longjump.harness import (
    EnsembleSummary,
    Row,
    aggregate,
    apply_override,
    config_from_mapping,
    emit_outputs,
    exit_code,
    holds,
    load_config,
    run_experiment,
    run_members,
)

SMALL_WHITE_NOISE = {
    "experiment": "white_noise", "model.n": 64, "model.gamma": 0.5, "model.beta": 0.0,
    "sim.horizon": 0.1, "sim.ensemble": 40, "sim.mode": "sampling", "sim.seed": 3,
    "testfns.G": "dirneu_poly", "testfns.H": "neumann_cos:1", "options.times": [0.0, 0.1],
}


def _square(i):
    return np.array([i, i * i], dtype=float)


def test_aggregate_examples():
    mean, se = aggregate([np.array([2.5])] * 7)
    assert mean[0] == 2.5 and se[0] == 0.0
    mean, se = aggregate([0.0, 2.0])
    assert float(mean) == 1.0 and float(se) == 1.0
    with pytest.raises(MissingSlot):
        aggregate([1.0, None])
    with pytest.raises(MissingSlot):
        aggregate([])


def test_aggregate_is_order_independent_given_slots():
    slots = [np.array([0.1 * i, math.sin(i)]) for i in range(50)]
    filled = [None] * 50
    for i in np.random.default_rng(0).permutation(50):
        filled[i] = slots[i]
    a, b = aggregate(slots), aggregate(filled)
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


def test_run_members_parallel_matches_serial():
    serial = run_members(_square, 6, workers=1)
    parallel = run_members(_square, 6, workers=2)
    for s, p in zip(serial, parallel):
        np.testing.assert_array_equal(s, p)


def test_row_rules():
    assert Row("a", 1.0, stderr=0.1, target=1.3).passed
    assert not Row("a", 1.0, stderr=0.05, target=1.3).passed
    assert Row("a", 1.0, stderr=0.0, target=1.05, tol=0.1).passed
    assert Row("b", 0.5, target=1.0, rule="below").passed
    assert not Row("b", 1.0, target=1.0, rule="below").passed
    assert Row("c", 1.0, target=1.0, rule="at_most").passed
    assert Row("w", 0.9, target=0.8, rule="window", tol=0.2).passed
    assert not Row("w", 0.9, target=0.8, rule="window", tol=0.05).passed
    assert holds("h", True).passed and not holds("h", False).passed
    assert not Row("n", float("nan"), target=0.0, tol=1.0).passed
    budget = Row("s", 0.0, stderr=0.5, target=0.0, se_budget=0.1)
    assert not budget.passed and "insufficient" in budget.to_dict()["note"]
    with pytest.raises(ValueError):
        Row("x", 0.0, rule="close")


def test_row_json_keys():
    d = Row("a", 1.0, stderr=0.1, target=1.0).to_dict()
    assert set(d) == {"name", "estimate", "stderr", "target", "tol_rule", "pass"}


@pytest.mark.parametrize("mutation", [
    {"experiment": "nope"},
    {"model.gamma": 2.5},
    {"sim.mode": "fast"},
    {"sim.ensemble": 0},
    {"model.unknown": 1},
    {"testfns.G": "nope"},
    {"tolerances.carre_rel": -1},
])
def test_config_errors(mutation):
    data = dict(SMALL_WHITE_NOISE)
    data.update(mutation)
    with pytest.raises(InvalidParams):
        config_from_mapping(data)


def test_config_nested_sections_and_round_trip(tmp_path):
    nested = {"experiment": "ladder", "model": {"n": 64, "gamma": 1.5}, "options": {"delta": 0.25}}
    cfg = config_from_mapping(nested)
    assert cfg.params.n == 64 and cfg.option("delta", None) == 0.25
    again = config_from_mapping(cfg.to_flat())
    assert again == cfg
    assert apply_override(cfg, "model.gamma", 1.7).params.gamma == 1.7
    path = tmp_path / "c.yaml"
    path.write_text("experiment: ladder\nmodel.n: 64\nmodel.gamma: 1.5\n")
    assert load_config(path).experiment == "ladder"
    with pytest.raises(InvalidParams):
        load_config(tmp_path / "missing.yaml")


def test_regime_preconditions():
    h1 = dict(SMALL_WHITE_NOISE, experiment="energy_estimate", **{"model.gamma": 1.5})
    with pytest.raises(RegimeMismatch):
        run_experiment(config_from_mapping(h1))
    sweep = {"experiment": "error_vanish", "model.n": 64, "model.gamma": 1.6, "model.beta": 0.5,
             "testfns.G": "polynomial:0,1"}
    with pytest.raises(SpaceMismatch):
        run_experiment(config_from_mapping(sweep))


def test_outputs_are_reproducible(tmp_path):
    cfg = config_from_mapping(SMALL_WHITE_NOISE)
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    emit_outputs(a, tmp_path / "a", plots=False)
    emit_outputs(b, tmp_path / "b", plots=True)
    csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert "rows.csv" in csvs
    for name in csvs:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert set(summary) == {"experiment", "params", "rows", "counters", "wall_time_s"}
    assert list((tmp_path / "b").glob("plot_*.png")) or not a.series


def test_parallel_ensemble_same_slots():
    cfg = config_from_mapping(SMALL_WHITE_NOISE)
    a = run_experiment(cfg, workers=1)
    b = run_experiment(cfg, workers=2)
    assert [r.to_dict() for r in a.rows] == [r.to_dict() for r in b.rows]


def test_exit_code_contract(tmp_path):
    empty = EnsembleSummary("ladder", {}, [])
    assert exit_code(empty) == 0
    written = emit_outputs(empty, tmp_path)
    assert {p.name for p in written} == {"summary.json", "rows.csv"}
    failing = EnsembleSummary("ladder", {}, [holds("ok", True), holds("bad", False)])
    assert exit_code(failing) == 1
    assert "FAIL ladder:bad" in failing.report()

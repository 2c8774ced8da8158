"""Acceptance gate: each test checks one criterion from the shipped configs
and reports a PASS/FAIL line (collected in the terminal summary)."""

from pathlib import Path

import pytest

from longjump.experiments import (
    burgers_rows,
    dynkin_ensemble,
    energy_rows,
    martingale_rows,
    qv_rows,
    windowed_run,
)
from longjump.harness import (
    EnsembleSummary,
    Row,
    default_workers,
    load_config,
    run_experiment,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
WORKERS = default_workers()

pytestmark = pytest.mark.slow


def _config(name):
    return load_config(CONFIGS / f"{name}.yaml")


def _run(name) -> EnsembleSummary:
    summary = run_experiment(_config(name), WORKERS)
    print(summary.report())
    return summary


def _detail(rows: list[Row], keys: tuple[str, ...] = ()) -> str:
    failing = [r.name for r in rows if not r.passed]
    shown = [f"{r.name}={r.estimate:.4g}" + (f"±{r.stderr:.2g}" if r.stderr else "") + f" (target {r.target:.4g})"
             for r in rows if any(k in r.name for k in keys)]
    head = f"{len(rows) - len(failing)}/{len(rows)} rows pass"
    if failing:
        head += "; failing " + ", ".join(failing)
    return "; ".join([head, *shown])


def _check(gate, number, title, rows, keys=()):
    passed = bool(rows) and all(r.passed for r in rows)
    gate(number, title, passed, _detail(rows, keys))
    assert passed, _detail(rows, keys)


@pytest.fixture(scope="session")
def dynkin_run():
    return dynkin_ensemble(_config("c04_qv_limit"), WORKERS)


@pytest.fixture(scope="session")
def burgers_run():
    return windowed_run(_config("c09_burgers_martingale"), WORKERS)


def test_criterion_01_stationarity(gate):
    sym, asym = _run("c01_stationarity_symmetric"), _run("c01_stationarity_asymmetric")
    rows = sym.rows + asym.rows
    total = sym.wall_time_s + asym.wall_time_s
    rows.append(Row("total_runtime_s", total, target=30.0, rule="below"))
    _check(gate, 1, "exact stationarity", rows, ("invariance", "total_runtime"))


def test_criterion_02_generator_closed_form(gate):
    rows = _run("c02_generator_symmetric").rows + _run("c02_generator_asymmetric").rows
    _check(gate, 2, "generator closed form", rows, ("max_abs_diff",))


def test_criterion_03_white_noise(gate):
    _check(gate, 3, "white-noise marginals", _run("c03_white_noise").rows, ("var", "cov"))


def test_criterion_04_qv_limit(gate, dynkin_run):
    rows, _ = qv_rows(dynkin_run)
    _check(gate, 4, "quadratic variation limit", rows, ("qv_rate", "carre_gap"))


def test_criterion_05_martingale(gate, dynkin_run):
    rows, _ = martingale_rows(dynkin_run)
    _check(gate, 5, "martingale property", rows, ("mean_M", "lag1", "cov"))


def test_criterion_06_operator_convergence(gate):
    rows = []
    for name in ("c06_error_vanish_g12", "c06_error_vanish_g16"):
        summary = _run(name)
        rows += [Row(f"{name}:{r.name}", r.estimate, r.stderr, r.target, r.rule, r.tol) for r in summary.rows]
    _check(gate, 6, "discrete operator convergence", rows, ("ratio", "runtime"))


def test_criterion_07_asymmetric_term_vanishes(gate):
    rows = []
    for name in ("c07_asym_vanish_case2", "c07_asym_vanish_case1"):
        summary = _run(name)
        rows += [Row(f"{name}:{r.name}", r.estimate, r.stderr, r.target, r.rule, r.tol) for r in summary.rows]
    _check(gate, 7, "A-term vanishing under H1", rows, ("ratio",))


def test_criterion_08_energy_estimate(gate, burgers_run):
    rows, _ = energy_rows(burgers_run)
    _check(gate, 8, "energy-estimate exponent", rows, ("slope",))


def test_criterion_09_burgers_balance(gate, burgers_run):
    rows, _ = burgers_rows(burgers_run)
    _check(gate, 9, "Burgers martingale balance", rows, ("mean", "qv", "replacement"))


def test_criterion_10_psi_moments(gate):
    _check(gate, 10, "psi moments", _run("c10_psi_moments").rows, ("ensemble",))


def test_criterion_11_mollifiers(gate):
    _check(gate, 11, "mollifier suite", _run("c11_mollifier").rows)


def test_criterion_12_ladder(gate):
    _check(gate, 12, "multiscale ladder", _run("c12_ladder").rows, ("lambda_1", "N", "runtime"))


def test_criterion_13_performance(gate):
    summary = _run("c13_performance")
    detail_keys = ("wall",)
    _check(gate, 13, "performance", summary.rows, detail_keys)
    print("counters:", summary.counters)

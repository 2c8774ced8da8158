"""Named experiments run by the harness.  Each one checks its regime
preconditions before simulating and returns an EnsembleSummary."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from functools import lru_cache, partial
from typing import Any, Callable

import numpy as np

from .discops import check_sweep_space, convergence_sweep, qv_coeffs, qv_rate, sites
from .engine import Simulation, simulate
from .errors import InvalidParams, RegimeMismatch
from .exact import apply_L_occupation, exact_generator, product_measure, state_bits
from .fields import (
    Y_many, a_eps_integrand, accumulate_decomposition, box_length, build_observables,
    check_grid, extrapolate_eps, ladder, psi_integrand, psi_values, replacement_residual, trapezoid_cumulative,
)
from .fracops import carre_P, mollify
from .harness import (
    EnsembleSummary, ExperimentConfig, Row, Series, aggregate, holds, run_members, sum_counters,
)
from .kernel import asym_moment, kernel_build
from .params import ModelParams
from .regime import Theorem, chi, classify
from .testfn import FunctionFn, Space, TestFunction, dirneu_poly, from_spec, polynomial, verify_membership


@dataclass(frozen=True)
class ExperimentSpec:
    run: Callable[[ExperimentConfig, int], EnsembleSummary]
    check: Callable[[ExperimentConfig], None]


def _no_check(config: ExperimentConfig) -> None:
    return None


def _summary(config: ExperimentConfig, rows: list[Row], **extra: Any) -> EnsembleSummary:
    return EnsembleSummary(config.experiment, config.params.to_dict(), rows, **extra)


def _first_label(config: ExperimentConfig, key: str = "label") -> str:
    label = config.option(key, next(iter(config.testfns)))
    if label not in config.testfns:
        raise InvalidParams(f"options.{key}={label!r} is not a configured test function")
    return label


def _grid(config: ExperimentConfig, steps_default: int = 20) -> np.ndarray:
    if config.sample_dt is not None:
        steps = max(1, int(round(config.horizon / config.sample_dt)))
    else:
        steps = int(config.option("steps", steps_default))
    return np.linspace(0.0, config.horizon, steps + 1)


# --- exact oracles -------------------------------------------------------------

def _oracle_sets(config: ExperimentConfig) -> list[ModelParams]:
    """Parameter grid over n, beta and b built around the configured model."""
    p = config.params
    n_list = config.option("n_list", [p.n])
    betas = config.option("beta_list", [p.beta])
    b_list = config.option("b_list", [p.b])
    sets = []
    for n, beta, b in itertools.product(n_list, betas, b_list):
        changes: dict[str, Any] = {"n": int(n), "beta": float(beta), "b": float(b)}
        if p.asymmetric and p.alpha_a > 0:
            changes["beta_a"] = max(p.beta_a, 0.0, float(beta))
        sets.append(p.with_(**changes))
    return sets


def run_stationarity(config: ExperimentConfig, workers: int) -> EnsembleSummary:
    start = time.perf_counter()
    defects = []
    for p in _oracle_sets(config):
        q = exact_generator(p)
        defects.append(float(np.max(np.abs(product_measure(p) @ q))))
    elapsed = time.perf_counter() - start
    rows = [
        Row("nu_b_invariance_sup", max(defects), target=config.tol("invariance", 1e-10), rule="below"),
        Row("oracle_runtime_s", elapsed, target=config.tol("runtime_s", 30.0), rule="below"),
    ]
    return _summary(config, rows)


def run_generator_closed_form(config: ExperimentConfig, workers: int) -> EnsembleSummary:
    per_set = int(config.option("configs_per_set", 100))
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(1 << 20,)))
    worst = 0.0
    for p in _oracle_sets(config):
        kernel = kernel_build(p)
        q = exact_generator(p, kernel)
        bits = state_bits(p.n)
        picks = rng.choice(bits.shape[0], size=min(per_set, bits.shape[0]), replace=False)
        for z in range(1, p.n):
            lifted = q @ bits[:, z - 1].astype(float)
            for i in picks:
                closed = apply_L_occupation(z, bits[i], p, kernel)
                worst = max(worst, abs(closed - lifted[i]))
    rows = [Row("generator_closed_form_max_abs_diff", worst, target=config.tol("closed_form", 1e-12), rule="below")]
    return _summary(config, rows)


# --- white noise ---------------------------------------------------------------

def _white_noise_member(config: ExperimentConfig, stream: int) -> tuple[np.ndarray, dict[str, int]]:
    times = np.asarray(config.option("times", [0.0, 0.5]), dtype=float)
    tests = config.tests()
    trace = simulate(config.params, _kernel(config.params), None, times, config.seed, stream,
                     mode="sampling", record_configs=True)
    ys = np.stack([Y_many(G, trace.configs, config.params.b) for G in tests.values()])  # (labels, times)
    stats = list((ys**2).ravel())
    if ys.shape[0] >= 2:
        stats += list(ys[0] * ys[1])
    return np.asarray(stats), trace.counters


@lru_cache(maxsize=8)
def _kernel(params: ModelParams):
    return kernel_build(params)


def run_white_noise(config: ExperimentConfig, workers: int) -> EnsembleSummary:
    p = config.params
    times = list(config.option("times", [0.0, 0.5]))
    tests = config.tests()
    labels = list(tests)
    results = run_members(partial(_white_noise_member, config), config.ensemble, workers)
    mean, se = aggregate([r[0] for r in results])
    n = p.n
    u = sites(n) / n
    vals = {k: np.asarray(G(u), dtype=float) for k, G in tests.items()}
    budget = config.tolerances.get("se_budget")
    rows = []
    i = 0
    for label in labels:
        target = chi(p.b) / (n - 1) * float(np.sum(vals[label] ** 2))
        for t in times:
            rows.append(Row(f"var_Y[{label}]@t={t:g}", mean[i], se[i], target, "within",
                            config.tol("abs", 0.0), budget))
            i += 1
    if len(labels) >= 2:
        g1, g2 = labels[:2]
        target = chi(p.b) / (n - 1) * float(np.dot(vals[g1], vals[g2]))
        for t in times:
            rows.append(Row(f"cov_Y[{g1},{g2}]@t={t:g}", mean[i], se[i], target, "within",
                            config.tol("abs", 0.0), budget))
            i += 1
    return _summary(config, rows, counters=sum_counters([r[1] for r in results]))


# --- Dynkin ensembles: quadratic variation and martingale checks ---------------

@lru_cache(maxsize=4)
def _dynkin_observables(params: ModelParams, label: str, spec: str, probes: tuple[tuple[str, str], ...],
                        track_asymmetric: bool):
    obs, layout = build_observables({label: from_spec(spec)}, params, track_asymmetric=track_asymmetric)
    n = params.n
    root = math.sqrt(n - 1)
    for name, probe in probes:
        g = np.asarray(from_spec(probe)(sites(n) / n), dtype=float)
        obs.add_linear(f"Y[{name}]", g / root)
    return obs, layout


def _dynkin_member(config: ExperimentConfig, label: str, probes: tuple[tuple[str, str], ...],
                   stream: int) -> tuple[dict[str, np.ndarray], dict[str, int]]:
    p = config.params
    obs, layout = _dynkin_observables(p, label, config.testfns[label], probes,
                                      bool(config.option("track_asymmetric", True)))
    trace = simulate(p, _kernel(p), obs, _grid(config), config.seed, stream, mode="dynkin")
    dec = accumulate_decomposition(trace, layout, label)
    out = {"times": dec.times, "Y": dec.Y, "I": dec.I, "E": dec.E, "A": dec.A, "M": dec.M,
           "qv": dec.qv_realized}
    for name, _ in probes:
        out[f"probe[{name}]"] = trace.series(f"Y[{name}]")
    return out, trace.counters


@dataclass(frozen=True)
class DynkinEnsemble:
    config: ExperimentConfig
    label: str
    probes: tuple[str, ...]
    members: list[dict[str, np.ndarray]]
    counters: dict[str, int]


def dynkin_ensemble(config: ExperimentConfig, workers: int = 1) -> DynkinEnsemble:
    """One Dynkin-mode ensemble tracking the decomposition of the first test
    function and the plain field of the others (probes)."""
    label = _first_label(config)
    probes = tuple((k, v) for k, v in config.testfns.items() if k != label)
    results = run_members(partial(_dynkin_member, config, label, probes), config.ensemble, workers)
    return DynkinEnsemble(config, label, tuple(k for k, _ in probes), [r[0] for r in results],
                          sum_counters([r[1] for r in results]))


def qv_rows(ens: DynkinEnsemble) -> tuple[list[Row], dict[str, Series]]:
    config = ens.config
    p = config.params
    G = from_spec(config.testfns[ens.label])
    T = config.horizon
    slots = [m["qv"][-1] / T for m in ens.members]
    mean, se = aggregate(slots)
    target = qv_rate(G, p)
    rows = [Row(f"qv_rate[{ens.label}]", float(mean), float(se), target, "within",
                config.tol("abs", 0.0), config.tolerances.get("se_budget"))]
    carre_n = int(config.option("carre_n", 4096))
    carre_label = config.option("carre_label", ens.label)
    H = from_spec(config.testfns[carre_label])
    a_hat, b_val = qv_coeffs(H, p.with_(n=carre_n))
    finite = a_hat + p.alpha * b_val
    limit = carre_P(H, p)
    rows.append(Row(f"carre_gap_rel[{carre_label}]@n={carre_n}", abs(finite - limit) / limit,
                    target=config.tol("carre_rel", 0.05), rule="below"))
    times = ens.members[0]["times"]
    qv_mean, _ = aggregate([m["qv"] for m in ens.members])
    series = {"qv": Series(times, {"realized": qv_mean, "target": target * (times - times[0])},
                           xlabel="t", ylabel="QV")}
    return rows, series


def martingale_rows(ens: DynkinEnsemble) -> tuple[list[Row], dict[str, Series]]:
    config = ens.config
    budget = config.tolerances.get("se_budget")
    tol = config.tol("abs", 0.0)
    final, final_se = aggregate([m["M"][-1] for m in ens.members])
    rows = [Row(f"mean_M_T[{ens.label}]", float(final), float(final_se), 0.0, "within", tol, budget)]
    # Lag-one autocovariance of increments, reported as a correlation.
    inc = [np.diff(m["M"]) for m in ens.members]
    lag, lag_se = aggregate([np.mean(d[1:] * d[:-1]) for d in inc])
    var, _ = aggregate([np.mean(d * d) for d in inc])
    rows.append(Row(f"lag1_autocorr_dM[{ens.label}]", float(lag / var), float(lag_se / var), 0.0,
                    "within", tol, budget))
    for probe in ens.probes:
        cov, cov_se = aggregate([np.mean(np.diff(m["M"]) * m[f"probe[{probe}]"][:-1]) for m in ens.members])
        rows.append(Row(f"cov_dM_Y[{probe}]", float(cov), float(cov_se), 0.0, "within", tol, budget))
    times = ens.members[0]["times"]
    means = {k: aggregate([m[k] for m in ens.members])[0] for k in ("M", "I", "E", "A")}
    return rows, {"decomposition": Series(times, means, xlabel="t", ylabel="ensemble mean")}


def _members_table(ens: DynkinEnsemble) -> tuple[list[str], np.ndarray]:
    keys = ["Y", "I", "E", "A", "M", "qv"]
    rows = []
    for i, m in enumerate(ens.members):
        for j, t in enumerate(m["times"]):
            rows.append([i, t, *(m[k][j] for k in keys)])
    return ["stream", "t", *keys], np.asarray(rows)


def _require_h1(config: ExperimentConfig) -> None:
    info = classify(config.params)
    if not info.h1:
        raise RegimeMismatch(f"{config.experiment} needs an H1 (Ornstein-Uhlenbeck) regime")


def _require_h2(config: ExperimentConfig) -> None:
    info = classify(config.params)
    if info.theorem not in (Theorem.SBE_UNIQUE, Theorem.SBE_TIGHT_ONLY):
        raise RegimeMismatch(f"{config.experiment} needs the H2 regime with gamma >= 3/2 and b = 1/2 "
                             f"(got r_a={info.r_a:.4g}, theorem={info.theorem.value})")


def run_qv_limit(config: ExperimentConfig, workers: int) -> EnsembleSummary:
    ens = dynkin_ensemble(config, workers)
    rows, series = qv_rows(ens)
    return _summary(config, rows, counters=ens.counters, series=series,
                    tables={"members": _members_table(ens)})


def run_ou_martingale(config: ExperimentConfig, workers: int) -> EnsembleSummary:
    ens = dynkin_ensemble(config, workers)
    rows, series = martingale_rows(ens)
    return _summary(config, rows, counters=ens.counters, series=series,
                    tables={"members": _members_table(ens)})


# --- operator convergence --------------------------------------------------------

def _check_sweep(config: ExperimentConfig) -> None:
    for G in config.tests().values():
        check_sweep_space(G, config.params)


def run_error_vanish(config: ExperimentConfig, workers: int) -> EnsembleSummary:
    n_list = [int(n) for n in config.option("n_list", [128, 256, 512, 1024, 2048])]
    ratio_max = config.tol("ratio", 0.5)
    start = time.perf_counter()
    rows, series, tables = [], {}, {}
    for label, G in config.tests().items():
        sweep = convergence_sweep(G, config.params, n_list)
        e = np.array([r.e_total for r in sweep])
        rows.append(holds(f"e_n_strictly_decreasing[{label}]", bool(np.all(np.diff(e) < 0))))
        rows.append(Row(f"e_ratio_last_first[{label}]", e[-1] / e[0], target=ratio_max, rule="at_most"))
        series[f"sweep_{label}"] = Series(np.array(n_list, float), {
            "e_total": e, "e_K": np.array([r.e_K for r in sweep]), "e_R": np.array([r.e_R for r in sweep]),
        }, loglog=True, xlabel="n", ylabel="mean-square error")
        tables[f"sweep_{label}"] = (["n", "e_total", "e_K", "e_R", "e_boundary_strip"],
                                    np.array([[r.n, r.e_total, r.e_K, r.e_R, r.e_boundary_strip] for r in sweep]))
    rows.append(Row("sweep_runtime_s", time.perf_counter() - start, target=config.tol("runtime_s", 120.0),
                    rule="below"))
    return _summary(config, rows, series=series, tables=tables)


# --- asymmetric term under H1 -----------------------------------------------------

def _asym_member(config: ExperimentConfig, params: ModelParams, stream: int) -> tuple[float, dict[str, int]]:
    label = _first_label(config)
    obs, layout = _dynkin_observables(params, label, config.testfns[label], (), True)
    trace = simulate(params, _kernel(params), obs, _grid(config), config.seed, stream, mode="dynkin")
    dec = accumulate_decomposition(trace, layout, label)
    return float(np.max(dec.A**2)), trace.counters


def run_asym_vanish(config: ExperimentConfig, workers: int) -> EnsembleSummary:
    n_list = [int(n) for n in config.option("n_list", [128, 256, 512])]
    means, ses, counters = [], [], []
    for n in n_list:
        p = config.params.with_(n=n)
        results = run_members(partial(_asym_member, config, p), config.ensemble, workers)
        m, s = aggregate([r[0] for r in results])
        means.append(float(m))
        ses.append(float(s))
        counters.append(sum_counters([r[1] for r in results]))
    all_zero = all(m == 0.0 for m in means)
    rows = [holds("max_A_sq_decreasing", all_zero or bool(np.all(np.diff(means) < 0)),
                  note="identically zero" if all_zero else "")]
    rows.append(Row("max_A_sq_ratio_last_first", 0.0 if all_zero else means[-1] / means[0],
                    target=config.tol("ratio", 0.6), rule="at_most"))
    series = {"max_A_sq": Series(np.array(n_list, float), {"E max A^2": np.array(means)}, loglog=True,
                                 xlabel="n", ylabel="E max_t A_t^2")}
    return _summary(config, rows, counters=sum_counters(counters), series=series,
                    tables={"max_A_sq": (["n", "mean", "stderr"], np.column_stack([n_list, means, ses]))})


def _check_asym_vanish(config: ExperimentConfig) -> None:
    _require_h1(config)
    for n in config.option("n_list", [128, 256, 512]):
        config.params.with_(n=int(n))


# --- energy estimate and Burgers balance ---------------------------------------------

EPS_LIST = (0.4, 0.2, 0.1, 0.05, 0.025)
EXTRAPOLATION_EPS = (0.1, 0.05, 0.025)


@dataclass(frozen=True)
class WindowLayout:
    """Column layout of the per-window statistics of a windowed run."""

    eps: tuple[float, ...]
    extrapolation_eps: tuple[float, ...]

    @property
    def columns(self) -> list[str]:
        return [f"dA_eps={e:g}" for e in self.eps] + ["dY", "dI", "dE", "dA_hat", "jump_qv", "replacement_max"]


def _window_settings(config: ExperimentConfig) -> tuple[float, float, int, int, WindowLayout]:
    window = float(config.option("window", 0.02))
    dt = float(config.sample_dt or config.option("snapshot_dt", 8e-6))
    steps = int(round(window / dt))
    count = int(round(config.horizon / window))
    if steps < 2 or count < 2 or abs(steps * dt - window) > 1e-9 * window:
        raise InvalidParams("window must be a multiple of the snapshot spacing, with >= 2 windows")
    eps = tuple(float(e) for e in config.option("eps_list", EPS_LIST))
    extra = tuple(float(e) for e in config.option("extrapolation_eps", EXTRAPOLATION_EPS))
    if not set(extra) <= set(eps):
        raise InvalidParams("options.extrapolation_eps must be a subset of options.eps_list")
    return window, dt, steps, count, WindowLayout(eps, extra)


def _windowed_member(config: ExperimentConfig, stream: int) -> tuple[np.ndarray, dict[str, int]]:
    p = config.params
    label = _first_label(config)
    G = from_spec(config.testfns[label])
    window, dt, steps, count, layout = _window_settings(config)
    obs, fl = _dynkin_observables(p, label, config.testfns[label], (), False)
    sim = Simulation(p, _kernel(p), obs, config.seed, stream, mode="dynkin")
    lengths = [box_length(e, p.n) for e in layout.eps]
    rep_L = box_length(float(config.option("replacement_eps", 0.1)), p.n)
    kappa = 2.0 * p.alpha_a * asym_moment(p)
    idx = fl.index[label]
    extra_pos = [layout.eps.index(e) for e in layout.extrapolation_eps]
    out = np.zeros((count, len(layout.columns)))
    for w in range(count):
        grid = w * window + np.arange(steps + 1) * dt
        trace = sim.advance(grid, record_configs=True)
        cfg = trace.configs
        d_eps = np.array([np.trapezoid(a_eps_integrand(cfg, G, L, p.b), dx=dt) for L in lengths])
        d_hat = float(extrapolate_eps(d_eps[extra_pos], layout.extrapolation_eps, p.gamma))
        a_series = trapezoid_cumulative(grid, a_eps_integrand(cfg, G, rep_L, p.b))
        t_series = trapezoid_cumulative(grid, psi_integrand(cfg, G, rep_L, p.b))
        rep = replacement_residual(grid, a_series, t_series, G, rep_L, p.n, p.b)
        now = np.array([trace.values[-1, idx["Y"]], trace.integrals[-1, idx["I"]],
                        trace.integrals[-1, idx["E"]], trace.jump_sq[-1, idx["Y"]]])
        start = np.array([trace.values[0, idx["Y"]], trace.integrals[0, idx["I"]],
                          trace.integrals[0, idx["E"]], trace.jump_sq[0, idx["Y"]]])
        delta = now - start
        out[w] = [*d_eps, delta[0], delta[1], delta[2], kappa * d_hat, delta[3], float(np.max(np.abs(rep)))]
    return out, sim.counter_dict()


@dataclass(frozen=True)
class WindowedRun:
    config: ExperimentConfig
    layout: WindowLayout
    windows: np.ndarray  # (members * windows, columns)
    counters: dict[str, int]

    def column(self, name: str) -> np.ndarray:
        return self.windows[:, self.layout.columns.index(name)]


def windowed_run(config: ExperimentConfig, workers: int = 1) -> WindowedRun:
    """Dynkin run with configuration snapshots, reduced window by window."""
    layout = _window_settings(config)[4]
    results = run_members(partial(_windowed_member, config), config.ensemble, workers)
    return WindowedRun(config, layout, np.vstack([r[0] for r in results]),
                       sum_counters([r[1] for r in results]))


def energy_rows(run: WindowedRun) -> tuple[list[Row], dict[str, Series]]:
    config = run.config
    eps = np.array(run.layout.eps)
    d = np.column_stack([run.column(f"dA_eps={e:g}") for e in eps])
    second = (d[:, :-1] - d[:, 1:]) ** 2
    mean, se = aggregate(list(second))
    fit_n = int(config.option("fit_points", 4))
    slope = float(np.polyfit(np.log(eps[:fit_n]), np.log(mean[:fit_n]), 1)[0])
    omega = config.params.gamma - 1.0
    rows = [Row("energy_slope", slope, target=omega, rule="window", tol=config.tol("slope_window", 0.4))]
    series = {"energy": Series(eps[:-1], {"E[(A^eps - A^eps/2)^2]": mean}, loglog=True,
                               xlabel="eps", ylabel="mean square")}
    return rows, series


def burgers_rows(run: WindowedRun) -> tuple[list[Row], dict[str, Series]]:
    config = run.config
    p = config.params
    label = _first_label(config)
    G = from_spec(config.testfns[label])
    window = _window_settings(config)[0]
    budget = config.tolerances.get("se_budget")
    tol = config.tol("abs", 0.0)
    residual = run.column("dY") - run.column("dI") - run.column("dE") + run.column("dA_hat")
    mean, se = aggregate(list(residual))
    rows = [Row(f"mean_residual_increment[{label}]", float(mean), float(se), 0.0, "within", tol, budget)]
    qv_mean, qv_se = aggregate(list(run.column("jump_qv") / window))
    rows.append(Row(f"residual_qv_rate[{label}]", float(qv_mean), float(qv_se), qv_rate(G, p), "within",
                    tol, budget))
    rows.append(Row("replacement_identity_max", float(np.max(run.column("replacement_max"))),
                    target=config.tol("replacement", 1e-9), rule="below"))
    x = np.arange(residual.size) * window
    series = {"residual": Series(x, {"cumulative residual": np.cumsum(residual)}, xlabel="t", ylabel="R_t")}
    return rows, series


def _check_windowed(config: ExperimentConfig) -> None:
    _require_h2(config)
    p = config.params
    _, dt, _, _, layout = _window_settings(config)
    for e in layout.eps:
        box_length(e, p.n)
    # Fail before simulating when the snapshots are too sparse for the smallest box.
    check_grid(np.array([0.0, dt]), p, box_length(min(layout.eps), p.n) / p.n,
               float(config.option("grid_fraction", 0.5)))


def run_energy_estimate(config: ExperimentConfig, workers: int) -> EnsembleSummary:
    run = windowed_run(config, workers)
    rows, series = energy_rows(run)
    return _summary(config, rows, counters=run.counters, series=series,
                    tables={"windows": (run.layout.columns, run.windows)})


def run_burgers_martingale(config: ExperimentConfig, workers: int) -> EnsembleSummary:
    run = windowed_run(config, workers)
    rows, series = burgers_rows(run)
    return _summary(config, rows, counters=run.counters, series=series,
                    tables={"windows": (run.layout.columns, run.windows)})


# --- psi moments -------------------------------------------------------------------

def psi_second_moment(L: int, b: float) -> float:
    """E[psi^2] under the product measure: (mu4 + (2L - 3) chi^2) / (L (L-1)^2)."""
    c = chi(b)
    mu4 = c * (1.0 - 3.0 * c)
    return (mu4 + (2 * L - 3) * c * c) / (L * (L - 1) ** 2)


def psi_exact_moments(L: int, b: float) -> tuple[float, float]:
    """(E psi, E psi^2) by enumerating all 2^L box configurations."""
    occ = ((np.arange(2**L)[:, None] >> np.arange(L)[None, :]) & 1).astype(float)
    ones = occ.sum(axis=1)
    weight = b**ones * (1.0 - b) ** (L - ones)
    avg = ones / L - b
    psi = L / (L - 1) * (avg**2 - chi(b) / L)
    return float(weight @ psi), float(weight @ psi**2)


def _psi_member(config: ExperimentConfig, stream: int) -> tuple[np.ndarray, dict[str, int]]:
    p = config.params
    L_list = [int(L) for L in config.option("L_ensemble", [8, 16])]
    trace = simulate(p, _kernel(p), None, [0.0, config.horizon], config.seed, stream,
                     mode="sampling", record_configs=True)
    final = trace.configs[-1:]
    stats = []
    for L in L_list:
        psi = psi_values(final, L, p.b)[0]
        stats += [float(psi.mean()), float((psi**2).mean())]
    return np.asarray(stats), trace.counters


def run_psi_moments(config: ExperimentConfig, workers: int) -> EnsembleSummary:
    b = config.params.b
    rows = []
    for L in config.option("L_exact", [2, 3, 4]):
        m1, m2 = psi_exact_moments(int(L), b)
        rows.append(Row(f"exact_mean_psi@L={L}", abs(m1), target=config.tol("exact", 1e-14), rule="at_most"))
        rows.append(Row(f"exact_second_moment_psi@L={L}", m2, target=6.0 / L**2, rule="at_most"))
    L_list = [int(L) for L in config.option("L_ensemble", [8, 16])]
    results = run_members(partial(_psi_member, config), config.ensemble, workers)
    mean, se = aggregate([r[0] for r in results])
    budget = config.tolerances.get("se_budget")
    for i, L in enumerate(L_list):
        rows.append(Row(f"mean_psi@L={L}", mean[2 * i], se[2 * i], 0.0, "within", config.tol("abs", 0.0), budget))
        rows.append(Row(f"second_moment_psi@L={L}", mean[2 * i + 1], se[2 * i + 1], psi_second_moment(L, b),
                        "within", config.tol("abs", 0.0), budget))
    return _summary(config, rows, counters=sum_counters([r[1] for r in results]))


# --- mollifier, ladder, performance ------------------------------------------------

def _step(u: np.ndarray) -> np.ndarray:
    return (np.asarray(u) >= 0.5).astype(float)


MOLLIFIER_TARGETS: dict[str, Callable[[], tuple[TestFunction, tuple[float, ...]]]] = {
    "identity": lambda: (polynomial([0.0, 1.0]), ()),
    "step": lambda: (FunctionFn(_step, "step", breakpoints=(0.5,)), (0.5,)),
    "dirneu_poly": lambda: (dirneu_poly(), ()),
}


def run_mollifier(config: ExperimentConfig, workers: int) -> EnsembleSummary:
    j_list = [int(j) for j in config.option("j_list", [4, 8, 16, 32])]
    targets = config.option("targets", list(MOLLIFIER_TARGETS))
    rows, series = [], {}
    for name in targets:
        if name not in MOLLIFIER_TARGETS:
            raise InvalidParams(f"unknown mollifier target {name!r}")
        target, breaks = MOLLIFIER_TARGETS[name]()
        errors, members = [], []
        for j in j_list:
            H, err = mollify(target, j, breaks)
            errors.append(err)
            members.append(verify_membership(H, Space.S, taylor_points=int(config.option("taylor_points", 401))).passed)
        rows.append(holds(f"l2_error_strictly_decreasing[{name}]", bool(np.all(np.diff(errors) < 0))))
        rows.append(holds(f"membership_S[{name}]", all(members)))
        series[f"mollifier_{name}"] = Series(np.array(j_list, float), {"L2 error": np.array(errors)},
                                             loglog=True, xlabel="j", ylabel="L2 error")
    return _summary(config, rows, series=series)


def run_ladder(config: ExperimentConfig, workers: int) -> EnsembleSummary:
    start = time.perf_counter()
    delta = float(config.option("delta", 0.25))
    lad = ladder(config.params.gamma, delta, config.option("r_a", None))
    lam = lad.lambdas
    tol = config.tol("exact", 1e-12)
    rows = []
    expected = config.option("expected", {})
    for key, value in (("delta_hat", lad.delta_hat), ("lambda_1", lam[1]), ("N", lad.N), ("limit", lad.limit)):
        if key in expected:
            rows.append(Row(key, float(value), target=float(expected[key]), rule="window", tol=tol))
    rows.append(holds("lambda_strictly_increasing", bool(np.all(np.diff(lam) > 0))))
    rows.append(Row("lambda_max", float(lam.max()), target=lad.limit, rule="at_most"))
    rows.append(holds("lambda_N_bracket", 1.0 - delta < lam[-1] < (2.0 - delta) / 2.0,
                      note=f"lambda_N={lam[-1]!r}"))
    rows.append(Row("ladder_runtime_s", time.perf_counter() - start, target=config.tol("runtime_s", 1.0),
                    rule="below"))
    series = {"ladder": Series(np.arange(lam.size, dtype=float), {"lambda_j": lam}, xlabel="j", ylabel="lambda")}
    return _summary(config, rows, series=series)


def run_performance(config: ExperimentConfig, workers: int) -> EnsembleSummary:
    p = config.params
    kernel = kernel_build(p)
    # Compile outside the timed region.
    simulate(p.with_(n=8), None, None, [0.0, 1e-3], config.seed, mode="sampling")
    start = time.perf_counter()
    trace = simulate(p, kernel, None, [0.0, config.horizon], config.seed, 0, mode="sampling")
    elapsed = time.perf_counter() - start
    rows = [Row("single_worker_wall_s", elapsed, target=config.tol("wall_s", 60.0), rule="at_most"),
            holds("counters_consistent", trace.counters["accepted"] == trace.counters["bulk"]
                  + trace.counters["create"] + trace.counters["destroy"])]
    counters = dict(trace.counters)
    counters["proposals_per_second"] = int(counters["proposed"] / max(elapsed, 1e-9))
    return _summary(config, rows, counters=counters)


# --- time reversal -------------------------------------------------------------------

def _reversal_member(config: ExperimentConfig, params: ModelParams, stream: int) -> tuple[np.ndarray, dict[str, int]]:
    tests = list(config.tests().values())
    lag = float(config.option("lag", config.horizon))
    trace = simulate(params, _kernel(params), None, [0.0, lag], config.seed, stream,
                     mode="sampling", record_configs=True)
    g = Y_many(tests[0], trace.configs, params.b)
    h = Y_many(tests[1], trace.configs, params.b)
    return np.array([g[0] * h[1], g[1] * h[0]]), trace.counters


def run_time_reversal(config: ExperimentConfig, workers: int) -> EnsembleSummary:
    """Stationary covariances seen forward match those of the reversed
    dynamics, which swaps c+ and c-."""
    p = config.params
    reverse = p.with_(c_plus=p.c_minus, c_minus=p.c_plus)
    fwd = run_members(partial(_reversal_member, config, p), config.ensemble, workers)
    budget = config.tolerances.get("se_budget")
    if p.asymmetric:
        rev_cfg = config.with_(seed=config.seed + 1)
        bwd = run_members(partial(_reversal_member, rev_cfg, reverse), config.ensemble, workers)
        m1, s1 = aggregate([r[0][0] for r in fwd])
        m2, s2 = aggregate([r[0][1] for r in bwd])
        diff, se = float(m1 - m2), float(math.hypot(s1, s2))
        counters = sum_counters([r[1] for r in fwd + bwd])
    else:
        diff_m, se_m = aggregate([r[0][0] - r[0][1] for r in fwd])
        diff, se = float(diff_m), float(se_m)
        counters = sum_counters([r[1] for r in fwd])
    rows = [Row("reversal_covariance_gap", diff, se, 0.0, "within", config.tol("abs", 0.0), budget)]
    return _summary(config, rows, counters=counters)


def _check_two_tests(config: ExperimentConfig) -> None:
    if len(config.testfns) < 2:
        raise InvalidParams(f"{config.experiment} needs two test functions")


EXPERIMENTS: dict[str, ExperimentSpec] = {
    "stationarity": ExperimentSpec(run_stationarity, _no_check),
    "generator_closed_form": ExperimentSpec(run_generator_closed_form, _no_check),
    "white_noise": ExperimentSpec(run_white_noise, _no_check),
    "qv_limit": ExperimentSpec(run_qv_limit, _no_check),
    "ou_martingale": ExperimentSpec(run_ou_martingale, _require_h1),
    "error_vanish": ExperimentSpec(run_error_vanish, _check_sweep),
    "asym_vanish": ExperimentSpec(run_asym_vanish, _check_asym_vanish),
    "energy_estimate": ExperimentSpec(run_energy_estimate, _check_windowed),
    "burgers_martingale": ExperimentSpec(run_burgers_martingale, _check_windowed),
    "psi_moments": ExperimentSpec(run_psi_moments, _no_check),
    "mollifier": ExperimentSpec(run_mollifier, _no_check),
    "ladder": ExperimentSpec(run_ladder, _no_check),
    "performance": ExperimentSpec(run_performance, _no_check),
    "time_reversal": ExperimentSpec(run_time_reversal, _check_two_tests),
}

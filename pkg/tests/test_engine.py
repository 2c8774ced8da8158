import math

import numpy as np
import pytest
from scipy import stats

from longjump.engine import Observables, Simulation, init_config, simulate, stream_rng
from longjump.exact import exact_generator, product_measure
from longjump.fields import build_observables
from longjump.kernel import kernel_build
from longjump.params import ModelParams
from longjump.regime import time_scale
from longjump.testfn import dirneu_poly, neumann_cos

ASYM = dict(gamma=1.5, c_plus=2.0, c_minus=1.0, alpha=1.0, beta=0.5, alpha_a=1.0, beta_a=0.5)


def test_init_config_density():
    cfg = init_config(ModelParams(n=100_001, gamma=1.5, b=0.5), seed=3)
    m = cfg.n - 1
    assert abs(cfg.particle_count / m - 0.5) < 4 * math.sqrt(0.25 / m)


def test_init_config_deterministic():
    p = ModelParams(n=50, gamma=1.5, b=0.3)
    np.testing.assert_array_equal(init_config(p, 7, 2).occupancy, init_config(p, 7, 2).occupancy)
    assert not np.array_equal(init_config(p, 7, 2).occupancy, init_config(p, 7, 3).occupancy)


def test_init_config_uniform_over_states():
    p = ModelParams(n=6, gamma=1.5, b=0.5)
    weights = 1 << np.arange(5)
    draws = np.array([init_config(p, 11, i).occupancy @ weights for i in range(20_000)])
    counts = np.bincount(draws, minlength=32)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_trajectory_reproducible():
    p = ModelParams(n=64, horizon=0.05, **ASYM)
    a = simulate(p, None, None, [0.01, 0.05], seed=5, stream=1, mode="sampling", record_configs=True)
    b = simulate(p, None, None, [0.01, 0.05], seed=5, stream=1, mode="sampling", record_configs=True)
    np.testing.assert_array_equal(a.configs, b.configs)
    assert a.counters == b.counters


def test_counters_and_particle_audit():
    p = ModelParams(n=64, **ASYM)
    sim = Simulation(p, seed=2, mode="sampling")
    start = sim.configuration().particle_count
    trace = sim.advance([0.1])
    c = trace.counters
    assert c["accepted"] <= c["proposed"]
    assert c["accepted"] == c["bulk"] + c["create"] + c["destroy"]
    assert trace.final.particle_count - start == c["create"] - c["destroy"]


def test_bulk_acceptance_band():
    p = ModelParams(n=256, gamma=1.5)
    trace = simulate(p, None, None, [0.05], seed=1, mode="sampling")
    c = trace.counters
    k = kernel_build(p)
    bulk_share = k.class_weight[: k.n_bulk_classes].sum() / k.envelope_total
    rate = c["bulk"] / (bulk_share * c["proposed"])
    assert 0.1 < rate < 0.5


def test_modes_share_the_path():
    p = ModelParams(n=48, **ASYM)
    obs, _ = build_observables({"G": dirneu_poly()}, p)
    grid = [0.02, 0.04]
    d = simulate(p, None, obs, grid, seed=9, mode="dynkin", record_configs=True)
    s = simulate(p, None, obs, grid, seed=9, mode="sampling", record_configs=True)
    np.testing.assert_array_equal(d.configs, s.configs)
    assert s.values is None and d.values.shape == (2, obs.m)


def test_incremental_values_match_recomputation():
    p = ModelParams(n=96, **ASYM)
    obs, layout = build_observables({"G": dirneu_poly(), "H": neumann_cos(1)}, p, track_qv=True)
    grid = np.linspace(0.0, 0.05, 6)
    trace = simulate(p, None, obs, grid, seed=4, mode="dynkin", record_configs=True)
    for t in range(grid.size):
        fresh = obs.evaluate(trace.configs[t], p.b)
        np.testing.assert_allclose(trace.values[t], fresh, atol=1e-9)


def test_time_average_occupation_is_b():
    p = ModelParams(n=6, gamma=1.5, b=0.5)
    obs = Observables.empty(6)
    for x in range(1, 6):
        coef = np.zeros(5)
        coef[x - 1] = 1.0
        obs.add_linear(f"eta[{x}]", coef, const=0.0)
    sims = [simulate(p, None, obs, [0.0, 50.0], seed=1, stream=i) for i in range(8)]
    # integrals hold time integrals of eta - b; divide by T for the centred mean.
    means = np.array([s.integrals[-1] / 50.0 for s in sims])
    centred = means.mean(axis=0)
    se = means.std(axis=0, ddof=1) / math.sqrt(len(sims))
    assert np.all(np.abs(centred) <= 4 * se + 1e-3)


def test_thinning_matches_generator_rates():
    """Transition counts of a long n=4 path against pi_i Theta Q_ij T."""
    p = ModelParams(n=4, **ASYM)
    q = exact_generator(p)
    theta = time_scale(4, p.beta, p.gamma)
    pi = product_measure(p)
    dt, T = 2e-4, 300.0
    grid = np.arange(1, int(T / dt) + 1) * dt
    trace = simulate(p, None, None, grid, seed=17, mode="sampling", record_configs=True)
    idx = trace.configs.astype(np.int64) @ (1 << np.arange(3))
    occupancy = np.bincount(idx, minlength=8) / idx.size
    assert np.all(np.abs(occupancy - pi) < 0.02)
    moved = idx[1:] != idx[:-1]
    counts = np.zeros((8, 8))
    np.add.at(counts, (idx[:-1][moved], idx[1:][moved]), 1)
    expected = T * pi[:, None] * theta * q
    np.fill_diagonal(expected, 0.0)
    live = expected > 50
    assert live.sum() >= 12
    z = (counts[live] - expected[live]) / np.sqrt(expected[live])
    assert stats.chi2.sf(float(np.sum(z**2)), live.sum()) > 1e-3
    # Two events inside one grid step show up as a forbidden transition.
    assert counts[expected == 0].sum() < 1e-3 * moved.sum()


def test_stream_rng_independent():
    a = stream_rng(1, 0).random(4)
    b = stream_rng(1, 1).random(4)
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(a, stream_rng(1, 0).random(4))


def test_grid_validation():
    sim = Simulation(ModelParams(n=16, gamma=1.5), seed=0, mode="sampling")
    sim.advance([0.01])
    with pytest.raises(ValueError):
        sim.advance([0.005])
    with pytest.raises(ValueError):
        Simulation(ModelParams(n=16, gamma=1.5), mode="fast")

import math

import numpy as np
import pytest

from longjump.discops import qv_rate, sites
from longjump.engine import simulate
from longjump.errors import BadBoxSize, BadDelta, GridTooCoarse, ModeMismatch
from longjump.exact import product_measure, state_bits
from longjump.experiments import psi_exact_moments, psi_second_moment
from longjump.fields import (
    Y,
    Y_many,
    a_cutoff,
    a_eps,
    a_eps_integrand,
    accumulate_decomposition,
    asym_quadratic,
    box_length,
    box_means,
    box_psi,
    build_observables,
    check_grid,
    dynkin_terms,
    extrapolate_eps,
    ladder,
    psi_integrand,
    psi_values,
    replacement_residual,
    tilde_A,
    tilde_A_eps,
    trapezoid_cumulative,
)
from longjump.params import ModelParams
from longjump.testfn import dirneu_poly, neumann_cos, polynomial

ASYM = dict(gamma=1.5, c_plus=2.0, c_minus=1.0, alpha=1.0, beta=0.5, alpha_a=1.0, beta_a=0.5)


def test_field_examples():
    n = 101
    assert Y(polynomial([1.0]), np.ones(n - 1), 0.5) == pytest.approx(0.5 * math.sqrt(n - 1))
    odd = polynomial([-0.5, 1.0])
    eta = np.array([1, 0, 0, 1, 1, 1, 0, 0, 1], dtype=float)  # reflection symmetric, n = 10
    assert Y(odd, eta, 0.5) == pytest.approx(0.0, abs=1e-15)


def test_field_variance_ensemble():
    p = ModelParams(n=256, gamma=1.5, b=0.3)
    G = neumann_cos(1)
    rng = np.random.default_rng(0)
    configs = (rng.random((4000, 255)) < 0.3).astype(np.int8)
    y = Y_many(G, configs, 0.3)
    target = 0.21 * np.sum(G(sites(256) / 256) ** 2) / 255
    var = y.var(ddof=1)
    se = math.sqrt(np.var((y - y.mean()) ** 2, ddof=1) / y.size)
    assert abs(var - target) <= 4 * se
    del p


def test_asymmetric_pieces_vanish():
    G = dirneu_poly()
    eta = np.random.default_rng(1).integers(0, 2, 31)
    assert asym_quadratic(G, eta, ModelParams(n=32, gamma=1.5, alpha_a=1.0)) == 0.0
    assert dynkin_terms(G, eta, ModelParams(n=32, **ASYM)).linear_asymmetric == 0.0
    assert dynkin_terms(G, eta, ModelParams(n=32, b=0.3, **ASYM)).linear_asymmetric != 0.0


def test_box_psi_two_site_values():
    b = 0.5
    for eta in ([0, 0, 1, 1, 0, 1, 0], [1, 0, 1, 0, 0, 1, 1]):
        box = box_psi(np.array(eta), 2, b)
        first = box.psi_forward[0]
        assert first == pytest.approx(0.25 if eta[0] == eta[1] else -0.25)


def test_box_all_occupied():
    box = box_psi(np.ones(29), 5, 0.3)
    np.testing.assert_allclose(box.forward, 0.7)
    np.testing.assert_allclose(box.backward, 0.7)


def test_box_size_checks():
    with pytest.raises(BadBoxSize):
        box_psi(np.ones(9), 1, 0.5)
    with pytest.raises(BadBoxSize):
        box_psi(np.ones(9), 4, 0.5)
    with pytest.raises(BadBoxSize):
        box_length(0.01, 100)


@pytest.mark.parametrize("L", [2, 3, 4])
@pytest.mark.parametrize("b", [0.5, 0.3])
def test_psi_moments_by_lattice_enumeration(L, b):
    n = 3 * L
    p = ModelParams(n=n, gamma=1.5, b=b)
    bits = state_bits(n)
    nu = product_measure(p)
    psi = psi_values(bits, L, b)
    first, second = nu @ psi, nu @ psi**2
    np.testing.assert_allclose(first, 0.0, atol=1e-15)
    np.testing.assert_allclose(second, psi_second_moment(L, b), rtol=1e-12)
    assert np.all(second <= 6 / L**2)
    assert psi_exact_moments(L, b) == pytest.approx((0.0, psi_second_moment(L, b)), abs=1e-15)


def test_psi_second_moment_two_sites():
    assert psi_second_moment(2, 0.5) == pytest.approx(1 / 16)


def test_smoothed_field_all_occupied():
    n, L = 40, 8
    eta = np.ones((1, n - 1), dtype=np.int8)
    avg = box_means(eta, L, 0.5)
    np.testing.assert_allclose(n / math.sqrt(n - 1) * avg, n / math.sqrt(n - 1) * 0.5)
    assert a_eps_integrand(eta, polynomial([2.0]), L, 0.5)[0] == 0.0


def test_replacement_identity_random_configs():
    rng = np.random.default_rng(4)
    n, b = 200, 0.5
    G = dirneu_poly()
    times = np.linspace(0, 0.01, 9)
    configs = (rng.random((times.size, n - 1)) < b).astype(np.int8)
    for L in (10, 20, 50):
        a_series = trapezoid_cumulative(times, a_eps_integrand(configs, G, L, b))
        tilde = trapezoid_cumulative(times, psi_integrand(configs, G, L, b))
        res = replacement_residual(times, a_series, tilde, G, L, n, b)
        assert np.max(np.abs(res)) < 1e-9


def test_a_eps_series_requires_snapshots():
    p = ModelParams(n=64, **ASYM)
    trace = simulate(p, None, None, [0.0, 0.001], seed=0, mode="sampling")
    with pytest.raises(ModeMismatch):
        a_eps(trace, dirneu_poly(), 0.1, p)
    with pytest.raises(ModeMismatch):
        accumulate_decomposition(trace, build_observables({"G": dirneu_poly()}, p)[1], "G")


def test_a_eps_from_trace_and_grid_check():
    p = ModelParams(n=128, **ASYM)
    fine = np.linspace(0, 2e-4, 11)
    trace = simulate(p, None, None, fine, seed=3, mode="sampling", record_configs=True)
    G = dirneu_poly()
    series = a_eps(trace, G, 0.25, p)
    assert series.shape == fine.shape and series[0] == 0.0
    tilde = tilde_A_eps(trace, G, 0.25, p)
    res = replacement_residual(fine, series, tilde, G, 32, 128, p.b)
    assert np.max(np.abs(res)) < 1e-9
    assert tilde_A(trace, G, 0.5, p).shape == fine.shape
    with pytest.raises(GridTooCoarse):
        check_grid(np.array([0.0, 1.0]), p, 0.05)


def test_extrapolation_recovers_intercept():
    eps = [0.1, 0.05, 0.025]
    x = np.asarray(eps) ** 0.4
    series = (2.0 + 3.0 * x)[:, None] * np.ones((1, 4))
    np.testing.assert_allclose(extrapolate_eps(series, eps, 1.8), 2.0)


def test_a_band_covers_tail():
    p = ModelParams(n=4096, **ASYM)
    L = a_cutoff(p)
    z = np.arange(1, 4095, dtype=float) ** -2.5
    assert z[L:].sum() < 1e-4 * z.sum()
    assert z[L - 1:].sum() >= 1e-4 * z.sum()


def test_ladder_values():
    lad = ladder(1.5, 0.25)
    assert lad.delta_hat == pytest.approx(0.0625, abs=1e-15)
    assert lad.lambdas[1] == pytest.approx(0.175, abs=1e-15)
    assert lad.N == 9
    assert lad.limit == pytest.approx(0.875, abs=1e-15)
    assert np.all(np.diff(lad.lambdas) > 0) and lad.lambdas.max() < 0.875
    assert 1 - 0.25 < lad.lambdas[-1] < (2 - 0.25) / 2
    assert lad.box_sizes(1024)[0] == 1


def test_ladder_closed_form():
    g, d = 1.7, 0.3
    lad = ladder(g, d)
    dh = (2 - g) * d / 2
    j = np.arange(lad.N + 1)
    closed = (2 - g - dh) / (2 - g) * (1 - ((2 * g - 1) / (g + 1)) ** j)
    np.testing.assert_allclose(lad.lambdas, closed, atol=1e-14)


@pytest.mark.parametrize("gamma,delta", [(1.0, 0.25), (1.5, 0.0), (1.5, 1.0), (1.5, 0.9)])
def test_ladder_rejects(gamma, delta):
    with pytest.raises(BadDelta):
        ladder(gamma, delta, r_a=1.2 if delta == 0.9 else None)


def test_decomposition_martingale_small_lattice():
    p = ModelParams(n=16, horizon=0.5, **ASYM)
    G = dirneu_poly()
    obs, layout = build_observables({"G": G}, p, track_qv=True)
    grid = np.linspace(0, 0.5, 11)
    m_end, m_sq, qv_end, jumps = [], [], [], []
    for i in range(300):
        trace = simulate(p, None, obs, grid, seed=8, stream=i)
        d = accumulate_decomposition(trace, layout, "G")
        np.testing.assert_allclose(d.Y - d.Y[0] - d.I - d.E + d.A, d.M, atol=1e-12)
        m_end.append(d.M[-1])
        m_sq.append(d.M[-1] ** 2)
        qv_end.append(d.qv_pred[-1])
        jumps.append(d.qv_realized[-1])
    m_end, m_sq, qv_end, jumps = map(np.asarray, (m_end, m_sq, qv_end, jumps))
    se = lambda v: v.std(ddof=1) / math.sqrt(v.size)  # noqa: E731
    assert abs(m_end.mean()) <= 4 * se(m_end)
    assert abs(m_sq.mean() - qv_end.mean()) <= 4 * se(m_sq - qv_end)
    assert abs(jumps.mean() - qv_rate(G, p) * 0.5) <= 4 * se(jumps)
    assert abs(qv_end.mean() - qv_rate(G, p) * 0.5) <= 4 * se(qv_end)

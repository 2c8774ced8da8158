import numpy as np
import pytest
from mpmath import zeta

from longjump.discops import (
    K_n,
    K_n_all,
    boundary_rates,
    check_sweep_space,
    convergence_sweep,
    disc_ops,
    qv_coeffs,
    qv_rate,
    sites,
    write_sweep_csv,
)
from longjump.errors import SpaceMismatch
from longjump.fracops import carre_P
from longjump.params import ModelParams
from longjump.regime import time_scale
from longjump.testfn import dirneu_poly, neumann_cos, polynomial

IDENTITY = polynomial([0.0, 1.0])


def test_K_n_hand_sums():
    p = ModelParams(n=4, gamma=1.0)
    # x=1: (2/4-1/4)/1^2 + (3/4-1/4)/2^2 = 0.25 + 0.125
    assert K_n(IDENTITY, 1, p) == pytest.approx(0.375, rel=1e-15)
    assert K_n(IDENTITY, 2, p) == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(K_n_all(IDENTITY, p), [0.375, 0.0, -0.375], atol=1e-15)


def test_K_n_annihilates_constants_and_is_reflection_symmetric(rng):
    p = ModelParams(n=40, gamma=1.3)
    assert np.max(np.abs(K_n_all(polynomial([2.5]), p))) < 1e-12
    coeffs = rng.normal(size=5)
    G = polynomial(coeffs)
    reflected = polynomial(np.polynomial.Polynomial(coeffs)(np.polynomial.Polynomial([1.0, -1.0])).coef)
    np.testing.assert_allclose(K_n_all(G, p), K_n_all(reflected, p)[::-1], atol=1e-11)
    direct = [K_n(G, x, p) for x in sites(40)]
    np.testing.assert_allclose(K_n_all(G, p), direct, atol=1e-11)


def test_boundary_rates_are_hurwitz_tails():
    p = ModelParams(n=10, gamma=1.5, c_plus=1.5, c_minus=0.5)
    r_minus, r_plus = boundary_rates(p)
    for x in (1, 4, 9):
        assert r_minus[x - 1] == pytest.approx(float(zeta(2.5, x)), rel=1e-10)
        assert r_plus[x - 1] == pytest.approx(float(zeta(2.5, 10 - x)), rel=1e-10)


def test_operator_split_by_sign_of_beta():
    G = dirneu_poly()
    r_minus, r_plus = boundary_rates(ModelParams(n=32, gamma=1.5))
    g = G(sites(32) / 32)
    bulk = K_n_all(G, ModelParams(n=32, gamma=1.5))
    pos = disc_ops(G, ModelParams(n=32, gamma=1.5, beta=0.5), with_continuum=False)
    np.testing.assert_allclose(pos.K_ab, bulk)
    np.testing.assert_allclose(pos.R_ab, -(32**-0.5) * (r_minus + r_plus) * g)
    neg = disc_ops(G, ModelParams(n=32, gamma=1.5, beta=-0.5), with_continuum=False)
    np.testing.assert_allclose(neg.K_ab, -(32**0.5) * (r_minus + r_plus) * g)
    np.testing.assert_allclose(neg.R_ab, bulk)


def test_constant_error_coefficient_is_damping():
    p = ModelParams(n=32, gamma=1.5, beta=0.5, alpha=2.0)
    ops = disc_ops(polynomial([1.0]), p)
    r_minus, r_plus = boundary_rates(p)
    theta = time_scale(32, 0.5, 1.5)
    np.testing.assert_allclose(ops.error_coef, -theta * 2.0 * 32**-0.5 * (r_minus + r_plus), rtol=1e-9)


def test_qv_coefficients_by_brute_force():
    p = ModelParams(n=12, gamma=1.4, beta=0.3, c_plus=1.5, c_minus=0.5)
    G = dirneu_poly()
    x = sites(12)
    g = G(x / 12)
    dz = np.abs(x[:, None] - x[None, :]).astype(float)
    s = np.where(dz > 0, 1.0 * np.where(dz > 0, dz, 1) ** -2.4, 0.0)
    theta = time_scale(12, 0.3, 1.4)
    a_hat = theta / 11 * np.sum(s * (g[:, None] - g[None, :]) ** 2)
    r_minus, r_plus = boundary_rates(p)
    b_val = theta / (12**0.3 * 11) * np.sum((r_minus + r_plus) * g * g)
    assert qv_coeffs(G, p) == pytest.approx((a_hat, b_val), rel=1e-12)
    assert qv_rate(G, p) == pytest.approx(0.25 * (a_hat + 2 * b_val), rel=1e-12)
    assert qv_coeffs(polynomial([3.0]), p)[0] == 0.0


def test_qv_coefficients_approach_limit():
    G = dirneu_poly()
    gaps = []
    for n in (256, 512, 1024, 2048, 4096):
        p = ModelParams(n=n, gamma=1.5, beta=0.5)
        a_hat, b_val = qv_coeffs(G, p)
        gaps.append(abs(a_hat + b_val - carre_P(G, p)))
    assert np.all(np.diff(gaps) < 0)
    assert gaps[-1] / carre_P(G, ModelParams(n=4096, gamma=1.5, beta=0.5)) < 0.05


def test_boundary_coefficient_vanishes_when_beta_exceeds_gamma_minus_one():
    G = neumann_cos(1)
    bs = [qv_coeffs(G, ModelParams(n=n, gamma=1.2, beta=0.6))[1] for n in (256, 1024, 4096)]
    assert bs[0] > bs[1] > bs[2]


def test_sweep_preconditions():
    with pytest.raises(SpaceMismatch):
        check_sweep_space(IDENTITY, ModelParams(n=64, gamma=1.6, beta=0.5))
    check_sweep_space(neumann_cos(1), ModelParams(n=64, gamma=1.6, beta=1.2))


def test_sweep_rows_and_csv(tmp_path):
    rows = convergence_sweep(dirneu_poly(), ModelParams(n=64, gamma=1.2, beta=0.5), [64, 128, 256])
    assert [r.n for r in rows] == [64, 128, 256]
    assert rows[0].e_total > rows[1].e_total > rows[2].e_total
    for r in rows:
        assert r.e_boundary_strip <= r.e_total
    text = write_sweep_csv(rows, tmp_path / "s.csv").read_text().splitlines()
    assert text[0] == "n,e_total,e_K,e_R,e_boundary_strip"
    assert len(text) == 4

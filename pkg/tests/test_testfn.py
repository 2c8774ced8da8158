import numpy as np
import pytest

from longjump.errors import OrderUnsupported
from longjump.regime import Space
from longjump.testfn import (
    bump,
    dirichlet_poly,
    dirneu_poly,
    from_spec,
    neumann_cos,
    one_sided_limit,
    polynomial,
    taylor_bound_holds,
    verify_membership,
)

# Eighth-order central difference weights for the first derivative.
FD_OFFSETS = np.array([-4, -3, -2, -1, 1, 2, 3, 4])
FD_WEIGHTS = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 4 / 5, -1 / 5, 4 / 105, -1 / 280])


def test_point_values():
    assert float(dirneu_poly()(0.5)) == pytest.approx(0.0625)
    assert float(dirichlet_poly()(0.25)) == pytest.approx(0.1875)
    assert float(neumann_cos(1)(0.0)) == pytest.approx(1.0)


def test_neumann_cos_derivative_vanishes_at_ends():
    G = neumann_cos(1)
    assert float(G.eval(0.0, 1)) == pytest.approx(0.0, abs=1e-15)
    assert float(G.eval(1.0, 1)) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("G", [dirneu_poly(), dirichlet_poly(1, 2), neumann_cos(2), bump(), polynomial([1, -2, 3])])
@pytest.mark.parametrize("k", [0, 1, 2])
def test_derivatives_match_finite_differences(G, k, rng):
    u = rng.uniform(0.2, 0.8, size=100)
    h = 1e-3
    fd = sum(w * G.eval(u + o * h, k) for o, w in zip(FD_OFFSETS, FD_WEIGHTS)) / h
    exact = G.eval(u, k + 1)
    scale = max(np.max(np.abs(exact)), 1.0)
    assert np.max(np.abs(fd - exact)) / scale < 1e-8


def test_bump_limits_vanish():
    G = bump()
    for k in range(6):
        assert abs(float(G.eval(1e-3, k))) < 1e-10
        assert abs(one_sided_limit(G, k, 0)) < 1e-10


def test_membership_examples():
    D = dirichlet_poly()
    assert verify_membership(D, Space.S_DIR).passed
    report = verify_membership(D, Space.S_NEU)
    assert not report.passed
    assert any(k == 1 and abs(v - 1.0) < 1e-6 for _, k, v in report.witnesses)
    assert verify_membership(bump(), Space.S, d_max=6).passed
    assert verify_membership(dirneu_poly(), Space.S_DIRNEU).passed
    assert not verify_membership(polynomial([0, 1]), Space.S_DIR).passed


def test_taylor_bound_order_two():
    assert taylor_bound_holds(dirneu_poly(), 2)


def test_order_limit():
    with pytest.raises(OrderUnsupported):
        bump().eval(0.5, 13)


def test_from_spec_strings():
    assert float(from_spec("dirneu_poly")(0.5)) == pytest.approx(0.0625)
    assert float(from_spec("neumann_cos:2")(0.5)) == pytest.approx(-1.0)
    assert float(from_spec("dirichlet_poly:1,2")(0.5)) == pytest.approx(0.125)
    assert float(from_spec("polynomial:0,1")(0.3)) == pytest.approx(0.3)
    assert float(from_spec({"family": "dirneu_poly", "args": [2, 3]})(0.5)) == pytest.approx(0.03125)
    with pytest.raises(ValueError):
        from_spec("nope")

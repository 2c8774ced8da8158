"""Lattice operators acting on test functions, the quadratic-variation
coefficient sums, and discrete-to-continuum convergence diagnostics."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import SpaceMismatch
from .fracops import DEFAULT_SPEC, QuadratureSpec, boundary_integrable, op_L_ab_grid
from .kernel import DEFAULT_TOL, power_tail
from .params import ModelParams
from .regime import Space, _lt, time_scale
from .testfn import TestFunction, verify_membership


def sites(n: int) -> np.ndarray:
    """Lattice sites 1..n-1."""
    return np.arange(1, n)


def _symmetric_weights(params: ModelParams) -> np.ndarray:
    """s(z) for z = -(n-2)..(n-2), with s(0) = 0."""
    n = params.n
    z = np.abs(np.arange(-(n - 2), n - 1, dtype=float))
    out = np.zeros_like(z)
    nz = z > 0
    out[nz] = 0.5 * (params.c_plus + params.c_minus) * z[nz] ** (-params.gamma - 1.0)
    return out


def _toeplitz_apply(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """out[x] = sum_y weights[y - x] values[y] on Lambda_n for an even weight vector."""
    m = values.size
    return np.convolve(values, weights, mode="full")[m - 1 : 2 * m - 1]


def K_n_all(G: TestFunction, params: ModelParams) -> np.ndarray:
    """K_n G at every site: sum_{y != x} s(y - x) [G(y/n) - G(x/n)]."""
    n = params.n
    g = np.asarray(G(sites(n) / n), dtype=float)
    w = _symmetric_weights(params)
    return _toeplitz_apply(g, w) - g * _toeplitz_apply(np.ones_like(g), w)


def K_n(G: TestFunction, x: int, params: ModelParams) -> float:
    """K_n G at a single site, by direct summation."""
    n = params.n
    if not 1 <= x <= n - 1:
        raise ValueError(f"x must lie in 1..{n - 1}")
    y = sites(n)
    y = y[y != x]
    half_sum = 0.5 * (params.c_plus + params.c_minus)
    diff = np.asarray(G(y / n), dtype=float) - float(G(x / n))
    return float(half_sum * np.sum(diff * np.abs(y - x).astype(float) ** (-params.gamma - 1.0)))


def boundary_rates(params: ModelParams, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, np.ndarray]:
    """(r_n^-(x/n), r_n^+(x/n)) at the sites, as exact tail sums of s."""
    n = params.n
    t = power_tail(params.gamma + 1.0, n, tol)
    half_sum = 0.5 * (params.c_plus + params.c_minus)
    x = sites(n)
    return half_sum * t[x], half_sum * t[n - x]


@dataclass(frozen=True)
class DiscreteOps:
    """Per-site arrays (index 0 is site 1)."""

    K_ab: np.ndarray
    R_ab: np.ndarray
    L_cont: np.ndarray  # continuum drift operator at x/n
    error_coef: np.ndarray  # Theta (K_ab + R_ab) G - L G
    asym_linear: np.ndarray  # coefficient of eta-bar(y) from the (1 - 2b) asymmetric piece
    theta: float


def _reaction(G_vals: np.ndarray, params: ModelParams) -> np.ndarray:
    """-alpha n^(-beta) (r_n^- + r_n^+) G; reservoirs damp the field."""
    r_minus, r_plus = boundary_rates(params)
    return -params.alpha_eff * (r_minus + r_plus) * G_vals


def disc_ops(G: TestFunction, params: ModelParams, spec: QuadratureSpec = DEFAULT_SPEC,
             with_continuum: bool = True) -> DiscreteOps:
    """Split the lattice drift into the parts that survive (K) and vanish (R).

    At beta = 0 both the bulk and the reaction pieces belong to K and R is 0.
    """
    n = params.n
    u = sites(n) / n
    g = np.asarray(G(u), dtype=float)
    bulk = K_n_all(G, params)
    reaction = _reaction(g, params)
    beta = params.beta
    K_ab = (bulk if beta >= 0 else 0.0) + (reaction if beta <= 0 else 0.0)
    R_ab = (reaction if beta > 0 else 0.0) + (bulk if beta < 0 else 0.0)
    K_ab = np.broadcast_to(K_ab, g.shape).astype(float)
    R_ab = np.broadcast_to(R_ab, g.shape).astype(float)
    theta = time_scale(n, beta, params.gamma)
    L_cont = op_L_ab_grid(G, u, params, spec) if with_continuum else np.full_like(g, np.nan)
    return DiscreteOps(
        K_ab=K_ab,
        R_ab=R_ab,
        L_cont=L_cont,
        error_coef=theta * (K_ab + R_ab) - L_cont,
        asym_linear=asym_linear_coef(G, params),
        theta=theta,
    )


def asym_linear_coef(G: TestFunction, params: ModelParams) -> np.ndarray:
    """-(1 - 2b) Theta alpha_a n^(-beta_a) sum_x G(x/n) a(y - x), per site y.

    Zero when b = 1/2 or c+ = c-.
    """
    n = params.n
    if params.b == 0.5 or not params.asymmetric or params.alpha_a == 0:
        return np.zeros(n - 1)
    g = np.asarray(G(sites(n) / n), dtype=float)
    z = np.arange(-(n - 2), n - 1, dtype=float)
    a = np.zeros_like(z)
    nz = z != 0
    a[nz] = 0.5 * (params.c_plus - params.c_minus) * np.sign(z[nz]) * np.abs(z[nz]) ** (-params.gamma - 1.0)
    # sum_x g[x] a(y - x) is a plain convolution of g with a.
    m = g.size
    conv = np.convolve(g, a, mode="full")[m - 1 : 2 * m - 1]
    theta = time_scale(n, params.beta, params.gamma)
    return -(1.0 - 2.0 * params.b) * theta * params.alpha_a_eff * conv


def qv_coeffs(G: TestFunction, params: ModelParams) -> tuple[float, float]:
    """(Ahat, B): Ahat = Theta/(n-1) sum over ordered pairs s(y-x) [G(y)-G(x)]^2,
    B = Theta/(n^beta (n-1)) sum_x (r_n^- + r_n^+) G^2."""
    n = params.n
    g = np.asarray(G(sites(n) / n), dtype=float)
    w = _symmetric_weights(params)
    ones = np.ones_like(g)
    # sum_{x,y} s (g_y - g_x)^2 = 2 sum_x g_x^2 S_x - 2 sum_x g_x (s * g)_x
    row = _toeplitz_apply(ones, w)
    quad = 2.0 * float(np.dot(g * g, row) - np.dot(g, _toeplitz_apply(g, w)))
    theta = time_scale(n, params.beta, params.gamma)
    r_minus, r_plus = boundary_rates(params)
    a_hat = theta / (n - 1) * max(quad, 0.0)
    b_val = theta / (float(n) ** params.beta * (n - 1)) * float(np.dot(r_minus + r_plus, g * g))
    return a_hat, b_val


def qv_rate(G: TestFunction, params: ModelParams) -> float:
    """Stationary expected quadratic-variation rate chi(b) (Ahat + 2 alpha B)."""
    a_hat, b_val = qv_coeffs(G, params)
    return params.b * (1.0 - params.b) * (a_hat + 2.0 * params.alpha * b_val)


def check_sweep_space(G: TestFunction, params: ModelParams) -> None:
    """Raise SpaceMismatch unless G meets the convergence preconditions."""
    if G.max_order < 2:
        raise SpaceMismatch(f"{G!r} must be at least twice differentiable")
    if params.beta >= 0 and not _lt(params.gamma, 1.5):
        if not verify_membership(G, Space.S_NEU).passed:
            raise SpaceMismatch(f"gamma={params.gamma} >= 3/2 requires G' to vanish at both ends")
    # The reaction term has mean-square size n^(2 gamma - 2 beta - 1) near the
    # boundary unless G vanishes there fast enough.
    reaction_fades = params.beta > 0 and _lt(params.gamma - 0.5, params.beta)
    if not reaction_fades and not boundary_integrable(G.vanishing_order, params.gamma, power=2):
        raise SpaceMismatch(
            f"reaction term needs 2 gamma < 2d + 1 or beta > gamma - 1/2; "
            f"G vanishes to order {G.vanishing_order}"
        )


@dataclass(frozen=True)
class SweepRow:
    n: int
    e_total: float
    e_K: float
    e_R: float
    e_boundary_strip: float


def convergence_sweep(G: TestFunction, params: ModelParams, n_list: Sequence[int],
                      strip: float = 0.05, spec: QuadratureSpec = DEFAULT_SPEC) -> list[SweepRow]:
    """Mean-square error e_n of Theta (K_ab + R_ab) G against the continuum
    operator, split into its K and R parts and the share from sites within
    ``strip`` of either boundary."""
    check_sweep_space(G, params)
    rows = []
    for n in n_list:
        p = params.with_(n=int(n))
        ops = disc_ops(G, p, spec)
        err = ops.error_coef
        u = sites(p.n) / p.n
        near = np.minimum(u, 1.0 - u) < strip
        m = p.n - 1
        rows.append(SweepRow(
            n=p.n,
            e_total=float(np.sum(err**2) / m),
            e_K=float(np.sum((ops.theta * ops.K_ab - ops.L_cont) ** 2) / m),
            e_R=float(np.sum((ops.theta * ops.R_ab) ** 2) / m),
            e_boundary_strip=float(np.sum(err[near] ** 2) / m),
        ))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "e_total", "e_K", "e_R", "e_boundary_strip"])
        for r in rows:
            writer.writerow([r.n, repr(r.e_total), repr(r.e_K), repr(r.e_R), repr(r.e_boundary_strip)])
    return path

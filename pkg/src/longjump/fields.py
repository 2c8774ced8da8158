"""Field-level functionals: the density fluctuation field, its Dynkin
decomposition, box averages, the epsilon-smoothed quadratic field and the
multiscale exponent ladder."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .discops import DiscreteOps, K_n_all, boundary_rates, disc_ops, sites
from .engine import FieldTrace, Observables
from .errors import BadBoxSize, BadDelta, GridTooCoarse, ModeMismatch
from .fracops import DEFAULT_SPEC, QuadratureSpec
from .params import ModelParams
from .regime import asym_exponent, chi, time_scale
from .testfn import TestFunction

# Neglected tail of |a| relative to its total when truncating the quadratic piece.
A_TAIL_REL = 1e-4


def Y(G: TestFunction, occupancy: np.ndarray, b: float) -> float:
    """(n-1)^(-1/2) sum_x G(x/n) (eta(x) - b)."""
    occ = np.asarray(occupancy, dtype=float)
    n = occ.size + 1
    return float(np.dot(G(sites(n) / n), occ - b) / math.sqrt(n - 1))


def Y_many(G: TestFunction, configs: np.ndarray, b: float) -> np.ndarray:
    """Y for each row of a (snapshots, n-1) occupancy array."""
    n = configs.shape[1] + 1
    return (configs - b) @ np.asarray(G(sites(n) / n), dtype=float) / math.sqrt(n - 1)


def a_cutoff(params: ModelParams, rel: float = A_TAIL_REL) -> int:
    """Smallest band L with sum_{|z| > L} |a(z)| < rel * sum |a(z)|, capped at n-2."""
    n = params.n
    z = np.arange(1, n - 1, dtype=float)
    w = z ** (-params.gamma - 1.0)
    # The infinite-lattice tail beyond n-2 also counts toward the total.
    tail = np.cumsum(w[::-1])[::-1]
    total = tail[0]
    ok = np.flatnonzero(np.append(tail[1:], 0.0) < rel * total)
    return int(min(ok[0] + 1, n - 2)) if ok.size else n - 2


def _signed_table(n: int, fn) -> np.ndarray:
    """Values fn(z) at offsets z = -n..n stored at index z + n (z = 0 gives 0)."""
    z = np.arange(-n, n + 1, dtype=float)
    out = np.zeros_like(z)
    nz = z != 0
    out[nz] = fn(z[nz])
    return out


@dataclass(frozen=True)
class DynkinTerms:
    """Instantaneous integrand pieces of Theta L_n Y(G) at one configuration."""

    linear_symmetric: float
    linear_boundary: float
    linear_asymmetric: float
    quadratic_asymmetric: float

    @property
    def total(self) -> float:
        return self.linear_symmetric + self.linear_boundary + self.linear_asymmetric + self.quadratic_asymmetric


def asym_quadratic_scale(params: ModelParams) -> float:
    """alpha_a n^(r_a) / sqrt(n - 1), the prefactor of the A-term integrand."""
    r_a = asym_exponent(params.gamma, params.beta, params.beta_a)
    return params.alpha_a * params.n**r_a / math.sqrt(params.n - 1)


def asym_quadratic(G: TestFunction, occupancy: np.ndarray, params: ModelParams,
                   band: int | None = None) -> float:
    """A-term integrand alpha_a n^r_a / sqrt(n-1) sum_{x != y} [G(y)-G(x)] a(y-x) etabar(x) etabar(y)."""
    if not params.asymmetric or params.alpha_a == 0:
        return 0.0
    n = params.n
    x = sites(n)
    g = np.asarray(G(x / n), dtype=float)
    e = np.asarray(occupancy, dtype=float) - params.b
    dz = x[None, :] - x[:, None]
    a = np.zeros(dz.shape)
    mask = dz != 0
    if band is not None:
        mask &= np.abs(dz) <= band
    half_diff = 0.5 * (params.c_plus - params.c_minus)
    a[mask] = half_diff * np.sign(dz[mask]) * np.abs(dz[mask]) ** (-params.gamma - 1.0)
    w = (g[None, :] - g[:, None]) * a
    return asym_quadratic_scale(params) * float(e @ w @ e)


def dynkin_terms(G: TestFunction, occupancy: np.ndarray, params: ModelParams,
                 ops: DiscreteOps | None = None) -> DynkinTerms:
    """Split Theta L_n Y(G) into its linear and quadratic parts.

    The quadratic asymmetric piece enters with a minus sign: it equals
    minus the A-term integrand.
    """
    n = params.n
    e = np.asarray(occupancy, dtype=float) - params.b
    ops = ops or disc_ops(G, params, with_continuum=False)
    g = np.asarray(G(sites(n) / n), dtype=float)
    r_minus, r_plus = boundary_rates(params)
    reaction = -params.alpha_eff * (r_minus + r_plus) * g
    theta = time_scale(n, params.beta, params.gamma)
    root = math.sqrt(n - 1)
    return DynkinTerms(
        linear_symmetric=theta * float(np.dot(K_n_all(G, params), e)) / root,
        linear_boundary=theta * float(np.dot(reaction, e)) / root,
        linear_asymmetric=float(np.dot(ops.asym_linear, e)) / root,
        quadratic_asymmetric=-asym_quadratic(G, occupancy, params),
    )


def qv_integrand_parts(G: TestFunction, params: ModelParams) -> tuple[float, np.ndarray, float]:
    """(const, linear coefficients, quadratic scale) of the carre du champ of Y(G).

    Gamma(eta) = const + sum_x lin(x) etabar(x)
                 + scale sum_{x != y} [G(y)-G(x)]^2 s(y-x) etabar(x) etabar(y).
    """
    n = params.n
    x = sites(n)
    g = np.asarray(G(x / n), dtype=float)
    b = params.b
    half_sum = 0.5 * (params.c_plus + params.c_minus)
    half_diff = 0.5 * (params.c_plus - params.c_minus)
    dz = (x[None, :] - x[:, None]).astype(float)
    off = dz != 0
    absz = np.where(off, np.abs(dz), 1.0)
    sq = (g[None, :] - g[:, None]) ** 2
    v = np.where(off, sq * half_sum * absz ** (-params.gamma - 1.0), 0.0)
    u = np.where(off, sq * half_diff * np.sign(dz) * absz ** (-params.gamma - 1.0), 0.0)
    r_minus, r_plus = boundary_rates(params)
    r_sum = r_minus + r_plus
    ratio = 0.0 if params.c_plus + params.c_minus == 0 else half_diff / half_sum
    d = ratio * (r_minus - r_plus)  # sum_{y in Lambda} a(y - x)
    a_eff, s_eff = params.alpha_a_eff, params.alpha_eff
    theta = time_scale(n, params.beta, params.gamma)
    pre = theta / (n - 1)
    const = chi(b) * v.sum() + 2.0 * chi(b) * s_eff * float(np.dot(g * g, r_sum))
    lin = (1.0 - 2.0 * b) * v.sum(axis=1) + a_eff * u.sum(axis=1) \
        + s_eff * (1.0 - 2.0 * b) * g * g * r_sum - a_eff * g * g * d
    return pre * const, pre * lin, -pre


def qv_integrand(G: TestFunction, occupancy: np.ndarray, params: ModelParams) -> float:
    """Carre du champ Theta [L_n Y^2 - 2 Y L_n Y] at one configuration."""
    const, lin, scale = qv_integrand_parts(G, params)
    n = params.n
    x = sites(n)
    g = np.asarray(G(x / n), dtype=float)
    e = np.asarray(occupancy, dtype=float) - params.b
    dz = np.abs(x[None, :] - x[:, None]).astype(float)
    s = np.where(dz > 0, 0.5 * (params.c_plus + params.c_minus) * np.where(dz > 0, dz, 1.0) ** (-params.gamma - 1.0), 0.0)
    v = (g[None, :] - g[:, None]) ** 2 * s
    return const + float(np.dot(lin, e)) + scale * float(e @ v @ e)


@dataclass(frozen=True)
class FieldLayout:
    """Observable indices per test function label."""

    labels: list[str]
    index: dict[str, dict[str, int]]
    a_band: int | None


def build_observables(tests: dict[str, TestFunction], params: ModelParams,
                      track_asymmetric: bool = True, track_qv: bool = False,
                      a_rel: float = A_TAIL_REL, spec: QuadratureSpec = DEFAULT_SPEC,
                      ops: dict[str, DiscreteOps] | None = None) -> tuple[Observables, FieldLayout]:
    """Register Y and the integrands of I, E, A (and optionally the QV
    prediction) for each test function."""
    n = params.n
    root = math.sqrt(n - 1)
    obs = Observables.empty(n)
    index: dict[str, dict[str, int]] = {}
    asym = params.asymmetric and params.alpha_a > 0
    band = a_cutoff(params, a_rel) if asym and track_asymmetric else None
    half_diff = 0.5 * (params.c_plus - params.c_minus)
    half_sum = 0.5 * (params.c_plus + params.c_minus)
    a_table = _signed_table(n, lambda z: half_diff * np.sign(z) * np.abs(z) ** (-params.gamma - 1.0))
    s_table = _signed_table(n, lambda z: half_sum * np.abs(z) ** (-params.gamma - 1.0))
    for label, G in tests.items():
        g = np.asarray(G(sites(n) / n), dtype=float)
        d = (ops or {}).get(label) or disc_ops(G, params, spec)
        slots = {
            "Y": obs.add_linear(f"Y[{label}]", g / root, jump_sq=True),
            "I": obs.add_linear(f"I[{label}]", d.L_cont / root),
            "E": obs.add_linear(f"E[{label}]", (d.error_coef + d.asym_linear) / root),
        }
        if band is not None:
            slots["A"] = obs.add_linear(f"A[{label}]", np.zeros(n - 1))
            obs.add_quadratic(slots["A"], g, a_table, 1, band, asym_quadratic_scale(params))
        if track_qv:
            const, lin, scale = qv_integrand_parts(G, params)
            slots["QV"] = obs.add_linear(f"QV[{label}]", lin, const=const)
            obs.add_quadratic(slots["QV"], g, s_table, 2, n - 2, scale)
        index[label] = slots
    return obs, FieldLayout(list(tests), index, band)


@dataclass(frozen=True)
class Decomposition:
    times: np.ndarray
    Y: np.ndarray
    I: np.ndarray
    E: np.ndarray
    A: np.ndarray
    M: np.ndarray
    qv_pred: np.ndarray | None
    qv_realized: np.ndarray


def accumulate_decomposition(trace: FieldTrace, layout: FieldLayout, label: str) -> Decomposition:
    """Series M = Y - Y_0 - I - E + A, with the QV prediction and realized QV."""
    if trace.mode != "dynkin" or trace.values is None:
        raise ModeMismatch("the decomposition needs a dynkin-mode trace")
    slots = layout.index[label]
    y = trace.values[:, slots["Y"]]
    i_int = trace.integrals[:, slots["I"]]
    e_int = trace.integrals[:, slots["E"]]
    a_int = trace.integrals[:, slots["A"]] if "A" in slots else np.zeros_like(y)
    # Counting starts at the first grid time.
    i_int, e_int, a_int = (s - s[0] for s in (i_int, e_int, a_int))
    qv = trace.integrals[:, slots["QV"]] - trace.integrals[0, slots["QV"]] if "QV" in slots else None
    real = trace.jump_sq[:, slots["Y"]] - trace.jump_sq[0, slots["Y"]]
    m = y - y[0] - i_int - e_int + a_int
    return Decomposition(trace.times, y, i_int, e_int, a_int, m, qv, real)


# --- box averages ----------------------------------------------------------

@dataclass(frozen=True)
class BoxAverages:
    """One-sided L-site averages of etabar and the centred squares psi.

    ``forward[x-1]`` for 1 <= x <= n/2 averages sites x..x+L-1;
    ``backward`` for n/2 < x <= n-1 averages sites x-L+1..x.
    """

    L: int
    forward: np.ndarray
    backward: np.ndarray
    psi_forward: np.ndarray
    psi_backward: np.ndarray


def _check_box(L: int, n: int, limit: float = 1.0 / 3.0) -> None:
    if not 2 <= L <= limit * n:
        raise BadBoxSize(f"box size {L} outside [2, {limit:.3g} n] for n={n}")


def box_means(configs: np.ndarray, L: int, b: float) -> np.ndarray:
    """Averages of etabar over the one-sided window at every site (rows = snapshots).

    Sites x <= n/2 look right, the others look left; windows of length
    L <= n/2 never leave the lattice.
    """
    cfg = np.atleast_2d(configs)
    n = cfg.shape[1] + 1
    if L > n // 2:
        raise BadBoxSize(f"box size {L} exceeds n/2 for n={n}")
    csum = np.zeros((cfg.shape[0], n), dtype=np.int64)
    np.cumsum(cfg, axis=1, out=csum[:, 1:])
    half = n // 2
    x = sites(n)
    fw = x[:half]  # window x..x+L-1 -> prefix indices x-1 .. x+L-1
    bw = x[half:]  # window x-L+1..x
    counts = np.empty((cfg.shape[0], n - 1), dtype=np.int64)
    counts[:, :half] = csum[:, fw + L - 1] - csum[:, fw - 1]
    counts[:, half:] = csum[:, bw] - csum[:, bw - L]
    return counts / L - b


def box_psi(occupancy: np.ndarray, L: int, b: float) -> BoxAverages:
    """Exact box averages and psi values at one configuration."""
    occ = np.asarray(occupancy)
    n = occ.size + 1
    _check_box(L, n)
    avg = box_means(occ, L, b)[0]
    psi = L / (L - 1) * (avg**2 - chi(b) / L)
    half = n // 2
    return BoxAverages(L, avg[:half], avg[half:], psi[:half], psi[half:])


def psi_values(configs: np.ndarray, L: int, b: float) -> np.ndarray:
    avg = box_means(configs, L, b)
    return L / (L - 1) * (avg**2 - chi(b) / L)


def _gradient(G: TestFunction, n: int) -> np.ndarray:
    return np.asarray(G.eval(sites(n) / n, 1), dtype=float)


def box_length(eps: float, n: int) -> int:
    L = int(math.floor(eps * n + 1e-9))
    if not 0 < eps < 0.5 or L < 2:
        raise BadBoxSize(f"eps={eps} gives box length {L} for n={n}; need eps in (0, 1/2), eps n >= 2")
    return L


def relaxation_time(params: ModelParams, eps: float) -> float:
    """Decay time of the mode of wavelength 2 eps under the bulk dynamics.

    Uses the symbol c |k|^gamma of the fractional Laplacian on the line with
    k = pi / eps, rescaled by n^gamma / Theta(n).
    """
    g = params.gamma
    symbol = 0.5 * (params.c_plus + params.c_minus) * math.pi / (math.gamma(1.0 + g) * math.sin(math.pi * g / 2.0))
    rate = symbol * (math.pi / eps) ** g
    return params.n**g / time_scale(params.n, params.beta, g) / rate


def check_grid(times: np.ndarray, params: ModelParams, eps: float, fraction: float = 0.5) -> None:
    """Raise GridTooCoarse when the snapshot spacing exceeds ``fraction`` of
    the decay time of the eps-box field."""
    dt = float(np.max(np.diff(times))) if len(times) > 1 else 0.0
    tau = relaxation_time(params, eps)
    if dt > fraction * tau:
        raise GridTooCoarse(f"snapshot spacing {dt:.3g} exceeds {fraction} x decay time {tau:.3g} at eps={eps}")


def a_eps_integrand(configs: np.ndarray, G: TestFunction, L: int, b: float) -> np.ndarray:
    """(1/n) sum_x G'(x/n) (Y * iota)(x)^2 per snapshot, with
    (Y * iota)(x) = n / sqrt(n-1) times the L-box average."""
    n = configs.shape[1] + 1
    avg = box_means(configs, L, b)
    return n / (n - 1) * (avg**2 @ _gradient(G, n))


def psi_integrand(configs: np.ndarray, G: TestFunction, L: int, b: float) -> np.ndarray:
    """sum_x G'(x/n) psi_x^L per snapshot."""
    n = configs.shape[1] + 1
    return psi_values(configs, L, b) @ _gradient(G, n)


def trapezoid_cumulative(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Running trapezoid integral along axis 0 starting from 0."""
    out = np.zeros_like(values, dtype=float)
    dt = np.diff(times)
    out[1:] = np.cumsum(0.5 * (values[1:] + values[:-1]) * dt.reshape((-1,) + (1,) * (values.ndim - 1)), axis=0)
    return out


def a_eps(trace: FieldTrace, G: TestFunction, eps: float, params: ModelParams,
          check: bool = True) -> np.ndarray:
    """A^{n,eps} series on the trace grid (trapezoid in time)."""
    if trace.configs is None:
        raise ModeMismatch("a_eps needs configuration snapshots")
    L = box_length(eps, params.n)
    if check:
        check_grid(trace.times, params, L / params.n)
    return trapezoid_cumulative(trace.times, a_eps_integrand(trace.configs, G, L, params.b))


def tilde_A_eps(trace: FieldTrace, G: TestFunction, eps: float, params: ModelParams) -> np.ndarray:
    """Integral of sum_x G'(x/n) psi^{eps n}_x (no prefactor)."""
    if trace.configs is None:
        raise ModeMismatch("tilde_A_eps needs configuration snapshots")
    L = box_length(eps, params.n)
    return trapezoid_cumulative(trace.times, psi_integrand(trace.configs, G, L, params.b))


def tilde_A(trace: FieldTrace, G: TestFunction, lam: float, params: ModelParams) -> np.ndarray:
    """sqrt(n)/sqrt(n-1) times the integral of sum_x G'(x/n) psi^{K}_x with K = floor(n^lam)."""
    if trace.configs is None:
        raise ModeMismatch("tilde_A needs configuration snapshots")
    n = params.n
    K = int(math.floor(n**lam + 1e-9))
    _check_box(K, n, 0.5)
    series = trapezoid_cumulative(trace.times, psi_integrand(trace.configs, G, K, params.b))
    return math.sqrt(n / (n - 1)) * series


def replacement_residual(times: np.ndarray, a_series: np.ndarray, tilde_series: np.ndarray,
                         G: TestFunction, L: int, n: int, b: float) -> np.ndarray:
    """(eps n - 1)/(eps n - eps) tilde A - A + chi t/(eps n - eps) sum G'(x/n), with eps = L/n.

    Vanishes identically on the lattice.
    """
    eps = L / n
    grad_sum = float(np.sum(_gradient(G, n)))
    denom = eps * n - eps
    return (eps * n - 1.0) / denom * tilde_series - a_series + chi(b) * (times - times[0]) / denom * grad_sum


def extrapolate_eps(series: np.ndarray, eps_list: Sequence[float], gamma: float) -> np.ndarray:
    """Least-squares intercept of A^{eps} ~ A_0 + c eps^((gamma-1)/2), per column.

    ``series`` has shape (len(eps_list), ...).
    """
    x = np.asarray(eps_list, dtype=float) ** ((gamma - 1.0) / 2.0)
    design = np.column_stack([np.ones_like(x), x])
    flat = series.reshape(len(eps_list), -1)
    coef, *_ = np.linalg.lstsq(design, flat, rcond=None)
    return coef[0].reshape(series.shape[1:])


# --- multiscale ladder -------------------------------------------------------

@dataclass(frozen=True)
class Ladder:
    delta: float
    delta_hat: float
    lambdas: np.ndarray  # lambda_0 .. lambda_N
    N: int
    ratio: float
    limit: float

    def box_sizes(self, n: int) -> np.ndarray:
        return np.floor(float(n) ** self.lambdas + 1e-9).astype(np.int64)


def ladder(gamma: float, delta: float, r_a: float | None = None) -> Ladder:
    """Exponents lambda_j with lambda_0 = 0 and
    delta_hat + (gamma + 1) lambda_{j+1} = (2 gamma - 1) lambda_j + 2 - gamma,
    delta_hat = (2 - gamma) delta / 2, stopped at the first N with
    ((2 gamma - 1)/(gamma + 1))^N < delta / (2 - delta)."""
    if not 1.0 < gamma < 2.0:
        raise BadDelta(f"gamma={gamma} outside (1, 2)")
    upper = 1.0 if r_a is None or r_a >= 1.5 else min(1.0, 3.0 - 2.0 * r_a)
    if not 0.0 < delta < upper:
        raise BadDelta(f"delta={delta} outside (0, {upper})")
    delta_hat = (2.0 - gamma) * delta / 2.0
    ratio = (2.0 * gamma - 1.0) / (gamma + 1.0)
    threshold = delta / (2.0 - delta)
    lambdas = [0.0]
    power = 1.0
    while power >= threshold:
        lambdas.append((2.0 * gamma - 1.0) / (gamma + 1.0) * lambdas[-1] + (2.0 - gamma - delta_hat) / (gamma + 1.0))
        power *= ratio
    return Ladder(
        delta=delta,
        delta_hat=delta_hat,
        lambdas=np.asarray(lambdas),
        N=len(lambdas) - 1,
        ratio=ratio,
        limit=1.0 - delta_hat / (2.0 - gamma),
    )

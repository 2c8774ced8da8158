"""Continuum operators on (0, 1): regional fractional Laplacian, boundary
rates, the combined drift operator, the fractional semi-norm, the limiting
quadratic-variation functional and the L^2 mollifier."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import DivergentBoundaryIntegral, QuadratureFailure
from .params import ModelParams
from .regime import chi
from .testfn import FunctionFn, TestFunction, exp_derivatives


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-13
    rel_tol: float = 1e-9
    max_subdivisions: int = 200
    # Panels [0, h_1], [h_1, h_2], ... with h_k = m (k/K)^exponent grade the
    # mesh toward the singular endpoint w = 0.
    singularity_split_exponent: float = 3.0
    panels: int = 4

    def __post_init__(self) -> None:
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 64:
            raise ValueError("max_subdivisions must be >= 64")


DEFAULT_SPEC = QuadratureSpec()

# Below this w the centred second difference is replaced by its Taylor series.
_TAYLOR_SWITCH = 1e-3


def _quad(f: Callable[[float], float], a: float, b: float, spec: QuadratureSpec, **kw) -> float:
    if b <= a:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, err, *rest = integrate.quad(
            f, a, b, epsabs=spec.abs_tol, epsrel=spec.rel_tol, limit=spec.max_subdivisions,
            full_output=1, **kw,
        )
    budget = max(spec.abs_tol, spec.rel_tol * abs(value))
    # quad's own estimate is pessimistic; only fail when it is clearly off.
    if not math.isfinite(value) or err > 1e3 * budget:
        raise QuadratureFailure(f"quadrature on [{a}, {b}] did not converge", err)
    return value


def _second_difference(G: TestFunction, u: float) -> Callable[[float], float]:
    """w -> (G(u+w) + G(u-w) - 2G(u)) / w^2, smooth at w = 0."""
    g0 = float(G(u))
    series = None
    if G.max_order >= 6:
        d2, d4, d6 = (float(G.eval(u, k)) for k in (2, 4, 6))
        series = (d2, d4 / 12.0, d6 / 360.0)

    def f(w: float) -> float:
        if series is not None and w < _TAYLOR_SWITCH:
            return series[0] + w * w * (series[1] + w * w * series[2])
        return (float(G(u + w)) + float(G(u - w)) - 2.0 * g0) / (w * w)

    return f


def _singular_part(G: TestFunction, u: float, m: float, gamma: float, spec: QuadratureSpec) -> float:
    """int_0^m (G(u+w) + G(u-w) - 2G(u)) w^(-1-gamma) dw."""
    if m <= 0:
        return 0.0
    f = _second_difference(G, u)
    k = spec.panels
    edges = [m * (i / k) ** spec.singularity_split_exponent for i in range(k + 1)]
    # The first panel carries the algebraic weight w^(1-gamma) exactly.
    total = _quad(f, 0.0, edges[1], spec, weight="alg", wvar=(1.0 - gamma, 0.0))
    for lo, hi in zip(edges[1:], edges[2:]):
        total += _quad(lambda w: f(w) * w ** (1.0 - gamma), lo, hi, spec)
    return total


def _one_sided(G: TestFunction, u: float, lo: float, hi: float, sign: float, gamma: float,
               spec: QuadratureSpec) -> float:
    """int_lo^hi (G(u + sign w) - G(u)) w^(-1-gamma) dw with w = e^s."""
    if hi <= lo:
        return 0.0
    g0 = float(G(u))

    def f(s: float) -> float:
        w = math.exp(s)
        return (float(G(u + sign * w)) - g0) * w ** (-gamma)

    return _quad(f, math.log(lo), math.log(hi), spec)


def frac_lap(G: TestFunction, u: float, c_sum: float, gamma: float,
             spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Regional fractional Laplacian (c+ + c-)/2 PV int_0^1 (G(v)-G(u))/|v-u|^(1+gamma) dv.

    ``c_sum`` is c+ + c-.  The principal value is split into a symmetric
    part on |v - u| < min(u, 1-u), integrated via the centred second
    difference, and a regular one-sided remainder.
    """
    if not 0.0 < u < 1.0:
        raise ValueError("u must lie in (0, 1)")
    near, far = min(u, 1.0 - u), max(u, 1.0 - u)
    sign = 1.0 if u <= 0.5 else -1.0
    value = _singular_part(G, u, near, gamma, spec) + _one_sided(G, u, near, far, sign, gamma, spec)
    return 0.5 * c_sum * value


def frac_lap_eps(G: TestFunction, u: float, eps: float, c_sum: float, gamma: float,
                 spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Truncated operator: the same integral restricted to |v - u| >= eps."""
    if not 0.0 < u < 1.0 or eps <= 0:
        raise ValueError("need u in (0, 1) and eps > 0")
    near, far = min(u, 1.0 - u), max(u, 1.0 - u)
    sign = 1.0 if u <= 0.5 else -1.0
    value = 0.0
    if eps < near:
        f = _second_difference(G, u)
        value += _quad(lambda w: f(w) * w ** (1.0 - gamma), eps, near, spec)
    value += _one_sided(G, u, max(eps, near), far, sign, gamma, spec)
    return 0.5 * c_sum * value


def r_minus(u, c_sum: float, gamma: float) -> np.ndarray:
    return c_sum / (2.0 * gamma * np.asarray(u, dtype=float) ** gamma)


def r_plus(u, c_sum: float, gamma: float) -> np.ndarray:
    return c_sum / (2.0 * gamma * (1.0 - np.asarray(u, dtype=float)) ** gamma)


def op_L_ab(G: TestFunction, u: float, params: ModelParams,
            spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Drift operator of the limiting equation at ``u``.

    The bulk part (beta >= 0) is the regional fractional Laplacian; the
    reservoir part (beta <= 0) is the damping -alpha (r^- + r^+) G, whose
    sign is fixed by the generator (reservoirs pull the density toward b).
    """
    c_sum = params.c_plus + params.c_minus
    value = 0.0
    if params.beta >= 0:
        value += frac_lap(G, u, c_sum, params.gamma, spec)
    if params.beta <= 0:
        value -= params.alpha * float(r_minus(u, c_sum, params.gamma) + r_plus(u, c_sum, params.gamma)) * float(G(u))
    return value


def op_L_ab_grid(G: TestFunction, us: np.ndarray, params: ModelParams,
                 spec: QuadratureSpec = DEFAULT_SPEC) -> np.ndarray:
    return np.array([op_L_ab(G, float(u), params, spec) for u in us])


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(96)


def _increment_energy(G: TestFunction, w: float) -> float:
    """int_0^(1-w) ((G(u+w) - G(u)) / w)^2 du by Gauss-Legendre."""
    half = 0.5 * (1.0 - w)
    u = half * (_GL_NODES + 1.0)
    if w < 1e-12:
        diff = G.eval(u, 1) if G.max_order >= 1 else np.zeros_like(u)
    else:
        diff = (G(u + w) - G(u)) / w
    return half * float(np.dot(_GL_WEIGHTS, diff * diff))


def _double_integral(G: TestFunction, gamma: float, spec: QuadratureSpec) -> float:
    """int int_(0,1)^2 (G(v) - G(u))^2 / |v - u|^(1+gamma) du dv."""
    return 2.0 * _quad(lambda w: _increment_energy(G, w), 0.0, 1.0, spec,
                       weight="alg", wvar=(1.0 - gamma, 0.0))


def seminorm_sq(G: TestFunction, c_sum: float, gamma: float,
                spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """(c+ + c-)/4 times the double integral of squared increments."""
    return 0.25 * c_sum * _double_integral(G, gamma, spec)


def boundary_integrable(vanishing_order: float, gamma: float, power: int = 1) -> bool:
    """Whether int (r^- + r^+)^power G^2 converges for G vanishing to the given order."""
    return power * gamma < 2.0 * vanishing_order + 1.0


def boundary_integral(G: TestFunction, c_sum: float, gamma: float,
                      spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """int_0^1 (r^-(u) + r^+(u)) G(u)^2 du."""
    if not boundary_integrable(G.vanishing_order, gamma):
        raise DivergentBoundaryIntegral(
            f"int (r- + r+) G^2 diverges: gamma={gamma} with G vanishing to order "
            f"{G.vanishing_order} at the boundary"
        )
    coef = c_sum / (2.0 * gamma)

    # The algebraic weight needs an exponent above -1; for gamma >= 1 one power
    # of u moves into the integrand, which stays bounded because G vanishes.
    shift = 1 if gamma >= 1.0 else 0

    def left(u: float) -> float:
        # G(u)^2 + G(1-u)^2 after folding the right half onto u = 0.
        if shift and u == 0.0:
            return 0.0
        return (float(G(u)) ** 2 + float(G(1.0 - u)) ** 2) / u**shift

    singular = _quad(left, 0.0, 0.5, spec, weight="alg", wvar=(shift - gamma, 0.0))

    def rest(u: float) -> float:
        return (float(G(u)) ** 2 + float(G(1.0 - u)) ** 2) * (1.0 - u) ** (-gamma)

    return coef * (singular + _quad(rest, 0.0, 0.5, spec))


def carre_P(G: TestFunction, params: ModelParams, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Large-n limit of the finite-n coefficient sum Ahat + alpha * B.

    Bulk part (beta >= 0): (c+ + c-)/2 times the double integral.
    Boundary part (beta <= 0): alpha int (r^- + r^+) G^2.
    """
    c_sum = params.c_plus + params.c_minus
    value = 0.0
    if params.beta >= 0:
        value += 0.5 * c_sum * _double_integral(G, params.gamma, spec)
    if params.beta <= 0:
        value += params.alpha * boundary_integral(G, c_sum, params.gamma, spec)
    return value


def qv_rate_limit(G: TestFunction, params: ModelParams, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Large-n limit of the stationary expected quadratic-variation rate:
    2 chi(b) (||G||^2 [beta >= 0] + alpha int (r^- + r^+) G^2 [beta <= 0])."""
    c_sum = params.c_plus + params.c_minus
    value = 0.0
    if params.beta >= 0:
        value += seminorm_sq(G, c_sum, params.gamma, spec)
    if params.beta <= 0:
        value += params.alpha * boundary_integral(G, c_sum, params.gamma, spec)
    return 2.0 * chi(params.b) * value


# --- mollifier -----------------------------------------------------------

def _bump_exponent_derivs(t: np.ndarray, order: int) -> list[np.ndarray]:
    """Derivatives of h(t) = 1/(t^2 - 1) = (1/(t-1) - 1/(t+1)) / 2."""
    out = []
    for i in range(order + 1):
        c = 0.5 * (-1.0) ** i * math.factorial(i)
        out.append(c * ((t - 1.0) ** (-i - 1) - (t + 1.0) ** (-i - 1)))
    return out


def std_bump(t, k: int = 0) -> np.ndarray:
    """k-th derivative of exp(1/(t^2 - 1)) on |t| < 1, zero elsewhere."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    if np.any(inside):
        with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
            vals = exp_derivatives(_bump_exponent_derivs(t[inside], k), k)[k]
        out[inside] = np.nan_to_num(vals, nan=0.0, posinf=0.0, neginf=0.0)
    return out


@lru_cache(maxsize=None)
def bump_mass() -> float:
    """int_{-1}^{1} exp(1/(t^2 - 1)) dt."""
    return integrate.quad(lambda t: float(std_bump(t)[0]), -1.0, 1.0, epsabs=1e-15, epsrel=1e-13)[0]


def mollifier_constant(j: int) -> float:
    """C_phi(j) making int phi_j = 1."""
    return j / bump_mass()


def phi(u, j: int, k: int = 0) -> np.ndarray:
    """phi_j^(k)(u) = C_phi(j) j^k Phi^(k)(j u)."""
    return mollifier_constant(j) * j**k * std_bump(j * np.asarray(u, dtype=float), k)


_GL48_NODES, _GL48_WEIGHTS = np.polynomial.legendre.leggauss(48)


def _gauss(f: Callable[[np.ndarray], np.ndarray], a: float, b: float, pieces: int = 4) -> float:
    """Composite 48-point Gauss-Legendre on [a, b] for vectorized ``f``."""
    if b <= a:
        return 0.0
    edges = np.linspace(a, b, pieces + 1)
    half = 0.5 * np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mids[:, None] + half[:, None] * _GL48_NODES[None, :]).ravel()
    weights = (half[:, None] * _GL48_WEIGHTS[None, :]).ravel()
    return float(np.dot(weights, f(nodes)))


def _smooth_step(x, k: int = 0) -> np.ndarray:
    """Smooth step S(x): 0 for x <= 0, 1 for x >= 1, S(x) = int_{-1}^{2x-1} Phi / mass."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if k > 0:
        return 2.0**k * std_bump(2.0 * x - 1.0, k - 1) / bump_mass()
    out = np.where(x >= 1.0, 1.0, 0.0)
    mid = (x > 0.0) & (x < 1.0)
    if np.any(mid):
        # Map [-1, 2x - 1] onto two 48-point panels for every x at once.
        upper = 2.0 * x[mid] - 1.0
        half = 0.25 * (upper + 1.0)
        total = np.zeros_like(upper)
        for left in (-1.0, None):
            lo = -1.0 + (0.0 if left is not None else 2.0 * half)
            nodes = (lo + half)[:, None] + half[:, None] * _GL48_NODES[None, :]
            total += half * (std_bump(nodes.ravel()).reshape(nodes.shape) @ _GL48_WEIGHTS)
        out[mid] = total / bump_mass()
    return out


def cutoff(u, j: int, k: int = 0) -> np.ndarray:
    """psi_j^(k): 0 outside (1/j, 1-1/j), 1 on [2/j, 1-2/j]."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    left = lambda m: j**m * _smooth_step(j * u - 1.0, m)
    right = lambda m: (-j) ** m * _smooth_step(j * (1.0 - u) - 1.0, m)
    return sum(math.comb(k, i) * left(i) * right(k - i) for i in range(k + 1))


class Mollified(TestFunction):
    """H_j = psi_j (phi_j * A), with A the zero extension of a function on (0, 1)."""

    family = "mollified"
    declared_space = TestFunction.declared_space
    max_order = 8
    vanishing_order = math.inf

    def __init__(self, target: TestFunction, j: int, breakpoints: tuple[float, ...] = ()):
        from .regime import Space

        self.target = target
        self.j = j
        self.breakpoints = tuple(breakpoints) or tuple(getattr(target, "breakpoints", ()))
        self.declared_space = Space.S
        self._cache = None

    def _grid(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Composite Gauss grid on (0, 1) with panels of width <= 1/(4j),
        split at the target's breakpoints; returns nodes, weights, target values."""
        if self._cache is None:
            cuts = sorted({0.0, 1.0, *(p for p in self.breakpoints if 0.0 < p < 1.0)})
            nodes, weights = [], []
            for lo, hi in zip(cuts, cuts[1:]):
                pieces = max(1, math.ceil(4 * self.j * (hi - lo)))
                edges = np.linspace(lo, hi, pieces + 1)
                half = 0.5 * np.diff(edges)
                mids = 0.5 * (edges[:-1] + edges[1:])
                nodes.append((mids[:, None] + half[:, None] * _GL48_NODES[None, :]).ravel())
                weights.append((half[:, None] * _GL48_WEIGHTS[None, :]).ravel())
            v = np.concatenate(nodes)
            self._cache = (v, np.concatenate(weights), np.asarray(self.target(v), dtype=float))
        return self._cache

    def _conv(self, u: np.ndarray, k: int) -> np.ndarray:
        """(phi_j^(k) * A)(u) for an array of points."""
        v, w, values = self._grid()
        weighted = w * values
        out = np.empty_like(u)
        chunk = max(1, 2_000_000 // v.size)
        for start in range(0, u.size, chunk):
            block = u[start:start + chunk]
            kern = phi((block[:, None] - v[None, :]).ravel(), self.j, k).reshape(block.size, v.size)
            out[start:start + chunk] = kern @ weighted
        return out

    def _eval(self, u: np.ndarray, k: int) -> np.ndarray:
        flat = np.atleast_1d(u).astype(float).ravel()
        out = np.zeros_like(flat)
        inside = (flat > 1.0 / self.j) & (flat < 1.0 - 1.0 / self.j)
        x = flat[inside]
        if x.size:
            total = np.zeros_like(x)
            for i in range(k + 1):
                # Cutoff derivatives vanish on the plateau; skip the convolution there.
                c = cutoff(x, self.j, i)
                live = c != 0.0
                if np.any(live):
                    total[live] += math.comb(k, i) * c[live] * self._conv(x[live], k - i)
            out[inside] = total
        return out.reshape(np.shape(u))

    def __repr__(self) -> str:
        return f"<mollified j={self.j} of {self.target!r}>"


def mollify(target: TestFunction | Callable, j: int, breakpoints: tuple[float, ...] = ()) -> tuple[Mollified, float]:
    """Return ``(H_j, ||H_j - target||_L2)``."""
    if j < 4:
        raise ValueError("j must be >= 4")
    if not isinstance(target, TestFunction):
        target = FunctionFn(target, breakpoints=breakpoints)
    H = Mollified(target, j, breakpoints)
    cuts = sorted({0.0, 1.0, 1.0 / j, 2.0 / j, 1.0 - 2.0 / j, 1.0 - 1.0 / j, *H.breakpoints})
    err2 = sum(_gauss(lambda u: (H(u) - target(u)) ** 2, a, b) for a, b in zip(cuts, cuts[1:]))
    return H, math.sqrt(max(err2, 0.0))

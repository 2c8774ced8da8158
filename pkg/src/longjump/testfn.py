"""Closed-form test functions on [0, 1] with exact derivatives, and numerical
membership checks for the boundary-condition spaces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .errors import OrderUnsupported
from .regime import Space

# One-sided limits are extrapolated from these distances to the endpoint.
_LIMIT_STEPS = (1e-3, 1e-4, 1e-5)
_MEMBERSHIP_THRESHOLD = 1e-9


def exp_derivatives(h_derivs: Sequence[np.ndarray], order: int) -> list[np.ndarray]:
    """Derivatives 0..order of exp(h) given h, h', ..., h^(order).

    Uses g^(k+1) = sum_i C(k, i) h^(i+1) g^(k-i).
    """
    g = [np.exp(h_derivs[0])]
    for k in range(order):
        acc = np.zeros_like(g[0])
        for i in range(k + 1):
            acc = acc + math.comb(k, i) * h_derivs[i + 1] * g[k - i]
        g.append(acc)
    return g


class TestFunction:
    """Base class: ``eval(u, k)`` returns the k-th derivative at points ``u``."""

    __test__ = False  # keep pytest from collecting this class

    family: str = "custom"
    declared_space: Space = Space.CINF
    max_order: int = 0
    vanishing_order: float = 0  # number of derivatives vanishing at both ends

    def eval(self, u, k: int = 0) -> np.ndarray:
        if k < 0 or k > self.max_order:
            raise OrderUnsupported(f"{self.family}: derivative order {k} > {self.max_order}")
        return self._eval(np.asarray(u, dtype=float), k)

    def __call__(self, u) -> np.ndarray:
        return self.eval(u, 0)

    def _eval(self, u: np.ndarray, k: int) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"<{self.family}>"


class PolynomialFn(TestFunction):
    """Polynomial with coefficients in increasing degree."""

    family = "polynomial"
    max_order = 64

    def __init__(self, coeffs: Sequence[float], space: Space = Space.CINF,
                 family: str = "polynomial", vanishing_order: int = 0, label: str | None = None):
        self.poly = Polynomial(np.asarray(coeffs, dtype=float))
        self.declared_space = space
        self.family = family
        self.vanishing_order = vanishing_order
        self.label = label or family

    def _eval(self, u: np.ndarray, k: int) -> np.ndarray:
        return self.poly.deriv(k)(u) if k else self.poly(u)

    def __repr__(self) -> str:
        return f"<{self.label}>"


def polynomial(coeffs: Sequence[float]) -> PolynomialFn:
    return PolynomialFn(coeffs)


def _vanishing_poly(p: int, q: int) -> Polynomial:
    return Polynomial([0.0, 1.0]) ** p * Polynomial([1.0, -1.0]) ** q


def dirichlet_poly(p: int = 1, q: int = 1) -> PolynomialFn:
    """u^p (1-u)^q with p, q >= 1."""
    if p < 1 or q < 1:
        raise ValueError("dirichlet_poly needs p, q >= 1")
    return PolynomialFn(_vanishing_poly(p, q).coef, Space.S_DIR, "dirichlet_poly",
                        min(p, q), f"dirichlet_poly({p},{q})")


def dirneu_poly(p: int = 2, q: int = 2) -> PolynomialFn:
    """u^p (1-u)^q with p, q >= 2: both G and G' vanish at the endpoints."""
    if p < 2 or q < 2:
        raise ValueError("dirneu_poly needs p, q >= 2")
    return PolynomialFn(_vanishing_poly(p, q).coef, Space.S_DIRNEU, "dirneu_poly",
                        min(p, q), f"dirneu_poly({p},{q})")


class NeumannCos(TestFunction):
    """cos(k pi u)."""

    family = "neumann_cos"
    declared_space = Space.S_NEU
    max_order = 64

    def __init__(self, k: int = 1):
        if k < 1:
            raise ValueError("neumann_cos needs k >= 1")
        self.k = k

    def _eval(self, u: np.ndarray, k: int) -> np.ndarray:
        w = self.k * math.pi
        return w**k * np.cos(w * u + k * math.pi / 2)

    def __repr__(self) -> str:
        return f"<neumann_cos({self.k})>"


def neumann_cos(k: int = 1) -> NeumannCos:
    return NeumannCos(k)


class Bump(TestFunction):
    """exp(-1/(u(1-u))) on (0, 1), extended by zero."""

    family = "bump"
    declared_space = Space.S
    max_order = 12
    vanishing_order = math.inf

    def _eval(self, u: np.ndarray, k: int) -> np.ndarray:
        shape = np.shape(u)
        u = np.atleast_1d(u).astype(float)
        out = np.zeros_like(u)
        inside = (u > 0.0) & (u < 1.0)
        x = u[inside]
        # h = -1/u - 1/(1-u);  h^(i) = -(-1)^i i!/u^(i+1) - i!/(1-u)^(i+1)
        h = [-1.0 / x - 1.0 / (1.0 - x)]
        for i in range(1, k + 1):
            f = math.factorial(i)
            h.append(-((-1.0) ** i) * f / x ** (i + 1) - f / (1.0 - x) ** (i + 1))
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            vals = exp_derivatives(h, k)[k]
        out[inside] = np.nan_to_num(vals, nan=0.0, posinf=0.0, neginf=0.0)
        return out.reshape(shape)


def bump() -> Bump:
    return Bump()


class FunctionFn(TestFunction):
    """Wraps a plain callable (values only); used for L^2 targets."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], label: str = "custom",
                 breakpoints: Sequence[float] = ()):
        self.fn = fn
        self.family = label
        self.breakpoints = tuple(breakpoints)

    def _eval(self, u: np.ndarray, k: int) -> np.ndarray:
        return np.asarray(self.fn(u), dtype=float) * np.ones_like(u)


_FAMILIES: dict[str, Callable[..., TestFunction]] = {
    "polynomial": polynomial,
    "dirichlet_poly": dirichlet_poly,
    "dirneu_poly": dirneu_poly,
    "neumann_cos": neumann_cos,
    "bump": bump,
}


def from_spec(spec: str | dict) -> TestFunction:
    """Build a family member from ``"dirneu_poly"``, ``"neumann_cos:2"``,
    ``"dirichlet_poly:1,2"``, ``"polynomial:0,1"`` or a dict
    ``{"family": ..., "args": [...]}``."""
    if isinstance(spec, dict):
        family, args = spec["family"], list(spec.get("args", []))
    else:
        family, _, rest = spec.partition(":")
        args = [float(a) if "." in a else int(a) for a in rest.split(",") if a.strip()]
    family = family.strip()
    if family not in _FAMILIES:
        raise ValueError(f"unknown test-function family {family!r}")
    if family == "polynomial":
        return polynomial(args or [0.0, 1.0])
    return _FAMILIES[family](*args)


@dataclass
class MembershipReport:
    space: Space
    passed: bool
    witnesses: list[tuple[str, int, float]] = field(default_factory=list)
    taylor_ok: bool | None = None

    def __bool__(self) -> bool:
        return self.passed


def one_sided_limit(G: TestFunction, k: int, endpoint: int) -> float:
    """Extrapolated limit of G^(k)(u) as u -> endpoint from inside (0, 1)."""
    hs = np.asarray(_LIMIT_STEPS)
    pts = hs if endpoint == 0 else 1.0 - hs
    vals = np.asarray(G.eval(pts, k), dtype=float)
    # Lagrange extrapolation to h = 0.
    total = 0.0
    for i, hi in enumerate(hs):
        weight = 1.0
        for j, hj in enumerate(hs):
            if j != i:
                weight *= hj / (hj - hi)
        total += weight * vals[i]
    return float(total)


def _required_orders(space: Space, d_max: int) -> list[int]:
    return {
        Space.CINF: [],
        Space.S_DIR: [0],
        Space.S_NEU: [1],
        Space.S_DIRNEU: [0, 1],
        Space.S: list(range(d_max + 1)),
    }[space]


def verify_membership(G: TestFunction, space: Space | str, d_max: int = 6,
                      taylor_points: int = 2001) -> MembershipReport:
    """Check the boundary conditions defining ``space`` numerically.

    ``taylor_points`` sets the grid for the Taylor-bound check; lower it for
    test functions that are expensive to evaluate."""
    if d_max < 1:
        raise ValueError("d_max must be >= 1")
    space = Space(space)
    orders = [k for k in _required_orders(space, d_max) if k <= G.max_order]
    witnesses = []
    passed = True
    for k in orders:
        for endpoint in (0, 1):
            lim = one_sided_limit(G, k, endpoint)
            witnesses.append((f"u->{endpoint}", k, lim))
            if not abs(lim) <= _MEMBERSHIP_THRESHOLD:
                passed = False
    taylor_ok = None
    d = 0
    while d in orders:
        d += 1
    if passed and 1 <= d <= G.max_order:
        taylor_ok = taylor_bound_holds(G, d, taylor_points)
        passed = passed and taylor_ok
    return MembershipReport(space, passed, witnesses, taylor_ok)


def taylor_bound_holds(G: TestFunction, d: int, points: int = 2001) -> bool:
    """|G(u)| <= sup|G^(d)| min(u, 1-u)^d / d! on a grid of (0, 1)."""
    u = np.linspace(0.0, 1.0, points)[1:-1]
    sup = float(np.max(np.abs(G.eval(np.linspace(0.0, 1.0, 5 * points), d))))
    dist = np.minimum(u, 1.0 - u)
    bound = sup * dist**d / math.factorial(d)
    return bool(np.all(np.abs(G.eval(u, 0)) <= bound * (1 + 1e-9) + 1e-15))

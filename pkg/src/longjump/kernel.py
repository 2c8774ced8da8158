"""Power-law jump kernel, tail sums, reservoir rates and sampling tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DivergentMoment, ToleranceUnreachable
from .params import ModelParams

DEFAULT_TOL = 1e-10


def power_tail(s: float, x_max: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Return ``T`` with ``T[x] = sum_{y >= x} y**(-s)`` for ``1 <= x <= x_max``.

    The sum is taken explicitly up to ``M = max(10**4, 10 * x_max)`` and the
    remainder from ``M`` on is closed with Euler-Maclaurin through the B4 term.
    The first omitted term bounds the remainder error.  ``T[0]`` is NaN.
    """
    if not s > 1.0 or not math.isfinite(s):
        raise ToleranceUnreachable(f"tail sum of y^-{s} diverges")
    x_max = max(int(x_max), 1)
    m = max(10_000, 10 * x_max)
    # Extended-precision running sums keep the accumulated round-off far below tol.
    y = np.arange(1, m, dtype=np.longdouble)
    terms = y ** np.longdouble(-s)
    head = np.cumsum(terms[::-1])[::-1].astype(float)  # head[x-1] = sum_{x <= y < m}
    em = (
        m ** (1.0 - s) / (s - 1.0)
        + 0.5 * m ** (-s)
        + s * m ** (-s - 1.0) / 12.0
        - s * (s + 1.0) * (s + 2.0) * m ** (-s - 3.0) / 720.0
    )
    em_err = s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) * m ** (-s - 5.0) / 30240.0
    sum_err = float(m * np.finfo(np.longdouble).eps) + np.finfo(float).eps
    out = np.full(x_max + 1, np.nan)
    out[1:] = head[:x_max] + em
    rel_err = em_err / out[x_max] + sum_err
    if not rel_err <= tol:
        raise ToleranceUnreachable(f"tail bracket {rel_err:.3e} exceeds relative tol {tol:.1e}")
    return out


def build_alias(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose alias table: returns ``(prob, alias)`` for sampling ``i`` with
    probability ``weights[i] / weights.sum()``.

    Sampling: draw ``k`` uniform in ``0..K-1`` and ``u`` uniform in ``[0,1)``;
    return ``k`` if ``u < prob[k]`` else ``alias[k]``.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(w < 0) or not w.sum() > 0:
        raise ValueError("weights must be a non-empty, non-negative, non-zero vector")
    k = w.size
    scaled = w * (k / w.sum())
    prob = np.ones(k)
    alias = np.arange(k, dtype=np.int64)
    small = [i for i in range(k) if scaled[i] < 1.0]
    large = [i for i in range(k) if scaled[i] >= 1.0]
    while small and large:
        lo, hi = small.pop(), large.pop()
        prob[lo] = scaled[lo]
        alias[lo] = hi
        scaled[hi] = (scaled[hi] + scaled[lo]) - 1.0
        (small if scaled[hi] < 1.0 else large).append(hi)
    # Leftovers are 1 up to round-off.
    for i in small + large:
        prob[i] = 1.0
        alias[i] = i
    return prob, alias


def alias_probabilities(prob: np.ndarray, alias: np.ndarray) -> np.ndarray:
    """Exact class probabilities encoded by an alias table."""
    k = prob.size
    out = prob / k
    np.add.at(out, alias, (1.0 - prob) / k)
    return out


@dataclass(frozen=True, eq=False)
class JumpKernel:
    """Tabulated kernel for one parameter set.

    Arrays indexed by displacement ``z`` hold values for ``0 <= z <= n`` with
    index 0 unused; arrays indexed by site ``x`` have length ``n + 1`` with
    only ``1..n-1`` meaningful.
    """

    params: ModelParams
    s_tab: np.ndarray  # s(z), z >= 0
    a_tab: np.ndarray  # a(z), z >= 0
    tail_s: np.ndarray  # r_n^-(x/n) = sum_{y>=x} s(y)
    tail_a: np.ndarray  # sum_{y>=x} a(y)
    res_create: np.ndarray
    res_destroy: np.ndarray
    disp: np.ndarray  # bulk displacement of each bulk class
    w_disp: np.ndarray  # w(z) for each bulk class
    class_weight: np.ndarray  # bulk classes then reservoir sites 1..n-1
    alias_prob: np.ndarray
    alias_idx: np.ndarray
    envelope_total: float

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def n_bulk_classes(self) -> int:
        return self.disp.size

    @property
    def r_minus(self) -> np.ndarray:
        """r_n^-(x/n) per site."""
        out = np.zeros(self.n + 1)
        out[1:-1] = self.tail_s[1 : self.n]
        return out

    @property
    def r_plus(self) -> np.ndarray:
        """r_n^+(x/n) = r_n^-((n-x)/n) per site."""
        out = np.zeros(self.n + 1)
        out[1:-1] = self.tail_s[self.n - 1 : 0 : -1]
        return out

    def _signed(self, tab: np.ndarray, z: np.ndarray, odd: bool) -> np.ndarray:
        z = np.asarray(z)
        absz = np.abs(z)
        if np.any(absz > self.n) or np.any(absz == 0):
            raise ValueError("displacement must satisfy 0 < |z| <= n")
        vals = tab[absz]
        return np.where(z < 0, -vals, vals) if odd else vals

    def s(self, z) -> np.ndarray:
        return self._signed(self.s_tab, z, odd=False)

    def a(self, z) -> np.ndarray:
        return self._signed(self.a_tab, z, odd=True)

    def p(self, z) -> np.ndarray:
        return self.s(z) + self.a(z)

    def w(self, z) -> np.ndarray:
        """Bulk rate coefficient s(z) + alpha_a n^-beta_a a(z)."""
        return self.s(z) + self.params.alpha_a_eff * self.a(z)

    def dump_csv(self, path: str | Path) -> Path:
        """Write ``z, p, s, a, w`` for ``0 < |z| <= n - 2``."""
        path = Path(path)
        zs = np.concatenate([-np.arange(self.n - 2, 0, -1), np.arange(1, self.n - 1)])
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["z", "p", "s", "a", "w"])
            if zs.size:
                for row in zip(zs, self.p(zs), self.s(zs), self.a(zs), self.w(zs)):
                    writer.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
        return path


def kernel_build(params: ModelParams, tol: float = DEFAULT_TOL) -> JumpKernel:
    """Tabulate the kernel, reservoir rates and envelope alias table."""
    if not 0.0 < tol <= 1e-6:
        raise ToleranceUnreachable(f"tol must lie in (0, 1e-6], got {tol}")
    n, g = params.n, params.gamma
    half_sum = 0.5 * (params.c_plus + params.c_minus)
    half_diff = 0.5 * (params.c_plus - params.c_minus)

    z = np.arange(n + 1, dtype=float)
    base = np.zeros(n + 1)
    base[1:] = z[1:] ** (-g - 1.0)
    s_tab = half_sum * base
    a_tab = half_diff * base

    t = power_tail(g + 1.0, n, tol)
    tail_s = half_sum * t
    tail_a = half_diff * t

    x = np.arange(1, n)
    sym = params.alpha_eff * (tail_s[x] + tail_s[n - x])
    asym = params.alpha_a_eff * (tail_a[x] - tail_a[n - x])
    res_create = np.zeros(n + 1)
    res_destroy = np.zeros(n + 1)
    res_create[x] = params.b * (sym + asym)
    res_destroy[x] = (1.0 - params.b) * (sym - asym)
    # Round-off can push an exactly-zero rate slightly negative.
    np.clip(res_create, 0.0, None, out=res_create)
    np.clip(res_destroy, 0.0, None, out=res_destroy)

    mags = np.arange(1, n - 1)
    disp = np.concatenate([mags, -mags]).astype(np.int64)
    w_disp = np.concatenate(
        [s_tab[mags] + params.alpha_a_eff * a_tab[mags], s_tab[mags] - params.alpha_a_eff * a_tab[mags]]
    )
    np.clip(w_disp, 0.0, None, out=w_disp)
    pairs = (n - 1 - np.abs(disp)).astype(float)
    class_weight = np.concatenate([w_disp * pairs, res_create[x] + res_destroy[x]])
    alias_prob, alias_idx = build_alias(class_weight)
    return JumpKernel(
        params=params,
        s_tab=s_tab,
        a_tab=a_tab,
        tail_s=tail_s,
        tail_a=tail_a,
        res_create=res_create,
        res_destroy=res_destroy,
        disp=disp,
        w_disp=w_disp,
        class_weight=class_weight,
        alias_prob=alias_prob,
        alias_idx=alias_idx,
        envelope_total=float(class_weight.sum()),
    )


def asym_moment(params: ModelParams, tol: float = DEFAULT_TOL) -> float:
    """m_a = sum_{z >= 1} z a(z) = (c+ - c-)/2 * zeta(gamma)."""
    if params.gamma <= 1.0:
        raise DivergentMoment(f"m_a diverges for gamma={params.gamma} <= 1")
    if not params.asymmetric:
        return 0.0
    return 0.5 * (params.c_plus - params.c_minus) * float(power_tail(params.gamma, 1, tol)[1])


def block_moments(params: ModelParams, cuts: Sequence[int]) -> np.ndarray:
    """Block sums m_j = sum_{z=K_{j-1}}^{K_j - 1} z a(z) for cuts K_0=1 < K_1 < ... ."""
    cuts = [int(k) for k in cuts]
    if not cuts or cuts[0] != 1 or any(b <= a for a, b in zip(cuts, cuts[1:])):
        raise ValueError("cuts must be strictly increasing with K_0 = 1")
    half_diff = 0.5 * (params.c_plus - params.c_minus)
    out = np.empty(len(cuts) - 1)
    for j, (lo, hi) in enumerate(zip(cuts, cuts[1:])):
        zz = np.arange(lo, hi, dtype=float)
        out[j] = half_diff * math.fsum(zz ** (-params.gamma))
    return out


def partial_moment(params: ModelParams, upto: int) -> float:
    """sum_{z=1}^{upto-1} z a(z), the partial sum matching ``block_moments``."""
    zz = np.arange(1, int(upto), dtype=float)
    return 0.5 * (params.c_plus - params.c_minus) * math.fsum(zz ** (-params.gamma))

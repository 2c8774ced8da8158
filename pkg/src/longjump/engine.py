"""Exact event-driven simulation of the accelerated process by thinning
against configuration-independent envelope rates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .kernel import JumpKernel, kernel_build
from .params import ModelParams
from .regime import time_scale

MODES = ("dynkin", "sampling")
DEFAULT_BLOCK = 1 << 16
COUNTER_NAMES = ("proposed", "accepted", "bulk", "create", "destroy")
_COUNTER_LIMIT = 2**62


def stream_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for ensemble member ``stream`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


@dataclass
class Configuration:
    """Occupancy of sites 1..n-1 (index j holds site j+1)."""

    occupancy: np.ndarray
    macro_time: float = 0.0

    @property
    def particle_count(self) -> int:
        return int(self.occupancy.sum())

    @property
    def n(self) -> int:
        return self.occupancy.size + 1


def init_config(params: ModelParams, seed: int, stream: int = 0) -> Configuration:
    """Sample from the Bernoulli product measure with density b."""
    rng = stream_rng(seed, stream)
    occ = (rng.random(params.n - 1) < params.b).astype(np.int8)
    return Configuration(occ)


@dataclass
class Observables:
    """Functionals const + sum_x linear[j, x] etabar(x) + quadratic parts.

    Quadratic part q adds scale_q sum_{x != y, |y-x| <= band_q}
    (g_q(y) - g_q(x))^power_q k_q(y - x) etabar(x) etabar(y) to observable
    ``quad_target[q]``; ``k_q`` is stored at offset z + n.
    """

    names: list[str]
    const: np.ndarray
    linear: np.ndarray  # (m, n + 1), columns 0 and n unused
    jump_sq: np.ndarray  # (m,) bool: accumulate sum of squared jumps
    quad_target: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    quad_g: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    quad_k: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    quad_power: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    quad_band: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    quad_scale: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def empty(cls, n: int) -> "Observables":
        return cls([], np.zeros(0), np.zeros((0, n + 1)), np.zeros(0, bool),
                   quad_g=np.zeros((0, n + 1)), quad_k=np.zeros((0, 2 * n + 1)))

    @property
    def m(self) -> int:
        return len(self.names)

    def add_linear(self, name: str, coef: np.ndarray, const: float = 0.0, jump_sq: bool = False) -> int:
        """Register a linear functional; ``coef`` is indexed by site 1..n-1."""
        n = self.linear.shape[1] - 1
        row = np.zeros(n + 1)
        row[1:n] = coef
        self.names.append(name)
        self.const = np.append(self.const, const)
        self.linear = np.vstack([self.linear, row])
        self.jump_sq = np.append(self.jump_sq, jump_sq)
        return self.m - 1

    def add_quadratic(self, target: int, g: np.ndarray, k_signed: np.ndarray, power: int,
                      band: int, scale: float) -> None:
        """Attach a quadratic part; ``k_signed[z + n]`` is the kernel at offset z."""
        n = self.linear.shape[1] - 1
        row = np.zeros(n + 1)
        row[1:n] = g
        self.quad_target = np.append(self.quad_target, np.int64(target))
        self.quad_g = np.vstack([self.quad_g, row])
        self.quad_k = np.vstack([self.quad_k, k_signed])
        self.quad_power = np.append(self.quad_power, np.int64(power))
        self.quad_band = np.append(self.quad_band, np.int64(min(band, n - 2)))
        self.quad_scale = np.append(self.quad_scale, float(scale))

    def evaluate(self, occupancy: np.ndarray, b: float, band_override: int | None = None) -> np.ndarray:
        """From-scratch value of every observable at a configuration."""
        n = self.linear.shape[1] - 1
        eb = np.zeros(n + 1)
        eb[1:n] = occupancy - b
        out = self.const + self.linear @ eb
        x = np.arange(1, n)
        for q in range(self.quad_target.size):
            band = self.quad_band[q] if band_override is None else band_override
            g = self.quad_g[q, 1:n]
            dz = x[None, :] - x[:, None]
            mask = (dz != 0) & (np.abs(dz) <= band)
            w = (g[None, :] - g[:, None]) ** self.quad_power[q] * self.quad_k[q][dz + n]
            e = eb[1:n]
            out[self.quad_target[q]] += self.quad_scale[q] * float(e @ np.where(mask, w, 0.0) @ e)
        return out


@dataclass
class FieldTrace:
    """Observable values, time integrals and summed squared jumps at grid times."""

    times: np.ndarray
    names: list[str]
    values: np.ndarray | None  # (len(times), m)
    integrals: np.ndarray | None
    jump_sq: np.ndarray | None
    configs: np.ndarray | None  # (len(times), n - 1) int8
    counters: dict[str, int]
    seed: int
    stream: int
    mode: str
    final: Configuration

    def series(self, name: str, kind: str = "values") -> np.ndarray:
        arr = getattr(self, kind)
        if arr is None:
            raise KeyError(f"trace has no {kind}")
        return arr[:, self.names.index(name)]


@njit(cache=True)
def _flip(x, delta, eta, b, n, lin, qt, qg, qk, qp, qband, qscale, dv):
    m = lin.shape[0]
    for j in range(m):
        dv[j] += lin[j, x] * delta
    for q in range(qt.shape[0]):
        band = qband[q]
        lo = max(1, x - band)
        hi = min(n - 1, x + band)
        gx = qg[q, x]
        acc = 0.0
        if qp[q] == 1:
            for y in range(lo, hi + 1):
                if y != x:
                    acc += (qg[q, y] - gx) * qk[q, y - x + n] * (eta[y] - b)
        else:
            for y in range(lo, hi + 1):
                if y != x:
                    d = qg[q, y] - gx
                    acc += d * d * qk[q, y - x + n] * (eta[y] - b)
        dv[qt[q]] += 2.0 * delta * qscale[q] * acc
    eta[x] += delta


@njit(cache=True)
def _run_block(eta, b, n, state, counters, exps, u1, u2, rate,
               alias_prob, alias_idx, n_bulk, disp, res_c, res_d,
               grid, gpos, track, vals, integ, sq, jump_mask,
               lin, qt, qg, qk, qp, qband, qscale,
               out_vals, out_integ, out_sq, rec_cfg, out_cfg):
    """Consume proposals until the block or the grid is exhausted.

    state = [t, t_integrated].  Returns the number of proposals used and
    whether the last grid time was reached.
    """
    t = state[0]
    n_classes = alias_prob.shape[0]
    n_grid = grid.shape[0]
    m = vals.shape[0]
    dv = np.zeros(m)
    g = gpos[0]
    i = 0
    nb = exps.shape[0]
    while i < nb:
        t_next = t + exps[i] / rate
        while g < n_grid and grid[g] < t_next:
            if track:
                for j in range(m):
                    integ[j] += vals[j] * (grid[g] - state[1])
                    out_vals[g, j] = vals[j]
                    out_integ[g, j] = integ[j]
                    out_sq[g, j] = sq[j]
                state[1] = grid[g]
            if rec_cfg:
                for x in range(1, n):
                    out_cfg[g, x - 1] = eta[x]
            g += 1
        if g >= n_grid:
            # Memorylessness: restart the clock at the last grid time.
            state[0] = grid[n_grid - 1]
            gpos[0] = g
            return i + 1, True
        t = t_next
        i += 1
        counters[0] += 1
        scaled = u1[i - 1] * n_classes
        k = int(scaled)
        if k >= n_classes:
            k = n_classes - 1
        c = k if scaled - k < alias_prob[k] else alias_idx[k]
        if c < n_bulk:
            z = disp[c]
            pairs = n - 1 - abs(z)
            off = int(u2[i - 1] * pairs)
            if off >= pairs:
                off = pairs - 1
            x = 1 + off if z > 0 else 1 - z + off
            y = x + z
            if eta[x] == 1 and eta[y] == 0:
                counters[1] += 1
                counters[2] += 1
                if track:
                    for j in range(m):
                        integ[j] += vals[j] * (t - state[1])
                        dv[j] = 0.0
                    state[1] = t
                    _flip(x, -1, eta, b, n, lin, qt, qg, qk, qp, qband, qscale, dv)
                    _flip(y, 1, eta, b, n, lin, qt, qg, qk, qp, qband, qscale, dv)
                    for j in range(m):
                        vals[j] += dv[j]
                        if jump_mask[j]:
                            sq[j] += dv[j] * dv[j]
                else:
                    eta[x] = 0
                    eta[y] = 1
        else:
            x = c - n_bulk + 1
            rc = res_c[x]
            create = u2[i - 1] * (rc + res_d[x]) < rc
            if create == (eta[x] == 0):
                counters[1] += 1
                if create:
                    counters[3] += 1
                else:
                    counters[4] += 1
                delta = 1 if create else -1
                if track:
                    for j in range(m):
                        integ[j] += vals[j] * (t - state[1])
                        dv[j] = 0.0
                    state[1] = t
                    _flip(x, delta, eta, b, n, lin, qt, qg, qk, qp, qband, qscale, dv)
                    for j in range(m):
                        vals[j] += dv[j]
                        if jump_mask[j]:
                            sq[j] += dv[j] * dv[j]
                else:
                    eta[x] += delta
    state[0] = t
    gpos[0] = g
    return i, False


class Simulation:
    """Resumable trajectory: successive ``advance`` calls continue one path."""

    def __init__(self, params: ModelParams, kernel: JumpKernel | None = None,
                 observables: Observables | None = None, seed: int = 0, stream: int = 0,
                 mode: str = "dynkin", initial: Configuration | None = None,
                 block: int = DEFAULT_BLOCK):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.params = params
        self.kernel = kernel or kernel_build(params)
        self.mode = mode
        self.seed, self.stream = seed, stream
        self.block = block
        n = params.n
        obs = observables or Observables.empty(n)
        self.obs = obs
        self.rng = stream_rng(seed, stream)
        start = initial or Configuration((self.rng.random(n - 1) < params.b).astype(np.int8))
        self.eta = np.zeros(n + 1, dtype=np.int8)
        self.eta[1:n] = start.occupancy
        self.state = np.array([start.macro_time, start.macro_time])
        self.counters = np.zeros(len(COUNTER_NAMES), dtype=np.int64)
        self.track = mode == "dynkin" and obs.m > 0
        self.vals = obs.evaluate(start.occupancy, params.b) if obs.m else np.zeros(0)
        self.integ = np.zeros(obs.m)
        self.sq = np.zeros(obs.m)
        self.rate = time_scale(n, params.beta, params.gamma) * self.kernel.envelope_total
        self._pending: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None

    @property
    def time(self) -> float:
        return float(self.state[0])

    def configuration(self) -> Configuration:
        return Configuration(self.eta[1:self.params.n].copy(), self.time)

    def _draw(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        b = self.block
        return self.rng.standard_exponential(b), self.rng.random(b), self.rng.random(b)

    def advance(self, grid: Sequence[float], record_configs: bool = False) -> FieldTrace:
        """Run to ``grid[-1]`` recording at each grid time (all >= current time)."""
        grid = np.asarray(grid, dtype=float)
        slack = 1e-12 * max(1.0, abs(self.time))
        if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) < 0) or grid[0] < self.time - slack:
            raise ValueError("grid must be non-empty, sorted and not before the current time")
        n, m = self.params.n, self.obs.m
        ng = grid.size
        track = self.track
        out_vals = np.zeros((ng, m) if track else (0, m))
        out_integ = np.zeros_like(out_vals)
        out_sq = np.zeros_like(out_vals)
        out_cfg = np.zeros((ng, n - 1) if record_configs else (0, n - 1), dtype=np.int8)
        gpos = np.zeros(1, dtype=np.int64)
        k = self.kernel
        o = self.obs
        while True:
            if self._pending is None:
                self._pending = self._draw()
            exps, u1, u2 = self._pending
            used, done = _run_block(
                self.eta, self.params.b, n, self.state, self.counters, exps, u1, u2, self.rate,
                k.alias_prob, k.alias_idx, k.n_bulk_classes, k.disp, k.res_create, k.res_destroy,
                grid, gpos, track, self.vals, self.integ, self.sq, o.jump_sq,
                o.linear, o.quad_target, o.quad_g, o.quad_k, o.quad_power, o.quad_band, o.quad_scale,
                out_vals, out_integ, out_sq, record_configs, out_cfg,
            )
            if used >= exps.size:
                self._pending = None
            else:
                self._pending = (exps[used:], u1[used:], u2[used:])
            if self.counters[0] > _COUNTER_LIMIT:
                raise OverflowError("event counter overflow")
            if done:
                break
        return FieldTrace(
            times=grid,
            names=list(o.names),
            values=out_vals if track else None,
            integrals=out_integ if track else None,
            jump_sq=out_sq if track else None,
            configs=out_cfg if record_configs else None,
            counters=self.counter_dict(),
            seed=self.seed,
            stream=self.stream,
            mode=self.mode,
            final=self.configuration(),
        )

    def counter_dict(self) -> dict[str, int]:
        return {name: int(v) for name, v in zip(COUNTER_NAMES, self.counters)}


def simulate(params: ModelParams, kernel: JumpKernel | None, observables: Observables | None,
             grid: Sequence[float], seed: int, stream: int = 0, mode: str = "dynkin",
             record_configs: bool = False, initial: Configuration | None = None) -> FieldTrace:
    """One trajectory from the product measure (or ``initial``) over ``grid``."""
    sim = Simulation(params, kernel, observables, seed, stream, mode, initial)
    return sim.advance(grid, record_configs)

"""Exact generator matrix for small lattices and the closed-form action of
the generator on occupation variables."""

from __future__ import annotations

import numpy as np

from .errors import TooLarge
from .kernel import JumpKernel, kernel_build
from .params import ModelParams

MAX_EXACT_N = 12


def _check_size(n: int) -> None:
    if n > MAX_EXACT_N:
        raise TooLarge(f"exact generator limited to n <= {MAX_EXACT_N}, got n={n}")


def state_bits(n: int) -> np.ndarray:
    """Occupations of every configuration: row i holds bit j of i at column j (site j+1)."""
    _check_size(n)
    m = n - 1
    idx = np.arange(2**m)
    return ((idx[:, None] >> np.arange(m)[None, :]) & 1).astype(np.int8)


def config_index(eta: np.ndarray) -> int:
    """Inverse of ``state_bits`` for one configuration."""
    return int(np.dot(np.asarray(eta, dtype=np.int64), 1 << np.arange(len(eta))))


def exact_generator(params: ModelParams, kernel: JumpKernel | None = None) -> np.ndarray:
    """Dense transition-rate matrix Q of L_n (not time-accelerated); rows sum to 0."""
    _check_size(params.n)
    kernel = kernel or kernel_build(params)
    n, m = params.n, params.n - 1
    bits = state_bits(n).astype(bool)
    size = bits.shape[0]
    idx = np.arange(size)
    q = np.zeros((size, size))
    for x in range(m):
        for y in range(m):
            if x == y:
                continue
            rate = float(kernel.w(y - x))
            if rate == 0.0:
                continue
            src = idx[bits[:, x] & ~bits[:, y]]
            q[src, src ^ (1 << x) ^ (1 << y)] += rate
        create, destroy = kernel.res_create[x + 1], kernel.res_destroy[x + 1]
        empty, full = idx[~bits[:, x]], idx[bits[:, x]]
        q[empty, empty ^ (1 << x)] += create
        q[full, full ^ (1 << x)] += destroy
    q[idx, idx] = -q.sum(axis=1)
    return q


def product_measure(params: ModelParams) -> np.ndarray:
    """Bernoulli product measure nu_b as a probability vector over configurations."""
    bits = state_bits(params.n)
    ones = bits.sum(axis=1)
    return params.b**ones * (1.0 - params.b) ** (bits.shape[1] - ones)


def stationarity_defect(params: ModelParams) -> float:
    """sup-norm of nu_b Q."""
    return float(np.max(np.abs(product_measure(params) @ exact_generator(params))))


def apply_L_occupation(z: int, eta: np.ndarray, params: ModelParams,
                       kernel: JumpKernel | None = None) -> float:
    """Closed form of L_n eta(z) at configuration ``eta`` (index j is site j+1)."""
    kernel = kernel or kernel_build(params)
    n = params.n
    eta = np.asarray(eta, dtype=float)
    y = np.arange(1, n)
    others = y != z
    d = y[others] - z
    diff = eta[others] - eta[z - 1]
    sym = float(np.sum(kernel.s(d) * diff))
    asym_bulk = float(np.sum(kernel.a(d) * diff**2))
    r_sum = kernel.tail_s[z] + kernel.tail_s[n - z]
    # sum_{y<=0} a(y-z) + sum_{y>=n} a(y-z) = tail_a(n-z) - tail_a(z)
    outside_a = kernel.tail_a[n - z] - kernel.tail_a[z]
    b = params.b
    return (
        sym
        - params.alpha_a_eff * asym_bulk
        + params.alpha_eff * (b - eta[z - 1]) * r_sum
        - params.alpha_a_eff * (b + eta[z - 1] * (1.0 - 2.0 * b)) * outside_a
    )

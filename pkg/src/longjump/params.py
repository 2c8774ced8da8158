"""Model parameters of the boundary-driven long-jump exclusion process."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Any

from .errors import InvalidParams, RateNegativity

# Slack for floating comparisons on the rate conditions.
_RATE_SLACK = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """All tunable constants of the microscopic model.

    Sites are ``1..n-1``; a jump of length ``z`` has rate proportional to
    ``|z|^(-gamma-1)`` with amplitude ``c_plus`` to the right and ``c_minus``
    to the left.  ``alpha, beta`` tune the symmetric reservoir strength and
    ``alpha_a, beta_a`` the asymmetric one; ``b`` is the reservoir density.
    """

    n: int
    gamma: float
    c_plus: float = 1.0
    c_minus: float = 1.0
    alpha: float = 1.0
    beta: float = 0.0
    alpha_a: float = 0.0
    beta_a: float = 0.0
    b: float = 0.5
    horizon: float = 1.0

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 2:
            raise InvalidParams(f"n must be an integer >= 2, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        checks = [
            (0.0 < self.gamma < 2.0, "gamma must lie in (0, 2)"),
            (self.c_plus >= 0.0 and self.c_minus >= 0.0, "c_plus, c_minus must be >= 0"),
            (self.c_plus + self.c_minus > 0.0, "c_plus + c_minus must be > 0"),
            (self.alpha > 0.0, "alpha must be > 0"),
            (math.isfinite(self.beta), "beta must be finite"),
            (self.alpha_a >= 0.0, "alpha_a must be >= 0"),
            (math.isfinite(self.beta_a), "beta_a must be finite"),
            (0.0 < self.b < 1.0, "b must lie in (0, 1)"),
            (self.horizon > 0.0, "horizon must be > 0"),
        ]
        for ok, message in checks:
            if not ok:
                raise InvalidParams(message)
        self._check_rates()

    @property
    def asymmetric(self) -> bool:
        """True when the kernel has a nonzero antisymmetric part."""
        return self.c_plus != self.c_minus

    @property
    def rho(self) -> float:
        """Ratio |a(z)| / s(z), independent of z."""
        return abs(self.c_plus - self.c_minus) / (self.c_plus + self.c_minus)

    @property
    def alpha_a_eff(self) -> float:
        """alpha_a * n^(-beta_a): the asymmetric strength at this lattice size."""
        return self.alpha_a * self.n ** (-self.beta_a)

    @property
    def alpha_eff(self) -> float:
        """alpha * n^(-beta): the symmetric reservoir strength at this lattice size."""
        return self.alpha * self.n ** (-self.beta)

    def _check_rates(self) -> None:
        if not self.asymmetric or self.alpha_a == 0.0:
            return
        if self.beta_a < max(0.0, self.beta):
            raise RateNegativity(
                f"beta_a={self.beta_a} must be >= max(0, beta)={max(0.0, self.beta)}"
            )
        bound = (self.c_plus + self.c_minus) / abs(self.c_plus - self.c_minus) * min(1.0, self.alpha)
        if self.alpha_a > bound * (1 + _RATE_SLACK):
            raise RateNegativity(f"alpha_a={self.alpha_a} exceeds the rate bound {bound}")
        # Exact check at this n: alpha_a n^-beta_a |a(z)| <= min(1, alpha n^-beta) s(z).
        if self.alpha_a_eff * self.rho > min(1.0, self.alpha_eff) * (1 + _RATE_SLACK):
            raise RateNegativity(
                "alpha_a n^-beta_a |a(z)| exceeds min(1, alpha n^-beta) s(z) at "
                f"n={self.n}"
            )

    def with_(self, **changes: Any) -> "ModelParams":
        """Copy with some fields replaced (re-validated)."""
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def max_alpha_a(c_plus: float, c_minus: float, alpha: float) -> float:
    """Largest alpha_a allowed by the sufficient rate condition."""
    if c_plus == c_minus:
        return math.inf
    return (c_plus + c_minus) / abs(c_plus - c_minus) * min(1.0, alpha)

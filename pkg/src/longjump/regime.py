"""Regime classification: time scale, asymmetry exponent, test-function space,
hypotheses and which limit theorem applies."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import DivergentMoment
from .kernel import asym_moment
from .params import ModelParams


class Space(str, Enum):
    S = "S"
    CINF = "Cinf"
    S_DIR = "S_Dir"
    S_DIRNEU = "S_DirNeu"
    S_NEU = "S_Neu"


class Theorem(str, Enum):
    OU_UNIQUE = "OU_unique"
    OU_TIGHT_ONLY = "OU_tight_only"
    SBE_UNIQUE = "SBE_unique"
    SBE_TIGHT_ONLY = "SBE_tight_only"
    NONE = "none"


@dataclass(frozen=True)
class RegimeInfo:
    theta_n: float
    r_a: float
    space_tag: Space
    h1_case: str | None
    h2: bool
    theorem: Theorem
    kappa1: float | None
    chi_b: float

    @property
    def h1(self) -> bool:
        return self.h1_case is not None


def time_scale(n: int, beta: float, gamma: float) -> float:
    """Theta(n): n^(gamma+beta) for beta < 0, n^gamma otherwise."""
    return float(n) ** (gamma + beta) if beta < 0 else float(n) ** gamma


def asym_exponent(gamma: float, beta: float, beta_a: float) -> float:
    """r_a, the effective growth exponent of the asymmetric drift."""
    return gamma + beta - beta_a if beta < 0 else gamma - beta_a


# Decimal inputs such as 1.8 - 0.3 miss exact ties by an ulp; ties within
# this margin count as equal so that boundary lines are honoured as written.
_TIE = 1e-12


def _lt(x: float, y: float) -> bool:
    return x < y - _TIE


def _eq(x: float, y: float) -> bool:
    return abs(x - y) <= _TIE


def space_for(beta: float, gamma: float) -> Space:
    """Test-function space for (beta, gamma), endpoints taken literally."""
    if not 0.0 < gamma < 2.0:
        raise ValueError("gamma must lie in (0, 2)")
    if _lt(beta, 0.0):
        return Space.S
    if _lt(gamma, 1.0):
        return Space.CINF
    if _lt(gamma, 1.5):
        if _lt(gamma - 1.0, beta):
            return Space.CINF
        # beta == 0 with gamma in [1, 3/2), or beta in (0, gamma-1] with gamma in (1, 3/2)
        return Space.S_DIR
    return Space.S_NEU if _lt(gamma - 1.0, beta) else Space.S_DIRNEU


def chi(b: float) -> float:
    """Static susceptibility b(1-b) of the Bernoulli product measure."""
    return b * (1.0 - b)


def h1_case(params: ModelParams, r_a: float) -> str | None:
    beta_neg = _lt(params.beta, 0.0)
    if not params.asymmetric or _lt(r_a, 1.0):
        return "I"
    if _eq(params.gamma, 1.0) and not _lt(r_a, 1.0):
        return "II"
    if not beta_neg and _lt(2.0 * r_a, 3.0):
        return "III"
    if beta_neg and not _lt(3.0 + params.beta, 2.0 * r_a):
        return "IV"
    return None


def classify(params: ModelParams) -> RegimeInfo:
    """Derive every regime-dependent quantity for ``params``."""
    params.validate()
    g, beta = params.gamma, params.beta
    r_a = asym_exponent(g, beta, params.beta_a)
    case = h1_case(params, r_a)
    h2 = not _lt(beta, 0.0) and _eq(r_a, 1.5) and params.asymmetric
    half = params.b == 0.5
    beta_zero = _eq(beta, 0.0)
    sbe_gamma = not _lt(g, 1.5)
    if h2 and half and sbe_gamma and not beta_zero:
        theorem = Theorem.SBE_UNIQUE
    elif h2 and half and sbe_gamma:
        theorem = Theorem.SBE_TIGHT_ONLY
    elif case is not None and (not params.asymmetric or half):
        theorem = Theorem.OU_TIGHT_ONLY if beta_zero else Theorem.OU_UNIQUE
    else:
        theorem = Theorem.NONE
    try:
        kappa1: float | None = 2.0 * params.alpha_a * asym_moment(params)
    except DivergentMoment:
        kappa1 = None
    return RegimeInfo(
        theta_n=time_scale(params.n, beta, g),
        r_a=r_a,
        space_tag=space_for(beta, g),
        h1_case=case,
        h2=h2,
        theorem=theorem,
        kappa1=kappa1,
        chi_b=chi(params.b),
    )

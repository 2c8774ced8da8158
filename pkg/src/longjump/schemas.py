"""Request and response models of the HTTP service."""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, ConfigDict, Field

from .harness import EnsembleSummary
from .params import ModelParams
from .regime import RegimeInfo


class ParamsIn(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(ge=2)
    gamma: float = Field(gt=0, lt=2)
    c_plus: float = 1.0
    c_minus: float = 1.0
    alpha: float = 1.0
    beta: float = 0.0
    alpha_a: float = 0.0
    beta_a: float = 0.0
    b: float = Field(0.5, gt=0, lt=1)
    horizon: float = Field(1.0, gt=0)

    def to_params(self) -> ModelParams:
        return ModelParams(**self.model_dump())


class RegimeOut(BaseModel):
    theta_n: float
    r_a: float
    space: str
    h1_case: str | None
    h2: bool
    theorem: str
    kappa1: float | None
    chi_b: float

    @classmethod
    def from_info(cls, info: RegimeInfo) -> "RegimeOut":
        return cls(theta_n=info.theta_n, r_a=info.r_a, space=info.space_tag.value, h1_case=info.h1_case,
                   h2=info.h2, theorem=info.theorem.value, kappa1=info.kappa1, chi_b=info.chi_b)


class StationarityOut(BaseModel):
    n: int
    defect_sup: float


class RunRequest(BaseModel):
    """A config as flat dotted keys, e.g. {"experiment": "ladder", "model.n": 64, ...}."""

    model_config = ConfigDict(extra="forbid")

    config: dict[str, Any]
    seed: int | None = Field(None, ge=0)
    workers: int = Field(1, ge=1)


class RowOut(BaseModel):
    name: str
    estimate: float
    stderr: float
    target: float
    tol_rule: str
    passed: bool = Field(alias="pass")
    note: str | None = None

    model_config = ConfigDict(populate_by_name=True)


class SummaryOut(BaseModel):
    experiment: str
    params: dict[str, Any]
    rows: list[RowOut]
    counters: dict[str, int]
    wall_time_s: float
    passed: bool

    @classmethod
    def from_summary(cls, summary: EnsembleSummary) -> "SummaryOut":
        data = summary.to_json()
        return cls(
            experiment=data["experiment"],
            params=data["params"],
            rows=[RowOut.model_validate(r) for r in data["rows"]],
            counters=data["counters"],
            wall_time_s=data["wall_time_s"],
            passed=summary.passed,
        )

"""HTTP service wrapping the harness.  Experiments run synchronously in the
request; long ensembles belong on the command line."""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .cli import CONFIG_ERRORS
from .errors import LongJumpError
from .exact import stationarity_defect
from .experiments import EXPERIMENTS
from .harness import config_from_mapping, run_experiment
from .regime import classify
from .schemas import ParamsIn, RegimeOut, RunRequest, StationarityOut, SummaryOut

app = FastAPI(title="longjump", version="0.1.0")


@app.get("/health")
def health() -> dict[str, str]:
    return {"status": "ok"}


@app.get("/experiments")
def experiments() -> list[str]:
    return sorted(EXPERIMENTS)


def _params(body: ParamsIn):
    try:
        return body.to_params()
    except CONFIG_ERRORS as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


@app.post("/regime", response_model=RegimeOut)
def regime(body: ParamsIn) -> RegimeOut:
    return RegimeOut.from_info(classify(_params(body)))


@app.post("/oracle/stationarity", response_model=StationarityOut)
def oracle_stationarity(body: ParamsIn) -> StationarityOut:
    params = _params(body)
    try:
        return StationarityOut(n=params.n, defect_sup=stationarity_defect(params))
    except CONFIG_ERRORS as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


@app.post("/run", response_model=SummaryOut, response_model_by_alias=True)
def run(body: RunRequest) -> SummaryOut:
    try:
        config = config_from_mapping(body.config)
        if body.seed is not None:
            config = config.with_(seed=body.seed)
        summary = run_experiment(config, body.workers)
    except CONFIG_ERRORS as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    except LongJumpError as exc:
        raise HTTPException(status_code=500, detail=f"{type(exc).__name__}: {exc}") from exc
    return SummaryOut.from_summary(summary)

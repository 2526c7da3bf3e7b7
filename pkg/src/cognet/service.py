"""HTTP service exposing scenario validation, execution, and digests.

The command-line tool is a thin client over this app (in-process by
default, remote with --server); the app can also be served standalone
with uvicorn. Endpoints take scenario text in the request body rather
than file paths, so the service itself holds no filesystem state: the
client owns reading scenario files and writing the CSV set.

Error envelope: failed requests carry {"code": ..., "problems": [...]}
in the detail, where code is "parse", "validation", or "invariant".
Clients map parse/validation to exit status 2 and invariant to 3.
"""
from __future__ import annotations

import dataclasses
from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .runner import InvariantViolation, execute_all, render_outputs
from .scenario import (
    ParseError,
    Scenario,
    parse_scenario,
    validate_scenario,
)


class HealthResponse(BaseModel):
    status: str
    version: str


class ValidateRequest(BaseModel):
    scenario_text: str


class ValidateResponse(BaseModel):
    valid: bool
    name: str = ""
    problems: list[str] = Field(default_factory=list)


class DigestRequest(BaseModel):
    scenario_text: str
    seed: Optional[int] = Field(default=None, ge=0)


class DigestResponse(BaseModel):
    name: str
    digest: str


class RunRequest(BaseModel):
    scenario_text: str
    seed: Optional[int] = Field(default=None, ge=0)
    duration_s: Optional[float] = Field(default=None, gt=0)


class RunResponse(BaseModel):
    name: str
    digest: str
    files: dict[str, str]


def _parse_or_422(text: str) -> Scenario:
    try:
        return parse_scenario(text)
    except ParseError as exc:
        raise HTTPException(
            status_code=422, detail={"code": "parse", "problems": [str(exc)]})


def _validate_or_422(scn: Scenario) -> None:
    problems = validate_scenario(scn)
    if problems:
        raise HTTPException(
            status_code=422, detail={"code": "validation", "problems": problems})


def _apply_overrides(scn: Scenario, duration_s: Optional[float]) -> Scenario:
    if duration_s is None:
        return scn
    meta = dataclasses.replace(scn.meta, duration_s=duration_s)
    return dataclasses.replace(scn, meta=meta)


def create_app() -> FastAPI:
    app = FastAPI(title="cognet", version=__version__)

    @app.get("/api/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/api/validate", response_model=ValidateResponse)
    def validate(req: ValidateRequest) -> ValidateResponse:
        try:
            scn = parse_scenario(req.scenario_text)
        except ParseError as exc:
            return ValidateResponse(valid=False, problems=[str(exc)])
        problems = validate_scenario(scn)
        return ValidateResponse(
            valid=not problems, name=scn.meta.name, problems=problems)

    @app.post("/api/digest", response_model=DigestResponse)
    def digest(req: DigestRequest) -> DigestResponse:
        scn = _parse_or_422(req.scenario_text)
        _validate_or_422(scn)
        try:
            runs = execute_all(scn, seed_override=req.seed)
        except InvariantViolation as exc:
            raise HTTPException(
                status_code=500,
                detail={"code": "invariant", "problems": [str(exc)]})
        return DigestResponse(
            name=scn.meta.name, digest=runs[0].summary.trace_digest)

    @app.post("/api/run", response_model=RunResponse)
    def run(req: RunRequest) -> RunResponse:
        scn = _apply_overrides(_parse_or_422(req.scenario_text), req.duration_s)
        _validate_or_422(scn)
        try:
            runs = execute_all(scn, seed_override=req.seed)
        except InvariantViolation as exc:
            raise HTTPException(
                status_code=500,
                detail={"code": "invariant", "problems": [str(exc)]})
        files = render_outputs(scn, runs)
        return RunResponse(
            name=scn.meta.name,
            digest=runs[0].summary.trace_digest,
            files=files,
        )

    return app

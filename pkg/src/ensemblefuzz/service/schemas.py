"""Request and response models of the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

PolicyName = Literal["legion", "ns", "cov", "fixed", "prep_focus"]


class DepthsRequest(BaseModel):
    callgraph: str = Field(description="caller/callee edge list, one pair per line")
    entries: list[str] = Field(default_factory=list)
    edge_map: Optional[str] = Field(default=None, description="'edge_id function' lines")
    rho: float = Field(default=1.5, gt=0)


class DepthsResponse(BaseModel):
    mean_depth: float
    threshold: float
    rho: float
    depths: dict[str, Optional[int]]
    deep_functions: list[str]
    deep_edges: Optional[list[int]] = None


class SimulateRequest(BaseModel):
    scenario: str = Field(description="scenario TOML text")
    policy: PolicyName = "legion"
    seed: int = 0
    rounds: Optional[int] = Field(default=None, ge=1)
    units: Optional[int] = Field(default=None, ge=1)
    format: Literal["json", "csv"] = "json"


class CompareRequest(BaseModel):
    scenario: str
    policies: list[PolicyName] = Field(min_length=1)
    seeds: list[int] = Field(min_length=1)
    baseline: Optional[PolicyName] = None
    rounds: Optional[int] = Field(default=None, ge=1)
    units: Optional[int] = Field(default=None, ge=1)


class CompareResponse(BaseModel):
    baseline: str
    rows: list[dict[str, int]]
    baseline_at_least: dict[str, int]
    scenario: dict


class RenderRequest(BaseModel):
    logs: str = Field(description="JSON-lines round log or a JSON report")
    format: Literal["json", "csv"] = "json"


class CampaignJob(BaseModel):
    id: str
    status: Literal["queued", "running", "done", "failed"]
    request: SimulateRequest
    error: Optional[str] = None
    rounds_done: int = 0
    report: Optional[dict] = None


class Health(BaseModel):
    status: Literal["ok"] = "ok"
    version: str

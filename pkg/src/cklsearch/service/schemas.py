"""Request and response bodies of the session API."""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, Field


class ItemSpec(BaseModel):
    id: str
    vector: list[float]
    display_url: Optional[str] = None


class DiscreteConfig(BaseModel):
    gamma: float = 3.0
    r: float = 2.0


class ContinuousConfig(BaseModel):
    dim: int = 2
    gamma: float = 8.0
    omega_center: Optional[list[float]] = None
    omega_edge: float = 1.0
    query_budget: int = 200
    alpha: float = 0.95
    grid_resolution: Optional[int] = None
    max_queries_per_stage: int = 60


class CreateSessionRequest(BaseModel):
    mode: Literal["continuous", "discrete"]
    items: Optional[list[ItemSpec]] = None
    config: Optional[Union[DiscreteConfig, ContinuousConfig]] = None


class ItemRef(BaseModel):
    id: str
    display_url: Optional[str] = None


class PointRef(BaseModel):
    coords: list[float]


class QueryOut(BaseModel):
    nonce: str
    kind: Literal["items", "points"]
    a: Union[ItemRef, PointRef]
    b: Union[ItemRef, PointRef]


class TopItem(BaseModel):
    id: str
    prob: float


class DiscreteBeliefSummary(BaseModel):
    kind: Literal["discrete"] = "discrete"
    top: list[TopItem]
    entropy: float


class ContinuousBeliefSummary(BaseModel):
    kind: Literal["continuous"] = "continuous"
    region_center: list[float]
    region_edge: float
    depth: int
    region_mass: float
    stage: int
    queries_in_stage: int


class TerminalOut(BaseModel):
    found: bool
    target_id: Optional[str] = None
    steps: Optional[int] = None
    region_center: Optional[list[float]] = None
    region_edge: Optional[float] = None
    depth: Optional[int] = None
    queries: Optional[int] = None


class SessionState(BaseModel):
    session_id: str
    mode: Literal["continuous", "discrete"]
    pending: Optional[QueryOut] = None
    terminal: Optional[TerminalOut] = None
    belief: Union[DiscreteBeliefSummary, ContinuousBeliefSummary] = Field(
        discriminator="kind"
    )
    history_length: int
    created_at: float
    updated_at: float
    stage_log: Optional[list[dict]] = None


class AnswerRequest(BaseModel):
    nonce: str
    choice: str
    is_target: bool = False


class ErrorBody(BaseModel):
    code: str
    message: str

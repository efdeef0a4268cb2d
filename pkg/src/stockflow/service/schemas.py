"""Request/response models for the HTTP service."""
from __future__ import annotations

from typing import Any, Optional, Union

from pydantic import BaseModel, Field


class InspectRequest(BaseModel):
    xmile: Optional[str] = Field(default=None, description="XMILE document text")
    model: Optional[str] = Field(default=None, description="path or builtin:<name>")


class VariableInfo(BaseModel):
    name: str
    kind: str
    units: Optional[str] = None
    limits: Optional[list[float]] = None
    non_negative: bool = False


class InspectResponse(BaseModel):
    variables: list[VariableInfo]
    constant_converters: list[str]
    dependency_order: list[str]
    specs: dict[str, Any]
    warnings: list[str] = []


class SimulateRequest(BaseModel):
    xmile: Optional[str] = None
    model: Optional[str] = None
    seed: int = 0
    integrator: str = "euler"
    overrides: dict[str, float] = {}
    start: Optional[float] = None
    stop: Optional[float] = None
    dt: Optional[float] = None


class SimulateResponse(BaseModel):
    columns: list[str]
    times: list[float]
    rows: list[list[float]]
    csv: str


class CreateEnvRequest(BaseModel):
    config: dict[str, Any]


class ActionSpecInfo(BaseModel):
    variable: str
    kind: str
    min: Optional[float] = None
    max: Optional[float] = None
    categories: Optional[list[float]] = None


class FlatSpaceInfo(BaseModel):
    width: int
    labels: list[str]
    low: float = -1.0
    high: float = 1.0


class CreateEnvResponse(BaseModel):
    env_id: str
    action_specs: list[ActionSpecInfo]
    flat: Optional[FlatSpaceInfo]
    observation_names: list[str]
    observation_length: int
    episode_steps: int
    parameterized: bool


class ResetRequest(BaseModel):
    episode: Optional[int] = None


class ResetResponse(BaseModel):
    observation: list[float]
    keyed_observation: dict[str, float]
    time: float
    episode: int


class StepRequest(BaseModel):
    action: Union[list[float], dict[str, Any]]


class StepResponse(BaseModel):
    observation: list[float]
    reward: float
    done: bool
    time: float
    keyed_observation: dict[str, float]
    injections: dict[str, float]


class RunEpisodeRequest(BaseModel):
    config: dict[str, Any]
    agent: str = "noop"  # noop | random
    agent_seed: int = 0
    episode: Optional[int] = None


class TransitionRecord(BaseModel):
    observation: list[float]
    reward: float
    done: bool


class RunEpisodeResponse(BaseModel):
    actions: list[list[float]]
    transitions: list[TransitionRecord]
    episode_return: float
    steps: int
    engine_seed: int
    csv: str


class ExamplesResponse(BaseModel):
    models: list[str]
    configs: list[str]


class ErrorResponse(BaseModel):
    error: str
    message: str
    diagnostics: list[str] = []

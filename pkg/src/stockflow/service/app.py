"""HTTP service wrapping the core package.

Environment sessions are held in memory and addressed by id; one session
is one environment, locked so concurrent requests cannot interleave a
step.  Clients that only speak the flat action format (the TypeScript
binding, RL frameworks) drive episodes through /envs; /episodes/run
executes a whole native episode server-side for parity checks.
"""
from __future__ import annotations

import json
import threading
import uuid
from typing import Union

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse

from .. import agents as agents_mod
from .. import models as bundled
from ..engine import Simulation
from ..env import EnvConfig, SimEnv, resolve_model
from ..errors import StockflowError, XmileError
from ..ir import constant_converters, with_specs
from ..xmile import parse_xmile
from . import schemas

app = FastAPI(title="stockflow", version="0.1.0")

_MAX_SESSIONS = 64


class _Session:
    def __init__(self, env: SimEnv):
        self.env = env
        self.lock = threading.Lock()


_sessions: dict[str, _Session] = {}
_sessions_lock = threading.Lock()


def _fail(status: int, exc: Exception) -> HTTPException:
    detail = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, XmileError):
        detail["diagnostics"] = [str(d) for d in exc.diagnostics]
    return HTTPException(status_code=status, detail=detail)


def _model_from_request(req) -> tuple:
    if req.xmile is not None:
        result = parse_xmile(req.xmile)
        if result.model is None:
            raise HTTPException(status_code=400, detail={
                "error": "XmileError",
                "message": "model did not parse",
                "diagnostics": [str(d) for d in result.diagnostics],
            })
        warnings = [str(d) for d in result.diagnostics]
        return result.model, warnings
    if req.model is not None:
        try:
            return resolve_model(req.model), []
        except StockflowError as exc:
            raise _fail(400, exc)
    raise HTTPException(status_code=400, detail={
        "error": "ConfigError", "message": "provide 'xmile' text or a 'model' source"})


@app.get("/health")
def health():
    return {"status": "ok"}


@app.get("/examples", response_model=schemas.ExamplesResponse)
def examples():
    return schemas.ExamplesResponse(
        models=bundled.model_names(), configs=bundled.config_names())


@app.get("/examples/configs/{name}")
def example_config(name: str):
    try:
        path = bundled.config_path(name)
    except StockflowError as exc:
        raise _fail(404, exc)
    return json.loads(path.read_text(encoding="utf-8"))


@app.post("/models/inspect", response_model=schemas.InspectResponse)
def inspect(req: schemas.InspectRequest):
    model, warnings = _model_from_request(req)
    variables = [
        schemas.VariableInfo(
            name=name,
            kind=var.kind.value,
            units=var.units,
            limits=list(var.limits) if var.limits else None,
            non_negative=var.non_negative,
        )
        for name, var in sorted(model.variables.items())
    ]
    return schemas.InspectResponse(
        variables=variables,
        constant_converters=constant_converters(model),
        dependency_order=list(model.dependency_order),
        specs={
            "start": model.specs.start,
            "stop": model.specs.stop,
            "dt": model.specs.dt,
            "time_units": model.specs.time_units,
        },
        warnings=warnings,
    )


@app.post("/simulate", response_model=schemas.SimulateResponse)
def simulate_endpoint(req: schemas.SimulateRequest):
    model, _ = _model_from_request(req)
    try:
        if req.start is not None or req.stop is not None or req.dt is not None:
            model = with_specs(model, start=req.start, stop=req.stop, dt=req.dt)
        sim = Simulation(model, seed=req.seed, integrator=req.integrator,
                         overrides=req.overrides)
        sim.run_to_end()
    except StockflowError as exc:
        raise _fail(400, exc)
    return schemas.SimulateResponse(
        columns=["time"] + list(sim.columns),
        times=sim.times(),
        rows=sim.history,
        csv=sim.csv_text(),
    )


def _describe_env(env: SimEnv, env_id: str) -> schemas.CreateEnvResponse:
    flat = None
    if env.flat_space is not None:
        flat = schemas.FlatSpaceInfo(width=env.flat_space.width,
                                     labels=list(env.flat_space.labels))
    return schemas.CreateEnvResponse(
        env_id=env_id,
        action_specs=[schemas.ActionSpecInfo(**spec.describe()) for spec in env.action_specs],
        flat=flat,
        observation_names=list(env.observation_names),
        observation_length=len(env.observation_names),
        episode_steps=env.episode_steps,
        parameterized=env.config.parameterize_action_space,
    )


@app.post("/envs", response_model=schemas.CreateEnvResponse)
def create_env(req: schemas.CreateEnvRequest):
    try:
        env = SimEnv(EnvConfig.from_json_dict(req.config))
    except StockflowError as exc:
        raise _fail(400, exc)
    with _sessions_lock:
        if len(_sessions) >= _MAX_SESSIONS:
            raise HTTPException(status_code=409, detail={
                "error": "TooManySessions",
                "message": f"session limit of {_MAX_SESSIONS} reached; delete one"})
        env_id = uuid.uuid4().hex[:12]
        _sessions[env_id] = _Session(env)
    return _describe_env(env, env_id)


def _session(env_id: str) -> _Session:
    with _sessions_lock:
        session = _sessions.get(env_id)
    if session is None:
        raise HTTPException(status_code=404, detail={
            "error": "UnknownEnv", "message": f"no environment '{env_id}'"})
    return session


@app.post("/envs/{env_id}/reset", response_model=schemas.ResetResponse)
def reset_env(env_id: str, req: schemas.ResetRequest):
    session = _session(env_id)
    with session.lock:
        try:
            observation = session.env.reset(episode=req.episode)
        except StockflowError as exc:
            raise _fail(400, exc)
        return schemas.ResetResponse(
            observation=[float(v) for v in observation],
            keyed_observation=session.env.keyed_observation(),
            time=session.env.t,
            episode=session.env.episode_index,
        )


@app.post("/envs/{env_id}/step", response_model=schemas.StepResponse)
def step_env(env_id: str, req: schemas.StepRequest):
    session = _session(env_id)
    with session.lock:
        action: Union[list, dict] = req.action
        if isinstance(action, dict):
            # composite JSON: parameterized entries arrive as [gate, value]
            action = {k: tuple(v) if isinstance(v, list) else v
                      for k, v in action.items()}
        try:
            transition = session.env.step(action)
        except StockflowError as exc:
            raise _fail(400, exc)
        return schemas.StepResponse(
            observation=[float(v) for v in transition.observation],
            reward=float(transition.reward),
            done=bool(transition.done),
            time=transition.info["time"],
            keyed_observation=transition.info["keyed_observation"],
            injections=transition.info["injections"],
        )


@app.get("/envs/{env_id}/history.csv", response_class=PlainTextResponse)
def env_history(env_id: str):
    session = _session(env_id)
    with session.lock:
        sim = session.env.simulation
        if sim is None:
            raise HTTPException(status_code=400, detail={
                "error": "EnvError", "message": "environment has not been reset"})
        return PlainTextResponse(sim.csv_text(), media_type="text/csv")


@app.delete("/envs/{env_id}")
def delete_env(env_id: str):
    with _sessions_lock:
        if env_id not in _sessions:
            raise HTTPException(status_code=404, detail={
                "error": "UnknownEnv", "message": f"no environment '{env_id}'"})
        del _sessions[env_id]
    return {"deleted": env_id}


@app.post("/episodes/run", response_model=schemas.RunEpisodeResponse)
def run_episode(req: schemas.RunEpisodeRequest):
    try:
        env = SimEnv(EnvConfig.from_json_dict(req.config))
        if req.agent == "noop":
            agent = agents_mod.NoopAgent(env)
        elif req.agent == "random":
            agent = agents_mod.RandomAgent(env, seed=req.agent_seed)
        else:
            raise HTTPException(status_code=400, detail={
                "error": "ConfigError",
                "message": f"agent must be noop or random, got '{req.agent}'"})
        observation = env.reset(episode=req.episode)
        actions: list[list[float]] = []
        transitions: list[schemas.TransitionRecord] = []
        total = 0.0
        done = False
        while not done:
            action = np.asarray(agent.act(observation), dtype=float)
            transition = env.step(action)
            actions.append([float(v) for v in action])
            transitions.append(schemas.TransitionRecord(
                observation=[float(v) for v in transition.observation],
                reward=float(transition.reward),
                done=bool(transition.done),
            ))
            observation = transition.observation
            total += transition.reward
            done = transition.done
    except StockflowError as exc:
        raise _fail(400, exc)
    return schemas.RunEpisodeResponse(
        actions=actions,
        transitions=transitions,
        episode_return=total,
        steps=len(transitions),
        engine_seed=env.config.seed + env.episode_index,
        csv=env.simulation.csv_text(),
    )

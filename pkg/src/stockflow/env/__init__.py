"""Episodic RL environment over the simulation engine.

An environment wraps one model: actions inject values into constant
converters, observations are the non-actionable variables, and rewards
derive from state deltas between env-step boundaries.  Each env step
advances an integer number of simulation sub-steps.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np

from .. import models as bundled
from ..engine import Simulation
from ..errors import ConfigError, EnvError
from ..ir import ModelIR, VarKind, ensure_valid, model_from_json_dict, with_specs
from ..xmile import load_model
from .actions import (
    ActionSpec,
    FlatActionSpace,
    build_action_specs,
    infer_action_kind,
    to_injections,
    validate_composite,
)
from .config import EnvConfig, LimitOverride
from .rewards import (
    BinarizedDelta,
    CustomReward,
    RewardTracker,
    ScalarDelta,
    TargetResolver,
    reward_from_json,
)

__all__ = [
    "ActionSpec",
    "BinarizedDelta",
    "CustomReward",
    "EnvConfig",
    "FlatActionSpace",
    "LimitOverride",
    "ScalarDelta",
    "SimEnv",
    "Transition",
    "infer_action_kind",
    "make_env",
    "resolve_model",
]


@dataclass
class Transition:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


def resolve_model(source: Union[str, Mapping, ModelIR]) -> ModelIR:
    """Model from a path, a ``builtin:<name>`` tag, an IR dict, or as-is."""
    if isinstance(source, ModelIR):
        return ensure_valid(source)
    if isinstance(source, Mapping):
        return ensure_valid(model_from_json_dict(source))
    if isinstance(source, str):
        if source.startswith("builtin:"):
            return load_model(bundled.model_path(source[len("builtin:"):]))
        return load_model(Path(source))
    raise ConfigError(f"cannot resolve model from {type(source).__name__}")


class SimEnv:
    """One episodic environment instance; single-threaded by contract."""

    def __init__(self, config: EnvConfig, computed_states: Optional[Mapping] = None):
        self.config = config
        model = resolve_model(config.model)
        if config.start is not None or config.stop is not None or config.dt is not None:
            model = ensure_valid(
                with_specs(model, start=config.start, stop=config.stop, dt=config.dt))
        self.model = model

        registry = dict(config.computed_states)
        if computed_states:
            registry.update(computed_states)
        self._resolver = TargetResolver(model, registry)

        reward = config.reward
        if reward is not None and not isinstance(
            reward, (ScalarDelta, BinarizedDelta, CustomReward)
        ):
            reward = reward_from_json(reward)
        self.reward_spec = reward
        self._tracker = RewardTracker(reward, self._resolver)

        self.action_specs = build_action_specs(model, config)
        self._spec_by_name = {s.variable: s for s in self.action_specs}
        actionable = set(self._spec_by_name)

        if config.observables is None:
            observables = sorted(set(model.variables) - actionable)
        else:
            unknown = [o for o in config.observables if o not in model.variables]
            if unknown:
                raise ConfigError(f"observables not in model: {', '.join(unknown)}")
            overlap = sorted(set(config.observables) & actionable)
            if overlap:
                raise ConfigError(
                    "actionable variables are excluded from observations: "
                    + ", ".join(overlap))
            observables = sorted(dict.fromkeys(config.observables))
        self.observation_names: tuple[str, ...] = tuple(observables)

        dt = model.specs.dt
        env_step = config.env_step if config.env_step is not None else dt
        ratio = env_step / dt
        self._n_sub = int(round(ratio))
        if self._n_sub < 1 or abs(ratio - self._n_sub) > 1e-9 * max(1.0, abs(ratio)):
            raise ConfigError(
                f"env_step ({env_step:g}) must be a positive integer multiple "
                f"of dt ({dt:g})")
        self.env_step = env_step
        horizon = model.specs.n_steps
        if horizon % self._n_sub != 0:
            raise ConfigError(
                f"simulation horizon of {horizon} dt steps is not a whole "
                f"number of env steps ({self._n_sub} dt each)")
        self.episode_steps = horizon // self._n_sub

        self.flat_space: Optional[FlatActionSpace] = None
        if config.flatten_spaces:
            self.flat_space = FlatActionSpace(
                self.action_specs, config.parameterize_action_space)

        self._sim: Optional[Simulation] = None
        self._episode_counter = 0
        self.episode_index: Optional[int] = None

    # --- episode loop --------------------------------------------------------

    def reset(self, episode: Optional[int] = None) -> np.ndarray:
        """Start an episode; episode ``i`` seeds the engine with seed+i."""
        if episode is None:
            episode = self._episode_counter
            self._episode_counter += 1
        else:
            self._episode_counter = episode + 1
        self.episode_index = episode

        const_overrides = {}
        stock_initials = {}
        for name, value in self.config.initial_conditions.items():
            var = self.model.variables.get(name)
            if var is None:
                raise ConfigError(f"initial condition targets unknown variable '{name}'")
            if var.kind is VarKind.STOCK:
                stock_initials[name] = value
            elif var.kind is VarKind.CONST:
                const_overrides[name] = value
            else:
                raise ConfigError(
                    f"initial conditions may target stocks or constants, "
                    f"'{name}' is a {var.kind.value}")

        self._sim = Simulation(
            self.model,
            seed=self.config.seed + episode,
            integrator=self.config.integrator,
            overrides=const_overrides,
            stock_initials=stock_initials,
        )
        self._tracker.reset(self._sim.values)
        return self._observe()

    def step(self, action) -> Transition:
        """Apply one action, advance one env step, return the transition."""
        sim = self._sim
        if sim is None:
            raise EnvError("environment must be reset before stepping")
        if sim.done:
            raise EnvError("episode is done; reset before stepping again")

        composite = self._coerce_action(action)
        validate_composite(self.action_specs, composite,
                           self.config.parameterize_action_space)
        injections = to_injections(self.action_specs, composite,
                                   self.config.parameterize_action_space)

        first_new_row = len(sim.history)
        sim.step(self._n_sub, injections)
        values = sim.values
        reward = self._tracker.step(values)
        done = sim.done
        info = {
            "time": sim.t,
            "keyed_observation": {n: values[n] for n in self.observation_names},
            "injections": injections,
            "trajectory": {
                "columns": ("time",) + sim.columns,
                "rows": [
                    [sim.times()[k]] + sim.history[k]
                    for k in range(first_new_row - 1, len(sim.history))
                ],
            },
        }
        return Transition(self._observe(), reward, done, info)

    def _coerce_action(self, action) -> Mapping:
        if isinstance(action, Mapping):
            return action
        if self.flat_space is None:
            raise EnvError(
                "this environment takes composite dict actions "
                "(flatten_spaces is off)")
        return self.flat_space.unflatten(action)

    def _observe(self) -> np.ndarray:
        values = self._sim.values
        return np.array([values[n] for n in self.observation_names], dtype=float)

    # --- views -----------------------------------------------------------------

    @property
    def done(self) -> bool:
        return self._sim is not None and self._sim.done

    @property
    def t(self) -> Optional[float]:
        return None if self._sim is None else self._sim.t

    @property
    def simulation(self) -> Optional[Simulation]:
        return self._sim

    @property
    def reward_baseline(self) -> Optional[float]:
        return self._tracker.baseline

    def keyed_observation(self) -> dict[str, float]:
        values = self._sim.values
        return {n: values[n] for n in self.observation_names}

    def describe_action_space(self) -> list[dict]:
        return [spec.describe() for spec in self.action_specs]

    def action_width(self) -> int:
        if self.flat_space is not None:
            return self.flat_space.width
        return len(self.action_specs)


def make_env(
    config: Union[EnvConfig, Mapping, str, Path],
    computed_states: Optional[Mapping] = None,
) -> SimEnv:
    """Build an environment from an EnvConfig, a JSON dict, or a file path."""
    if isinstance(config, EnvConfig):
        cfg = config
    elif isinstance(config, Mapping):
        cfg = EnvConfig.from_json_dict(config)
    else:
        cfg = EnvConfig.from_file(config)
    return SimEnv(cfg, computed_states=computed_states)

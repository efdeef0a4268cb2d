"""Environment configuration surface.

An :class:`EnvConfig` can be built in code or loaded from a JSON document
whose keys match the field names below.  ``var_limit_overrides`` entries
are either a ``[min, max]`` pair or ``{"categories": [...]}``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from ..errors import ConfigError
from ..ir import ModelIR

KINDS = ("continuous", "discrete", "categorical")


@dataclass
class LimitOverride:
    low: Optional[float] = None
    high: Optional[float] = None
    categories: Optional[tuple[float, ...]] = None

    @classmethod
    def from_json(cls, name: str, data) -> "LimitOverride":
        if isinstance(data, (list, tuple)):
            if len(data) != 2:
                raise ConfigError(f"limit override for '{name}' must be [min, max]")
            return cls(low=float(data[0]), high=float(data[1]))
        if isinstance(data, Mapping):
            if "categories" in data:
                cats = tuple(float(v) for v in data["categories"])
                return cls(categories=cats)
            if "min" in data and "max" in data:
                return cls(low=float(data["min"]), high=float(data["max"]))
        raise ConfigError(
            f"limit override for '{name}' must be [min, max] or {{'categories': [...]}}")

    def to_json(self):
        if self.categories is not None:
            return {"categories": list(self.categories)}
        return [self.low, self.high]


@dataclass
class EnvConfig:
    """The full parameter surface for building an environment."""

    model: Union[str, Mapping, ModelIR]
    start: Optional[float] = None
    stop: Optional[float] = None
    dt: Optional[float] = None
    env_step: Optional[float] = None
    observables: Optional[list[str]] = None
    actionables: Optional[list[str]] = None
    unit_type_map: dict[str, str] = field(default_factory=dict)
    default_unit_limits: dict[str, tuple[float, float]] = field(default_factory=dict)
    var_limit_overrides: dict[str, LimitOverride] = field(default_factory=dict)
    parameterize_action_space: bool = False
    flatten_spaces: bool = True
    seed: int = 0
    integrator: str = "euler"
    reward: Optional[Any] = None  # RewardSpec or its JSON dict
    computed_states: dict[str, Any] = field(default_factory=dict)
    initial_conditions: dict[str, float] = field(default_factory=dict)

    _FIELDS = (
        "model", "start", "stop", "dt", "env_step", "observables", "actionables",
        "unit_type_map", "default_unit_limits", "var_limit_overrides",
        "parameterize_action_space", "flatten_spaces", "seed", "integrator",
        "reward", "computed_states", "initial_conditions",
    )

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "EnvConfig":
        unknown = set(data) - set(cls._FIELDS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "model" not in data:
            raise ConfigError("config is missing 'model'")
        for kind in data.get("unit_type_map", {}).values():
            if kind not in KINDS:
                raise ConfigError(
                    f"unit_type_map values must be one of {KINDS}, got '{kind}'")
        overrides = {
            name: LimitOverride.from_json(name, entry)
            for name, entry in data.get("var_limit_overrides", {}).items()
        }
        defaults = {
            unit: (float(lim[0]), float(lim[1]))
            for unit, lim in data.get("default_unit_limits", {}).items()
        }
        return cls(
            model=data["model"],
            start=data.get("start"),
            stop=data.get("stop"),
            dt=data.get("dt"),
            env_step=data.get("env_step"),
            observables=list(data["observables"]) if data.get("observables") is not None else None,
            actionables=list(data["actionables"]) if data.get("actionables") is not None else None,
            unit_type_map=dict(data.get("unit_type_map", {})),
            default_unit_limits=defaults,
            var_limit_overrides=overrides,
            parameterize_action_space=bool(data.get("parameterize_action_space", False)),
            flatten_spaces=bool(data.get("flatten_spaces", True)),
            seed=int(data.get("seed", 0)),
            integrator=data.get("integrator", "euler"),
            reward=data.get("reward"),
            computed_states=dict(data.get("computed_states", {})),
            initial_conditions={k: float(v) for k, v in data.get("initial_conditions", {}).items()},
        )

    @classmethod
    def from_json(cls, text: str) -> "EnvConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config JSON does not parse: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config JSON must be an object")
        return cls.from_json_dict(data)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "EnvConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def to_json_dict(self) -> dict:
        from .rewards import reward_to_json  # local import to avoid a cycle

        data: dict[str, Any] = {"model": self.model if isinstance(self.model, str) else "<inline>"}
        for name in ("start", "stop", "dt", "env_step", "observables", "actionables"):
            value = getattr(self, name)
            if value is not None:
                data[name] = value
        if self.unit_type_map:
            data["unit_type_map"] = dict(self.unit_type_map)
        if self.default_unit_limits:
            data["default_unit_limits"] = {u: list(l) for u, l in self.default_unit_limits.items()}
        if self.var_limit_overrides:
            data["var_limit_overrides"] = {
                n: o.to_json() for n, o in self.var_limit_overrides.items()
            }
        data["parameterize_action_space"] = self.parameterize_action_space
        data["flatten_spaces"] = self.flatten_spaces
        data["seed"] = self.seed
        data["integrator"] = self.integrator
        if self.reward is not None:
            data["reward"] = reward_to_json(self.reward)
        if self.computed_states:
            data["computed_states"] = {
                k: v for k, v in self.computed_states.items() if isinstance(v, str)
            }
        if self.initial_conditions:
            data["initial_conditions"] = dict(self.initial_conditions)
        return data

"""Action space construction, flattening and parameterization.

Kinds follow the mathematical convention: ``continuous`` for values in a
real range, ``discrete`` for ordered integers, ``categorical`` for
unordered category values addressed by index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from ..errors import ActionError, ConfigError
from ..ir import ModelIR, Variable, constant_converters
from .config import EnvConfig

# Name fragments that mark a count-like variable as discrete.
_DISCRETE_HINTS = ("count", "number", "num_", "capacity", "population")


@dataclass(frozen=True)
class ActionSpec:
    variable: str
    kind: str  # continuous | discrete | categorical
    low: Optional[float] = None
    high: Optional[float] = None
    categories: Optional[tuple[float, ...]] = None

    def check(self):
        if self.kind == "continuous":
            if self.low is None or self.high is None or not self.low < self.high:
                raise ConfigError(
                    f"continuous action '{self.variable}' needs min < max, "
                    f"got [{self.low}, {self.high}]")
        elif self.kind == "discrete":
            if self.low is None or self.high is None or not self.low < self.high:
                raise ConfigError(
                    f"discrete action '{self.variable}' needs min < max, "
                    f"got [{self.low}, {self.high}]")
            if self.low != int(self.low) or self.high != int(self.high):
                raise ConfigError(
                    f"discrete action '{self.variable}' needs integer bounds, "
                    f"got [{self.low}, {self.high}]")
        elif self.kind == "categorical":
            cats = self.categories or ()
            if len(cats) < 2 or len(set(cats)) != len(cats):
                raise ConfigError(
                    f"categorical action '{self.variable}' needs >= 2 distinct values")
        else:
            raise ConfigError(f"unknown action kind '{self.kind}'")

    def describe(self) -> dict:
        out = {"variable": self.variable, "kind": self.kind}
        if self.kind == "categorical":
            out["categories"] = list(self.categories)
        else:
            out["min"] = self.low
            out["max"] = self.high
        return out


def infer_action_kind(variable: Variable, unit_type_map: Mapping[str, str]) -> str:
    """Kind from the unit map when present, else from name heuristics.

    Categorical is never inferred; it requires an explicit category list.
    """
    if variable.units and variable.units in unit_type_map:
        return unit_type_map[variable.units]
    name = variable.name
    if any(hint in name for hint in _DISCRETE_HINTS):
        return "discrete"
    return "continuous"


def build_action_specs(model: ModelIR, config: EnvConfig) -> list[ActionSpec]:
    """One spec per actionable, sorted by variable name.

    Limits resolve through the chain: per-variable override, then model
    limits, then per-unit defaults; a variable with no source is a
    configuration error.
    """
    injectable = set(constant_converters(model))
    if config.actionables is None:
        actionables = sorted(injectable)
    else:
        actionables = sorted(dict.fromkeys(config.actionables))
        unknown = [a for a in actionables if a not in model.variables]
        if unknown:
            raise ConfigError(f"actionables not in model: {', '.join(unknown)}")
        not_const = [a for a in actionables if a not in injectable]
        if not_const:
            raise ConfigError(
                "actionables must be constant converters, these are not: "
                + ", ".join(not_const))

    specs = []
    for name in actionables:
        var = model.variables[name]
        override = config.var_limit_overrides.get(name)
        if override is not None and override.categories is not None:
            spec = ActionSpec(name, "categorical", categories=override.categories)
        else:
            kind = infer_action_kind(var, config.unit_type_map)
            if kind == "categorical":
                raise ConfigError(
                    f"'{name}' is mapped to categorical but no category list is "
                    "given in var_limit_overrides")
            limits = None
            if override is not None:
                limits = (override.low, override.high)
            elif var.limits is not None:
                limits = var.limits
            elif var.units and var.units in config.default_unit_limits:
                limits = config.default_unit_limits[var.units]
            if limits is None:
                raise ConfigError(f"unresolved limits for '{name}'")
            spec = ActionSpec(name, kind, low=float(limits[0]), high=float(limits[1]))
        spec.check()
        specs.append(spec)
    return specs


def _round_half_away(x: float) -> float:
    return math.floor(x + 0.5) if x >= 0.0 else math.ceil(x - 0.5)


def _to_value(spec: ActionSpec, v: float) -> Union[float, int]:
    """Map one flat component from [-1, 1] into the spec's domain."""
    if spec.kind == "continuous":
        return spec.low + (v + 1.0) / 2.0 * (spec.high - spec.low)
    if spec.kind == "discrete":
        raw = spec.low + (v + 1.0) / 2.0 * (spec.high - spec.low)
        return int(min(max(_round_half_away(raw), spec.low), spec.high))
    count = len(spec.categories)
    index = math.floor((v + 1.0) / 2.0 * count)
    return int(min(max(index, 0), count - 1))


def _from_value(spec: ActionSpec, value: Union[float, int]) -> float:
    """Inverse of :func:`_to_value`; exact for discrete/categorical."""
    if spec.kind == "continuous":
        return 2.0 * (float(value) - spec.low) / (spec.high - spec.low) - 1.0
    if spec.kind == "discrete":
        return 2.0 * (float(value) - spec.low) / (spec.high - spec.low) - 1.0
    count = len(spec.categories)
    return 2.0 * (int(value) + 0.5) / count - 1.0


class FlatActionSpace:
    """Bijection between composite actions and vectors in [-1, 1]^n.

    Layout is sorted-by-variable; with a parameterized space each
    variable contributes a gate component followed by a value component.
    Gate components map v >= 0 to "apply" and v < 0 to "skip".
    """

    def __init__(self, specs: Sequence[ActionSpec], parameterized: bool):
        self.specs = list(specs)
        self.parameterized = parameterized
        self.width = len(specs) * (2 if parameterized else 1)
        self.labels: list[str] = []
        for spec in self.specs:
            if parameterized:
                self.labels.append(f"{spec.variable}.gate")
            self.labels.append(spec.variable)

    def unflatten(self, vector) -> dict:
        """Vector in [-1, 1]^n -> composite action.

        Composite entries are plain values, or ``(gate, value)`` pairs
        when parameterized; categorical values are category indices.
        """
        arr = np.asarray(vector, dtype=float).reshape(-1)
        if arr.shape[0] != self.width:
            raise ActionError(
                f"flat action has {arr.shape[0]} components, expected {self.width}")
        for label, v in zip(self.labels, arr):
            if not -1.0 - 1e-12 <= v <= 1.0 + 1e-12:
                raise ActionError(
                    f"flat action component '{label}' = {v:g} outside [-1, 1]")
        action: dict = {}
        i = 0
        for spec in self.specs:
            if self.parameterized:
                gate = 1 if arr[i] >= 0.0 else 0
                value = _to_value(spec, float(arr[i + 1]))
                action[spec.variable] = (gate, value)
                i += 2
            else:
                action[spec.variable] = _to_value(spec, float(arr[i]))
                i += 1
        return action

    def flatten(self, action: Mapping) -> np.ndarray:
        out = np.zeros(self.width, dtype=float)
        i = 0
        for spec in self.specs:
            if spec.variable not in action:
                raise ActionError(f"composite action is missing '{spec.variable}'")
            entry = action[spec.variable]
            if self.parameterized:
                gate, value = entry
                out[i] = 1.0 if gate else -1.0
                out[i + 1] = _from_value(spec, value)
                i += 2
            else:
                out[i] = _from_value(spec, entry)
                i += 1
        return out


def validate_composite(specs: Sequence[ActionSpec], action: Mapping, parameterized: bool):
    """Raise :class:`ActionError` unless the composite action is in-space."""
    known = {s.variable for s in specs}
    extra = set(action) - known
    if extra:
        raise ActionError(f"action targets unknown variables: {', '.join(sorted(extra))}")
    for spec in specs:
        if spec.variable not in action:
            raise ActionError(f"composite action is missing '{spec.variable}'")
        entry = action[spec.variable]
        if parameterized:
            try:
                gate, value = entry
            except (TypeError, ValueError):
                raise ActionError(
                    f"parameterized action for '{spec.variable}' must be (gate, value)")
            if gate not in (0, 1):
                raise ActionError(f"gate for '{spec.variable}' must be 0 or 1, got {gate!r}")
        else:
            value = entry
        if spec.kind == "continuous":
            if not spec.low <= float(value) <= spec.high:
                raise ActionError(
                    f"'{spec.variable}' = {float(value):g} outside "
                    f"[{spec.low:g}, {spec.high:g}]")
        elif spec.kind == "discrete":
            if float(value) != int(float(value)):
                raise ActionError(f"'{spec.variable}' = {value!r} is not an integer")
            if not spec.low <= int(float(value)) <= spec.high:
                raise ActionError(
                    f"'{spec.variable}' = {value!r} outside "
                    f"[{spec.low:g}, {spec.high:g}]")
        else:
            idx = float(value)
            if idx != int(idx) or not 0 <= int(idx) < len(spec.categories):
                raise ActionError(
                    f"'{spec.variable}' category index {value!r} outside "
                    f"0..{len(spec.categories) - 1}")


def to_injections(specs: Sequence[ActionSpec], action: Mapping, parameterized: bool) -> dict:
    """Composite action -> injections dict; gated-off entries inject nothing."""
    injections: dict[str, float] = {}
    for spec in specs:
        entry = action[spec.variable]
        if parameterized:
            gate, value = entry
            if not gate:
                continue
        else:
            value = entry
        if spec.kind == "categorical":
            injections[spec.variable] = float(spec.categories[int(value)])
        elif spec.kind == "discrete":
            injections[spec.variable] = float(int(value))
        else:
            injections[spec.variable] = float(value)
    return injections

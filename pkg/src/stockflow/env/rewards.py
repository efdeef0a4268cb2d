"""Reward functions over state deltas.

A reward target is either a model variable or a named computed state: a
pure function of the values map, defined in Python or as an equation
string (parsed with the model grammar, stateless builtins only).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Union

from ..errors import ConfigError, EngineError
from ..ir import Binary, Call, Cond, Expr, Lookup, Num, Ref, TimeRef, Unary
from ..ir import ModelIR


@dataclass(frozen=True)
class ScalarDelta:
    """Reward = target(t+1) - target(t); the episode return telescopes."""

    target: str


@dataclass(frozen=True)
class BinarizedDelta:
    """Reward = 1 when the target moved in ``direction``, else 0."""

    target: str
    direction: str = "increase"  # or "decrease"

    def __post_init__(self):
        if self.direction not in ("increase", "decrease"):
            raise ConfigError(
                f"binarized reward direction must be increase/decrease, "
                f"got '{self.direction}'")


@dataclass(frozen=True)
class CustomReward:
    """Arbitrary function of (previous values, current values)."""

    fn: Callable[[Mapping[str, float], Mapping[str, float]], float]
    name: str = "custom"


RewardSpec = Union[ScalarDelta, BinarizedDelta, CustomReward]


def reward_from_json(data) -> RewardSpec:
    if isinstance(data, (ScalarDelta, BinarizedDelta, CustomReward)):
        return data
    if not isinstance(data, Mapping) or "kind" not in data:
        raise ConfigError("reward must be an object with a 'kind' key")
    kind = data["kind"]
    if kind == "scalar_delta":
        return ScalarDelta(target=data["target"])
    if kind == "binarized_delta":
        return BinarizedDelta(target=data["target"],
                              direction=data.get("direction", "increase"))
    raise ConfigError(f"unknown reward kind '{kind}' (custom rewards are code-only)")


def reward_to_json(spec) -> dict:
    if isinstance(spec, ScalarDelta):
        return {"kind": "scalar_delta", "target": spec.target}
    if isinstance(spec, BinarizedDelta):
        return {"kind": "binarized_delta", "target": spec.target,
                "direction": spec.direction}
    if isinstance(spec, CustomReward):
        return {"kind": "custom", "name": spec.name}
    if isinstance(spec, Mapping):
        return dict(spec)
    raise ConfigError(f"cannot serialize reward {spec!r}")


# --- computed states ---------------------------------------------------------


def _eval_static(expr: Expr, values: Mapping[str, float]) -> float:
    """Evaluate an expression against a values map; no time, no state."""
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Ref):
        try:
            return values[expr.name]
        except KeyError:
            raise EngineError(f"computed state references unknown variable '{expr.name}'")
    if isinstance(expr, Unary):
        v = _eval_static(expr.operand, values)
        return -v if expr.op == "-" else (0.0 if v != 0.0 else 1.0)
    if isinstance(expr, Binary):
        a = _eval_static(expr.left, values)
        b = _eval_static(expr.right, values)
        op = expr.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return a / b
        if op == "^":
            return math.pow(a, b)
        if op == "<":
            return 1.0 if a < b else 0.0
        if op == "<=":
            return 1.0 if a <= b else 0.0
        if op == ">":
            return 1.0 if a > b else 0.0
        if op == ">=":
            return 1.0 if a >= b else 0.0
        if op == "=":
            return 1.0 if a == b else 0.0
        if op == "<>":
            return 1.0 if a != b else 0.0
        if op == "and":
            return 1.0 if (a != 0.0 and b != 0.0) else 0.0
        if op == "or":
            return 1.0 if (a != 0.0 or b != 0.0) else 0.0
    if isinstance(expr, Cond):
        if _eval_static(expr.test, values) != 0.0:
            return _eval_static(expr.then, values)
        return _eval_static(expr.orelse, values)
    if isinstance(expr, Call):
        name = expr.name
        args = [_eval_static(a, values) for a in expr.args]
        if name == "abs":
            return abs(args[0])
        if name == "min":
            return min(args[0], args[1])
        if name == "max":
            return max(args[0], args[1])
        if name == "exp":
            return math.exp(args[0])
        if name == "ln":
            return math.log(args[0])
        if name == "log10":
            return math.log10(args[0])
        if name == "sqrt":
            return math.sqrt(args[0])
        if name == "int":
            return float(math.trunc(args[0]))
        if name == "safediv":
            alt = args[2] if len(args) > 2 else 0.0
            return alt if args[1] == 0.0 else args[0] / args[1]
        raise ConfigError(f"builtin '{name}' is not allowed in computed states")
    if isinstance(expr, (TimeRef, Lookup)):
        raise ConfigError("computed states cannot reference time or lookup tables")
    raise ConfigError(f"cannot evaluate computed state node {expr!r}")


def compile_computed_state(name: str, definition) -> Callable[[Mapping[str, float]], float]:
    """Turn an equation string or callable into a values-map function."""
    if callable(definition):
        return definition
    if isinstance(definition, str):
        from ..xmile import parse_expression

        expr = parse_expression(definition)
        return lambda values: _eval_static(expr, values)
    raise ConfigError(
        f"computed state '{name}' must be an equation string or a callable")


class TargetResolver:
    """Resolve reward targets against the model or the computed-state registry."""

    def __init__(self, model: ModelIR, computed_states: Optional[Mapping] = None):
        self.model = model
        self.computed: dict[str, Callable[[Mapping[str, float]], float]] = {}
        for name, definition in (computed_states or {}).items():
            if name in model.variables:
                raise ConfigError(
                    f"computed state '{name}' shadows a model variable")
            self.computed[name] = compile_computed_state(name, definition)

    def resolve(self, target: str) -> Callable[[Mapping[str, float]], float]:
        if target in self.computed:
            return self.computed[target]
        if target in self.model.variables:
            return lambda values: values[target]
        raise ConfigError(
            f"reward target '{target}' is neither a model variable nor a "
            "registered computed state")


class RewardTracker:
    """Holds the baseline between env steps and produces per-step rewards."""

    def __init__(self, spec: Optional[RewardSpec], resolver: TargetResolver):
        self.spec = spec
        self._target_fn = None
        if isinstance(spec, (ScalarDelta, BinarizedDelta)):
            self._target_fn = resolver.resolve(spec.target)
        self._baseline: Optional[float] = None
        self._prev_values: Optional[Mapping[str, float]] = None

    def reset(self, values: Mapping[str, float]):
        if self._target_fn is not None:
            self._baseline = self._target_fn(values)
        self._prev_values = dict(values)

    @property
    def baseline(self) -> Optional[float]:
        return self._baseline

    def step(self, values: Mapping[str, float]) -> float:
        spec = self.spec
        if spec is None:
            reward = 0.0
        elif isinstance(spec, ScalarDelta):
            current = self._target_fn(values)
            reward = current - self._baseline
            self._baseline = current
        elif isinstance(spec, BinarizedDelta):
            current = self._target_fn(values)
            delta = current - self._baseline
            if spec.direction == "increase":
                reward = 1.0 if delta > 0.0 else 0.0
            else:
                reward = 1.0 if delta < 0.0 else 0.0
            self._baseline = current
        else:
            reward = float(spec.fn(self._prev_values, values))
        self._prev_values = dict(values)
        return reward

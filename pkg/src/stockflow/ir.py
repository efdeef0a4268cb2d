"""In-memory representation of a stock-and-flow model.

The XMILE parser produces a :class:`ModelIR`, the simulation engine
consumes it, and the environment layer reads variable metadata (kinds,
units, limits) from it.  A ModelIR is immutable after construction and
can be shared freely between concurrent simulations.
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterator, Mapping, Optional, Union

from .errors import ModelError

# Supported builtin functions: name -> (min arity, max arity).  TIME, DT,
# STARTTIME and STOPTIME may also appear as bare identifiers in equations.
BUILTINS: dict[str, tuple[int, int]] = {
    "abs": (1, 1),
    "min": (2, 2),
    "max": (2, 2),
    "exp": (1, 1),
    "ln": (1, 1),
    "log10": (1, 1),
    "sqrt": (1, 1),
    "sin": (1, 1),
    "cos": (1, 1),
    "int": (1, 1),
    "safediv": (2, 3),
    "step": (2, 2),
    "pulse": (2, 3),
    "ramp": (2, 2),
    "random": (2, 2),
    "delay1": (2, 3),
    "delay3": (2, 3),
    "smth1": (2, 3),
    "smth3": (2, 3),
    "time": (0, 0),
    "dt": (0, 0),
    "starttime": (0, 0),
    "stoptime": (0, 0),
}

# Builtins that keep per-call-site state inside the engine.
STATEFUL_BUILTINS = {"random", "delay1", "delay3", "smth1", "smth3"}

# Equation keywords that can never be variable names.
RESERVED_WORDS = {"if", "then", "else", "and", "or", "not"} | set(BUILTINS)


def normalize_name(name: str) -> str:
    """Canonical variable identifier: lowercase, whitespace runs -> ``_``.

    Some tools export embedded line breaks as a literal backslash-n; those
    are treated as spaces.  Normalization is idempotent.
    """
    cleaned = name.replace("\\n", " ")
    return "_".join(cleaned.split()).lower()


class VarKind(str, Enum):
    STOCK = "stock"
    FLOW = "flow"
    AUX = "auxiliary"
    CONST = "constant"


# --- expression trees -------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "-" | "not"
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # + - * / ^ < <= > >= = <> and or
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Cond:
    test: "Expr"
    then: "Expr"
    orelse: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class Lookup:
    table: str
    arg: "Expr"


@dataclass(frozen=True)
class TimeRef:
    pass


Expr = Union[Num, Ref, Unary, Binary, Cond, Call, Lookup, TimeRef]


def refs_in(expr: Expr) -> Iterator[str]:
    """Yield every variable name referenced by an expression."""
    if isinstance(expr, Ref):
        yield expr.name
    elif isinstance(expr, Unary):
        yield from refs_in(expr.operand)
    elif isinstance(expr, Binary):
        yield from refs_in(expr.left)
        yield from refs_in(expr.right)
    elif isinstance(expr, Cond):
        yield from refs_in(expr.test)
        yield from refs_in(expr.then)
        yield from refs_in(expr.orelse)
    elif isinstance(expr, Call):
        for a in expr.args:
            yield from refs_in(a)
    elif isinstance(expr, Lookup):
        yield from refs_in(expr.arg)


def calls_in(expr: Expr) -> Iterator[Call]:
    """Yield every builtin call node in an expression."""
    if isinstance(expr, Call):
        yield expr
        for a in expr.args:
            yield from calls_in(a)
    elif isinstance(expr, Unary):
        yield from calls_in(expr.operand)
    elif isinstance(expr, Binary):
        yield from calls_in(expr.left)
        yield from calls_in(expr.right)
    elif isinstance(expr, Cond):
        yield from calls_in(expr.test)
        yield from calls_in(expr.then)
        yield from calls_in(expr.orelse)
    elif isinstance(expr, Lookup):
        yield from calls_in(expr.arg)


def literal_value(expr: Expr) -> Optional[float]:
    """Return the numeric value if the expression is a plain literal."""
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Unary) and expr.op == "-" and isinstance(expr.operand, Num):
        return -expr.operand.value
    return None


# --- model pieces -----------------------------------------------------------


@dataclass(frozen=True)
class LookupTable:
    """Piecewise-linear graphical function.

    ``x_points`` must be strictly ascending; evaluation clamps to the
    endpoint y values outside the x range.
    """

    x_points: tuple[float, ...]
    y_points: tuple[float, ...]

    def __call__(self, x: float) -> float:
        xs, ys = self.x_points, self.y_points
        if x <= xs[0]:
            return ys[0]
        if x >= xs[-1]:
            return ys[-1]
        # binary search for the bracketing segment
        lo, hi = 0, len(xs) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if xs[mid] <= x:
                lo = mid
            else:
                hi = mid
        frac = (x - xs[lo]) / (xs[hi] - xs[lo])
        return ys[lo] + frac * (ys[hi] - ys[lo])


@dataclass(frozen=True)
class SimSpecs:
    start: float
    stop: float
    dt: float
    time_units: str = ""

    @property
    def n_steps(self) -> int:
        return int(round((self.stop - self.start) / self.dt))


@dataclass(frozen=True)
class Variable:
    name: str
    kind: VarKind
    equation: Optional[Expr] = None  # flows and auxiliaries
    value: Optional[float] = None  # constants
    initial: Optional[Expr] = None  # stocks
    inflows: tuple[str, ...] = ()
    outflows: tuple[str, ...] = ()
    units: Optional[str] = None
    limits: Optional[tuple[float, float]] = None
    non_negative: bool = False


@dataclass(frozen=True)
class ModelIR:
    """A parsed model: variables, lookup tables, sim specs, and the
    topological evaluation order over non-stock variables."""

    variables: Mapping[str, Variable]
    tables: Mapping[str, LookupTable]
    specs: SimSpecs
    dependency_order: tuple[str, ...] = ()

    def stocks(self) -> list[str]:
        return sorted(n for n, v in self.variables.items() if v.kind is VarKind.STOCK)


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    variable: Optional[str]
    message: str

    def __str__(self) -> str:
        where = f" [{self.variable}]" if self.variable else ""
        return f"{self.severity}{where}: {self.message}"


def _instant_deps(var: Variable, variables: Mapping[str, Variable]) -> set[str]:
    """Dependencies of a non-stock variable on other non-stock variables."""
    if var.equation is None:
        return set()
    deps = set()
    for name in refs_in(var.equation):
        ref = variables.get(name)
        if ref is not None and ref.kind is not VarKind.STOCK:
            deps.add(name)
    return deps


def _topo_order(variables: Mapping[str, Variable]) -> tuple[tuple[str, ...], list[str]]:
    """Kahn's algorithm with a name-ordered heap for determinism.

    Returns (order, leftover) where leftover is non-empty iff the
    instantaneous dependency graph has a cycle.
    """
    nodes = [n for n, v in variables.items() if v.kind is not VarKind.STOCK]
    deps = {n: _instant_deps(variables[n], variables) for n in nodes}
    dependents: dict[str, set[str]] = {n: set() for n in nodes}
    for n, ds in deps.items():
        for d in ds:
            dependents.setdefault(d, set()).add(n)
    pending = {n: len(ds) for n, ds in deps.items()}
    ready = [n for n, c in pending.items() if c == 0]
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for m in sorted(dependents.get(n, ())):
            pending[m] -= 1
            if pending[m] == 0:
                heapq.heappush(ready, m)
    leftover = sorted(n for n, c in pending.items() if c > 0)
    return tuple(order), leftover


def _find_cycle(variables: Mapping[str, Variable], leftover: list[str]) -> list[str]:
    """Walk dependencies from a leftover node until one repeats."""
    seen: list[str] = []
    node = leftover[0]
    while node not in seen:
        seen.append(node)
        nxt = sorted(d for d in _instant_deps(variables[node], variables) if d in leftover)
        if not nxt:
            return seen
        node = nxt[0]
    return seen[seen.index(node):] + [node]


def build_model(
    variables: Mapping[str, Variable],
    tables: Mapping[str, LookupTable],
    specs: SimSpecs,
) -> ModelIR:
    """Assemble a ModelIR, computing the dependency order.

    Does not raise on invariant violations; run :func:`validate` to get
    diagnostics.  With a cyclic instantaneous graph the order covers only
    the resolvable prefix.
    """
    order, _ = _topo_order(variables)
    return ModelIR(variables=dict(variables), tables=dict(tables), specs=specs, dependency_order=order)


def with_specs(model: ModelIR, start=None, stop=None, dt=None) -> ModelIR:
    """A copy of the model with overridden simulation specs."""
    specs = model.specs
    specs = SimSpecs(
        start=specs.start if start is None else float(start),
        stop=specs.stop if stop is None else float(stop),
        dt=specs.dt if dt is None else float(dt),
        time_units=specs.time_units,
    )
    return replace(model, specs=specs)


def validate(model: ModelIR) -> list[Diagnostic]:
    """Check every IR invariant; an empty result means the model is sound."""
    diags: list[Diagnostic] = []

    def err(var, msg):
        diags.append(Diagnostic("error", var, msg))

    specs = model.specs
    if not specs.start < specs.stop:
        err(None, f"sim specs: start ({specs.start:g}) must be < stop ({specs.stop:g})")
    if not specs.dt > 0:
        err(None, f"sim specs: dt must be positive, got {specs.dt:g}")
    else:
        steps = (specs.stop - specs.start) / specs.dt
        if steps < 0.5 or abs(steps - round(steps)) > 1e-9 * max(1.0, abs(steps)):
            err(None, f"sim specs: (stop - start)/dt = {steps:g} is not a positive integer")

    variables = model.variables
    for name, var in variables.items():
        if not name or normalize_name(name) != name:
            err(name, "variable name is not a normalized identifier")
        if var.limits is not None and not var.limits[0] <= var.limits[1]:
            err(name, f"limits min ({var.limits[0]:g}) exceeds max ({var.limits[1]:g})")

        if var.kind is VarKind.STOCK:
            if var.initial is None:
                err(name, "stock has no initial expression")
            for flow_name in (*var.inflows, *var.outflows):
                ref = variables.get(flow_name)
                if ref is None:
                    err(name, f"references unknown flow '{flow_name}'")
                elif ref.kind is not VarKind.FLOW:
                    err(name, f"'{flow_name}' is listed as a flow but is a {ref.kind.value}")
        elif var.kind is VarKind.CONST:
            if var.value is None or not math.isfinite(var.value):
                err(name, "constant has no finite numeric value")
        else:
            if var.equation is None:
                err(name, f"{var.kind.value} has no equation")

        for expr in (var.equation, var.initial):
            if expr is None:
                continue
            for ref_name in refs_in(expr):
                if ref_name not in variables:
                    err(name, f"references unknown variable '{ref_name}'")
            for call in calls_in(expr):
                arity = BUILTINS.get(call.name)
                if arity is None:
                    err(name, f"unknown builtin '{call.name}'")
                elif not arity[0] <= len(call.args) <= arity[1]:
                    err(name, f"builtin '{call.name}' called with {len(call.args)} args")
            if isinstance(expr, Lookup) or any(
                isinstance(node, Lookup) for node in _walk(expr)
            ):
                for node in _walk(expr):
                    if isinstance(node, Lookup) and node.table not in model.tables:
                        err(name, f"references unknown lookup table '{node.table}'")

    for table_id, table in model.tables.items():
        if len(table.x_points) < 2 or len(table.x_points) != len(table.y_points):
            err(table_id, "lookup table needs >= 2 points and equal-length x/y")
        elif any(a >= b for a, b in zip(table.x_points, table.x_points[1:])):
            err(table_id, "lookup table x points must be strictly ascending")

    order, leftover = _topo_order(variables)
    if leftover:
        cycle = _find_cycle(variables, leftover)
        err(cycle[0], "dependency cycle with no stock in it: " + " -> ".join(cycle))
    else:
        non_stock = {n for n, v in variables.items() if v.kind is not VarKind.STOCK}
        if set(model.dependency_order) != non_stock:
            err(None, "dependency_order does not cover the non-stock variables")
        else:
            position = {n: i for i, n in enumerate(model.dependency_order)}
            for n in model.dependency_order:
                for d in _instant_deps(variables[n], variables):
                    if position[d] >= position[n]:
                        err(n, f"dependency_order places '{n}' before its dependency '{d}'")

    return diags


def _walk(expr: Expr) -> Iterator[Expr]:
    yield expr
    if isinstance(expr, Unary):
        yield from _walk(expr.operand)
    elif isinstance(expr, Binary):
        yield from _walk(expr.left)
        yield from _walk(expr.right)
    elif isinstance(expr, Cond):
        yield from _walk(expr.test)
        yield from _walk(expr.then)
        yield from _walk(expr.orelse)
    elif isinstance(expr, Call):
        for a in expr.args:
            yield from _walk(a)
    elif isinstance(expr, Lookup):
        yield from _walk(expr.arg)


def ensure_valid(model: ModelIR) -> ModelIR:
    """Raise :class:`ModelError` unless the model validates cleanly."""
    errors = [d for d in validate(model) if d.severity == "error"]
    if errors:
        raise ModelError("; ".join(str(d) for d in errors))
    return model


def constant_converters(model: ModelIR) -> list[str]:
    """Names of the constant converters, sorted, the injectable inputs."""
    return sorted(n for n, v in model.variables.items() if v.kind is VarKind.CONST)


# --- JSON serialization (debug / golden-file format) ------------------------


def _expr_to_json(expr: Expr):
    if isinstance(expr, Num):
        return {"t": "num", "v": expr.value}
    if isinstance(expr, Ref):
        return {"t": "ref", "v": expr.name}
    if isinstance(expr, Unary):
        return {"t": "un", "op": expr.op, "x": _expr_to_json(expr.operand)}
    if isinstance(expr, Binary):
        return {"t": "bin", "op": expr.op, "l": _expr_to_json(expr.left), "r": _expr_to_json(expr.right)}
    if isinstance(expr, Cond):
        return {
            "t": "if",
            "c": _expr_to_json(expr.test),
            "a": _expr_to_json(expr.then),
            "b": _expr_to_json(expr.orelse),
        }
    if isinstance(expr, Call):
        return {"t": "call", "f": expr.name, "args": [_expr_to_json(a) for a in expr.args]}
    if isinstance(expr, Lookup):
        return {"t": "lookup", "table": expr.table, "x": _expr_to_json(expr.arg)}
    if isinstance(expr, TimeRef):
        return {"t": "time"}
    raise TypeError(f"unexpected expression node {expr!r}")


def _expr_from_json(data) -> Expr:
    kind = data["t"]
    if kind == "num":
        return Num(float(data["v"]))
    if kind == "ref":
        return Ref(data["v"])
    if kind == "un":
        return Unary(data["op"], _expr_from_json(data["x"]))
    if kind == "bin":
        return Binary(data["op"], _expr_from_json(data["l"]), _expr_from_json(data["r"]))
    if kind == "if":
        return Cond(_expr_from_json(data["c"]), _expr_from_json(data["a"]), _expr_from_json(data["b"]))
    if kind == "call":
        return Call(data["f"], tuple(_expr_from_json(a) for a in data["args"]))
    if kind == "lookup":
        return Lookup(data["table"], _expr_from_json(data["x"]))
    if kind == "time":
        return TimeRef()
    raise ModelError(f"unknown expression node type '{kind}' in IR JSON")


def model_to_json_dict(model: ModelIR) -> dict:
    variables = {}
    for name in sorted(model.variables):
        var = model.variables[name]
        entry: dict = {"kind": var.kind.value}
        if var.equation is not None:
            entry["equation"] = _expr_to_json(var.equation)
        if var.value is not None:
            entry["value"] = var.value
        if var.initial is not None:
            entry["initial"] = _expr_to_json(var.initial)
        if var.inflows:
            entry["inflows"] = list(var.inflows)
        if var.outflows:
            entry["outflows"] = list(var.outflows)
        if var.units is not None:
            entry["units"] = var.units
        if var.limits is not None:
            entry["limits"] = [var.limits[0], var.limits[1]]
        if var.non_negative:
            entry["non_negative"] = True
        variables[name] = entry
    tables = {
        tid: {"x": list(t.x_points), "y": list(t.y_points)}
        for tid, t in sorted(model.tables.items())
    }
    specs = {
        "start": model.specs.start,
        "stop": model.specs.stop,
        "dt": model.specs.dt,
        "time_units": model.specs.time_units,
    }
    return {"specs": specs, "variables": variables, "tables": tables}


def model_to_json(model: ModelIR) -> str:
    return json.dumps(model_to_json_dict(model), indent=2, sort_keys=True) + "\n"


def model_from_json_dict(data: Mapping) -> ModelIR:
    try:
        specs = SimSpecs(
            start=float(data["specs"]["start"]),
            stop=float(data["specs"]["stop"]),
            dt=float(data["specs"]["dt"]),
            time_units=data["specs"].get("time_units", ""),
        )
        variables: dict[str, Variable] = {}
        for name, entry in data["variables"].items():
            variables[name] = Variable(
                name=name,
                kind=VarKind(entry["kind"]),
                equation=_expr_from_json(entry["equation"]) if "equation" in entry else None,
                value=float(entry["value"]) if "value" in entry else None,
                initial=_expr_from_json(entry["initial"]) if "initial" in entry else None,
                inflows=tuple(entry.get("inflows", ())),
                outflows=tuple(entry.get("outflows", ())),
                units=entry.get("units"),
                limits=tuple(entry["limits"]) if "limits" in entry else None,
                non_negative=bool(entry.get("non_negative", False)),
            )
        tables = {
            tid: LookupTable(tuple(float(x) for x in t["x"]), tuple(float(y) for y in t["y"]))
            for tid, t in data.get("tables", {}).items()
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed IR JSON: {exc}") from exc
    return build_model(variables, tables, specs)


def model_from_json(text: str) -> ModelIR:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"IR JSON does not parse: {exc}") from exc
    return model_from_json_dict(data)

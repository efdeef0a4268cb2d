"""Deterministic fixed-step simulator over a :class:`~stockflow.ir.ModelIR`.

One :class:`Simulation` owns the state of one run: current time, stock
values, the last-evaluated values of every variable, active injected
overrides, RNG state, delay-line internals and the full per-dt history.
Simulations over a shared model may run concurrently; a single instance
is not thread-safe.

Semantics worth knowing:

* Values are evaluated once per grid time.  Row k of the history holds
  the evaluation at t = start + k*dt.
* Injections apply from the first sub-step onward: the flows that carry
  the state across [t, t+dt) are re-evaluated with the injected values,
  while the already-recorded row at t is left as observed.
* Stateful builtins (RANDOM, DELAY*, SMTH*) sample or advance once per
  dt and hold their value across RK4 slope evaluations.
* Non-negative stocks clamp at exactly 0 after integration.
"""
from __future__ import annotations

import math
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import EngineError
from .ir import (
    Binary,
    Call,
    Cond,
    Expr,
    Lookup,
    ModelIR,
    Num,
    Ref,
    TimeRef,
    Unary,
    VarKind,
    ensure_valid,
)

INTEGRATORS = ("euler", "rk4")
_TIME_EPS = 1e-9


def _safediv(a: float, b: float, alt: float = 0.0) -> float:
    return alt if b == 0.0 else a / b


def _pow(a: float, b: float) -> float:
    return math.pow(a, b)


def _trunc(x: float) -> float:
    return float(math.trunc(x))


def _step_fn(t: float, height: float, start: float) -> float:
    return height if t >= start - _TIME_EPS else 0.0


def _pulse_fn(t: float, dt: float, volume: float, first: float, interval: float = 0.0) -> float:
    if interval > 0.0:
        if t < first - _TIME_EPS:
            return 0.0
        k = math.floor((t - first) / interval + _TIME_EPS)
        t_fire = first + k * interval
    else:
        t_fire = first
    if t_fire - _TIME_EPS <= t < t_fire + dt - _TIME_EPS:
        return volume / dt
    return 0.0


def _ramp_fn(t: float, slope: float, start: float) -> float:
    return slope * (t - start) if t > start else 0.0


def eval_builtin(name: str, args: Sequence[float], sim: "Simulation") -> float:
    """Evaluate a stateless or time-based builtin against a simulation.

    Stateful builtins (RANDOM, DELAY*, SMTH*) live behind per-call-site
    state and cannot be evaluated through this entry point.
    """
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
    if name == "sin":
        return math.sin(args[0])
    if name == "cos":
        return math.cos(args[0])
    if name == "int":
        return _trunc(args[0])
    if name == "safediv":
        return _safediv(*args)
    if name == "step":
        return _step_fn(sim.t, args[0], args[1])
    if name == "pulse":
        return _pulse_fn(sim.t, sim.dt, *args)
    if name == "ramp":
        return _ramp_fn(sim.t, args[0], args[1])
    if name == "time":
        return sim.t
    if name == "dt":
        return sim.dt
    if name == "starttime":
        return sim.model.specs.start
    if name == "stoptime":
        return sim.model.specs.stop
    raise EngineError(f"builtin '{name}' cannot be evaluated statelessly")


class _DelayState:
    """Cascade of first-order exponential stages shared by DELAY*/SMTH*.

    Each stage obeys s' = (input - s) / (T/order); the site's output is
    the last stage.  Stages advance once per dt from the input recorded
    at the grid-time evaluation.
    """

    __slots__ = ("order", "stages")

    def __init__(self, order: int, initial: float):
        self.order = order
        self.stages = [initial] * order

    def output(self) -> float:
        return self.stages[-1]

    def advance(self, dt: float, inflow: float, total_time: float):
        stage_time = total_time / self.order
        if stage_time <= 0.0:
            self.stages = [inflow] * self.order
            return
        prev = self.stages
        rates = []
        upstream = inflow
        for s in prev:
            rates.append((upstream - s) / stage_time)
            upstream = s
        self.stages = [s + dt * r for s, r in zip(prev, rates)]


_DELAY_ORDERS = {"delay1": 1, "smth1": 1, "delay3": 3, "smth3": 3}


class Simulation:
    """A single deterministic run of a model.

    Parameters
    ----------
    model:
        A validated model; validation is re-run defensively.
    seed:
        Seeds the generator behind RANDOM().
    integrator:
        "euler" or "rk4".
    overrides:
        Constant-converter values applied before the initial evaluation
        and persisting until changed.
    stock_initials:
        Optional per-stock initial values that short-circuit the stock's
        initial expression.
    """

    def __init__(
        self,
        model: ModelIR,
        seed: int = 0,
        integrator: str = "euler",
        overrides: Optional[Mapping[str, float]] = None,
        stock_initials: Optional[Mapping[str, float]] = None,
    ):
        ensure_valid(model)
        if integrator not in INTEGRATORS:
            raise EngineError(f"unknown integrator '{integrator}' (use euler or rk4)")
        self.model = model
        self.integrator = integrator
        self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        self.dt = model.specs.dt
        self._start = model.specs.start
        self._stop = model.specs.stop
        self._n_total = model.specs.n_steps
        self.step_index = 0
        self.t = self._start

        self._stock_names = model.stocks()
        self._stock_meta = [
            (name, model.variables[name].inflows, model.variables[name].outflows,
             model.variables[name].non_negative)
            for name in self._stock_names
        ]
        self.columns: tuple[str, ...] = tuple(model.dependency_order) + tuple(self._stock_names)

        self._const_values: dict[str, float] = {
            n: v.value for n, v in model.variables.items() if v.kind is VarKind.CONST
        }
        self._overridden: set[str] = set()
        if overrides:
            self.inject(overrides)

        # per-call-site state for stateful builtins
        self._rand_cache: dict[int, float] = {}
        self._delay_states: dict[int, _DelayState] = {}
        self._delay_pending: dict[int, tuple[float, float]] = {}
        self._sampling = False
        self._recording = False
        self._site_counter = 0

        self._compiled: dict[str, Callable[["Simulation"], float]] = {}
        for name in model.dependency_order:
            var = model.variables[name]
            if var.kind is VarKind.CONST:
                self._compiled[name] = _compile_const(name)
            else:
                self._compiled[name] = self._compile(var.equation)

        self.vals: dict[str, float] = {}
        self.stocks: dict[str, float] = {}
        self._init_stocks(stock_initials or {})

        self.history: list[list[float]] = []
        self._values = self._eval_grid(sampling=True, recording=True)
        self._append_history()

    # --- compilation ---------------------------------------------------------

    def _new_site(self) -> int:
        self._site_counter += 1
        return self._site_counter

    def _compile(self, expr: Expr) -> Callable[["Simulation"], float]:
        if isinstance(expr, Num):
            value = expr.value
            return lambda f: value
        if isinstance(expr, Ref):
            name = expr.name
            return lambda f: f.vals[name]
        if isinstance(expr, TimeRef):
            return lambda f: f.t
        if isinstance(expr, Unary):
            operand = self._compile(expr.operand)
            if expr.op == "-":
                return lambda f: -operand(f)
            return lambda f: 0.0 if operand(f) != 0.0 else 1.0
        if isinstance(expr, Binary):
            left = self._compile(expr.left)
            right = self._compile(expr.right)
            op = expr.op
            if op == "+":
                return lambda f: left(f) + right(f)
            if op == "-":
                return lambda f: left(f) - right(f)
            if op == "*":
                return lambda f: left(f) * right(f)
            if op == "/":
                return lambda f: left(f) / right(f)
            if op == "^":
                return lambda f: _pow(left(f), right(f))
            if op == "<":
                return lambda f: 1.0 if left(f) < right(f) else 0.0
            if op == "<=":
                return lambda f: 1.0 if left(f) <= right(f) else 0.0
            if op == ">":
                return lambda f: 1.0 if left(f) > right(f) else 0.0
            if op == ">=":
                return lambda f: 1.0 if left(f) >= right(f) else 0.0
            if op == "=":
                return lambda f: 1.0 if left(f) == right(f) else 0.0
            if op == "<>":
                return lambda f: 1.0 if left(f) != right(f) else 0.0
            if op == "and":
                return lambda f: 1.0 if (left(f) != 0.0 and right(f) != 0.0) else 0.0
            if op == "or":
                return lambda f: 1.0 if (left(f) != 0.0 or right(f) != 0.0) else 0.0
            raise EngineError(f"unknown operator '{op}'")
        if isinstance(expr, Cond):
            test = self._compile(expr.test)
            then = self._compile(expr.then)
            orelse = self._compile(expr.orelse)
            return lambda f: then(f) if test(f) != 0.0 else orelse(f)
        if isinstance(expr, Lookup):
            table = self.model.tables[expr.table]
            arg = self._compile(expr.arg)
            return lambda f: table(arg(f))
        if isinstance(expr, Call):
            return self._compile_call(expr)
        raise EngineError(f"cannot compile expression node {expr!r}")

    def _compile_call(self, expr: Call) -> Callable[["Simulation"], float]:
        name = expr.name
        args = [self._compile(a) for a in expr.args]
        if name == "random":
            site = self._new_site()
            lo, hi = args
            return lambda f: f._random_site(site, lo(f), hi(f))
        if name in _DELAY_ORDERS:
            site = self._new_site()
            order = _DELAY_ORDERS[name]
            input_fn = args[0]
            time_fn = args[1]
            init_fn = args[2] if len(args) > 2 else None
            return lambda f: f._delay_site(site, order, input_fn, time_fn, init_fn)
        if name == "abs":
            a = args[0]
            return lambda f: abs(a(f))
        if name == "min":
            a, b = args
            return lambda f: min(a(f), b(f))
        if name == "max":
            a, b = args
            return lambda f: max(a(f), b(f))
        if name == "exp":
            a = args[0]
            return lambda f: math.exp(a(f))
        if name == "ln":
            a = args[0]
            return lambda f: math.log(a(f))
        if name == "log10":
            a = args[0]
            return lambda f: math.log10(a(f))
        if name == "sqrt":
            a = args[0]
            return lambda f: math.sqrt(a(f))
        if name == "sin":
            a = args[0]
            return lambda f: math.sin(a(f))
        if name == "cos":
            a = args[0]
            return lambda f: math.cos(a(f))
        if name == "int":
            a = args[0]
            return lambda f: _trunc(a(f))
        if name == "safediv":
            if len(args) == 2:
                a, b = args
                return lambda f: _safediv(a(f), b(f))
            a, b, alt = args
            return lambda f: _safediv(a(f), b(f), alt(f))
        if name == "step":
            h, s = args
            return lambda f: _step_fn(f.t, h(f), s(f))
        if name == "pulse":
            if len(args) == 2:
                v, first = args
                return lambda f: _pulse_fn(f.t, f.dt, v(f), first(f))
            v, first, every = args
            return lambda f: _pulse_fn(f.t, f.dt, v(f), first(f), every(f))
        if name == "ramp":
            slope, s = args
            return lambda f: _ramp_fn(f.t, slope(f), s(f))
        if name == "dt":
            return lambda f: f.dt
        if name == "starttime":
            start = self._start
            return lambda f: start
        if name == "stoptime":
            stop = self._stop
            return lambda f: stop
        raise EngineError(f"unknown builtin '{name}'")

    # --- stateful call sites -------------------------------------------------

    def _random_site(self, site: int, lo: float, hi: float) -> float:
        # one draw per dt per site, held across RK4 slopes; a site whose
        # branch first activates during a slope eval draws on first use
        value = self._rand_cache.get(site)
        if value is None:
            value = lo + (hi - lo) * float(self.rng.random())
            self._rand_cache[site] = value
        return value

    def _delay_site(self, site, order, input_fn, time_fn, init_fn) -> float:
        state = self._delay_states.get(site)
        if state is None:
            if init_fn is not None:
                initial = init_fn(self)
            else:
                initial = input_fn(self)
            state = _DelayState(order, initial)
            self._delay_states[site] = state
        if self._recording:
            self._delay_pending[site] = (input_fn(self), time_fn(self))
        return state.output()

    # --- initialization ------------------------------------------------------

    def inject(self, overrides: Mapping[str, float]):
        """Set constant-converter values; they persist until changed."""
        model_vars = self.model.variables
        for name, value in overrides.items():
            var = model_vars.get(name)
            if var is None:
                raise EngineError(f"cannot inject unknown variable '{name}'")
            if var.kind is not VarKind.CONST:
                raise EngineError(
                    f"'{name}' is a {var.kind.value}, not an injectable constant")
            value = float(value)
            if not math.isfinite(value):
                raise EngineError(f"injection for '{name}' is not finite")
            if var.limits is not None and not var.limits[0] <= value <= var.limits[1]:
                raise EngineError(
                    f"injection {value:g} for '{name}' outside limits "
                    f"[{var.limits[0]:g}, {var.limits[1]:g}]")
            self._const_values[name] = value
            self._overridden.add(name)

    def _init_stocks(self, stock_initials: Mapping[str, float]):
        model_vars = self.model.variables
        for name in stock_initials:
            var = model_vars.get(name)
            if var is None or var.kind is not VarKind.STOCK:
                raise EngineError(f"initial value override targets non-stock '{name}'")

        resolved: dict[str, float] = {}
        visiting: list[str] = []
        self._sampling = True

        def resolve(name: str) -> float:
            if name in resolved:
                return resolved[name]
            if name in visiting:
                cycle = " -> ".join(visiting[visiting.index(name):] + [name])
                raise EngineError(f"cycle in initial expressions: {cycle}")
            var = model_vars[name]
            visiting.append(name)
            try:
                if var.kind is VarKind.CONST:
                    value = self._const_values[name]
                elif var.kind is VarKind.STOCK:
                    if name in stock_initials:
                        value = float(stock_initials[name])
                    else:
                        value = eval_initial(var.initial)
                elif var.kind is VarKind.FLOW:
                    raise EngineError(
                        f"initial expression depends on flow '{name}'", time=self.t)
                else:
                    value = eval_initial(var.equation)
            finally:
                visiting.pop()
            if not math.isfinite(value):
                raise EngineError("initial value is not finite", variable=name, time=self.t)
            resolved[name] = value
            return value

        def eval_initial(expr: Expr) -> float:
            if isinstance(expr, Num):
                return expr.value
            if isinstance(expr, Ref):
                return resolve(expr.name)
            if isinstance(expr, TimeRef):
                return self._start
            if isinstance(expr, Unary):
                v = eval_initial(expr.operand)
                return -v if expr.op == "-" else (0.0 if v != 0.0 else 1.0)
            if isinstance(expr, Binary):
                lhs = eval_initial(expr.left)
                rhs = eval_initial(expr.right)
                return _apply_binary(expr.op, lhs, rhs)
            if isinstance(expr, Cond):
                return eval_initial(expr.then) if eval_initial(expr.test) != 0.0 else eval_initial(expr.orelse)
            if isinstance(expr, Lookup):
                return self.model.tables[expr.table](eval_initial(expr.arg))
            if isinstance(expr, Call):
                if expr.name in _DELAY_ORDERS:
                    raise EngineError(
                        f"delay builtin '{expr.name}' not allowed in initial expressions")
                args = [eval_initial(a) for a in expr.args]
                if expr.name == "random":
                    # shares the per-step cache so row 0 sees the same draw
                    site = -1 - len(self._rand_cache)
                    return self._random_site(site, args[0], args[1])
                return eval_builtin(expr.name, args, self)
            raise EngineError(f"cannot evaluate initial expression node {expr!r}")

        for name in self._stock_names:
            try:
                self.stocks[name] = resolve(name)
            except (ValueError, ZeroDivisionError, OverflowError) as exc:
                raise EngineError(f"initial expression failed: {exc}",
                                  variable=name, time=self.t) from exc
        self._sampling = False

    # --- evaluation ----------------------------------------------------------

    def _eval_grid(self, sampling: bool, recording: bool) -> dict[str, float]:
        """One pass over the dependency order at (self.t, self.stocks)."""
        self._sampling = sampling
        self._recording = recording
        vals = self.vals
        vals.clear()
        vals.update(self.stocks)
        compiled = self._compiled
        for name in self.model.dependency_order:
            try:
                value = compiled[name](self)
            except (ValueError, ZeroDivisionError, OverflowError) as exc:
                raise EngineError(f"evaluation failed: {exc}",
                                  variable=name, time=self.t) from exc
            if not math.isfinite(value):
                raise EngineError("value is not finite", variable=name, time=self.t)
            vals[name] = value
        self._sampling = False
        self._recording = False
        return dict(vals)

    def _eval_slope(self, t: float, stocks: Mapping[str, float]) -> dict[str, float]:
        """Frozen evaluation for RK4 slopes: stateful builtins held."""
        saved_t, saved_stocks = self.t, self.stocks
        self.t = t
        self.stocks = dict(stocks)
        try:
            return self._eval_grid(sampling=False, recording=False)
        finally:
            self.t, self.stocks = saved_t, saved_stocks

    def _net_flows(self, values: Mapping[str, float]) -> dict[str, float]:
        nets = {}
        for name, inflows, outflows, _ in self._stock_meta:
            net = 0.0
            for f in inflows:
                net += values[f]
            for f in outflows:
                net -= values[f]
            nets[name] = net
        return nets

    def _append_history(self):
        row = [self._values[name] for name in self.columns]
        self.history.append(row)

    # --- stepping --------------------------------------------------------------

    @property
    def done(self) -> bool:
        return self.step_index >= self._n_total

    @property
    def values(self) -> dict[str, float]:
        """Variable values at the current grid time."""
        return dict(self._values)

    def step(self, n_dt: int = 1, injections: Optional[Mapping[str, float]] = None):
        """Advance ``n_dt`` sub-steps; injections take effect immediately
        and persist until changed."""
        if n_dt <= 0:
            raise EngineError("step count must be a positive integer")
        if self.step_index + n_dt > self._n_total:
            raise EngineError(
                f"stepping past stop: {n_dt} steps from t={self.t:g} "
                f"exceeds stop={self._stop:g}")
        if injections:
            self.inject(injections)
            # refresh current values so the coming sub-step integrates with
            # the injected inputs; the recorded row at t stays as observed
            self._values = self._eval_grid(sampling=False, recording=True)
        for _ in range(n_dt):
            self._advance_one()
        return self

    def _advance_one(self):
        dt = self.dt
        if self.integrator == "euler":
            k1 = self._net_flows(self._values)
            new_stocks = {
                name: self.stocks[name] + dt * k1[name] for name in self._stock_names
            }
        else:
            k1 = self._net_flows(self._values)
            half = {n: self.stocks[n] + 0.5 * dt * k1[n] for n in self._stock_names}
            k2 = self._net_flows(self._eval_slope(self.t + 0.5 * dt, half))
            half = {n: self.stocks[n] + 0.5 * dt * k2[n] for n in self._stock_names}
            k3 = self._net_flows(self._eval_slope(self.t + 0.5 * dt, half))
            full = {n: self.stocks[n] + dt * k3[n] for n in self._stock_names}
            k4 = self._net_flows(self._eval_slope(self.t + dt, full))
            new_stocks = {
                n: self.stocks[n] + dt / 6.0 * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n])
                for n in self._stock_names
            }

        for name, _, _, non_negative in self._stock_meta:
            value = new_stocks[name]
            if non_negative and value < 0.0:
                value = 0.0
            if not math.isfinite(value):
                raise EngineError("stock integration produced a non-finite value",
                                  variable=name, time=self.t)
            self.stocks[name] = value

        for site, (inflow, total_time) in self._delay_pending.items():
            self._delay_states[site].advance(dt, inflow, total_time)
        self._delay_pending.clear()

        self.step_index += 1
        self.t = self._start + self.step_index * dt
        self._rand_cache.clear()
        self._values = self._eval_grid(sampling=True, recording=True)
        self._append_history()

    def run_to_end(self):
        """Step to the stop time; equivalent to repeated single steps."""
        remaining = self._n_total - self.step_index
        if remaining > 0:
            self.step(remaining)
        return self

    # --- export ----------------------------------------------------------------

    def times(self) -> list[float]:
        return [self._start + k * self.dt for k in range(len(self.history))]

    def csv_text(self, first_row: int = 0) -> str:
        """Trajectory CSV: header ``time,<vars>``; 17 significant digits."""
        out = ["time," + ",".join(self.columns)]
        for k, row in enumerate(self.history[first_row:], start=first_row):
            t = self._start + k * self.dt
            out.append(format(t, ".17g") + "," + ",".join(format(v, ".17g") for v in row))
        return "\n".join(out) + "\n"

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.csv_text())


def _apply_binary(op: str, a: float, b: float) -> float:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    if op == "^":
        return _pow(a, b)
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
    raise EngineError(f"unknown operator '{op}'")


def _compile_const(name: str) -> Callable[[Simulation], float]:
    return lambda f: f._const_values[name]


def simulate(
    model: ModelIR,
    seed: int = 0,
    integrator: str = "euler",
    overrides: Optional[Mapping[str, float]] = None,
    stock_initials: Optional[Mapping[str, float]] = None,
) -> Simulation:
    """Run a model from start to stop and return the finished simulation."""
    sim = Simulation(model, seed=seed, integrator=integrator,
                     overrides=overrides, stock_initials=stock_initials)
    return sim.run_to_end()

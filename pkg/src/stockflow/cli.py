"""Command-line front door.

Exit codes: 0 success, 1 runtime error, 2 configuration or parse error.
All randomness flows from the seeds given on the command line or in the
config file; identical invocations write byte-identical data outputs.
(The run manifest records wall-clock time and is metadata, not data.)
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from . import agents as agents_mod
from . import models as bundled
from .engine import Simulation
from .env import EnvConfig, SimEnv
from .errors import (
    ActionError,
    ConfigError,
    EngineError,
    EnvError,
    ExpressionError,
    ModelError,
    StockflowError,
    XmileError,
)
from .ir import constant_converters, model_to_json, validate
from .xmile import parse_xmile

_CONFIG_ERRORS = (ConfigError, ModelError, XmileError, ExpressionError)


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write_manifest(out_path: Path, command: str, config_blob: str,
                    seeds: dict, model_file: Path | None,
                    outputs: list[Path], started: float):
    manifest = {
        "command": command,
        "config_hash": _sha256(config_blob.encode("utf-8")),
        "seeds": seeds,
        "model_file_hash": _sha256(model_file.read_bytes()) if model_file else None,
        "outputs": [str(p) for p in outputs],
        "wall_clock_seconds": round(time.monotonic() - started, 6),
    }
    _atomic_write(out_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _resolve_model_path(source: str) -> Path:
    if source.startswith("builtin:"):
        return bundled.model_path(source[len("builtin:"):])
    return Path(source)


def _load_model_or_fail(source: str):
    path = _resolve_model_path(source)
    if not path.is_file():
        raise ConfigError(f"model file not found: {path}")
    result = parse_xmile(path.read_text(encoding="utf-8"))
    if result.model is None:
        raise XmileError(result.diagnostics)
    for diag in result.diagnostics:
        print(f"{path}:{diag}", file=sys.stderr)
    return result.model, path


def _parse_overrides(pairs: list[str]) -> dict[str, float]:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--set expects var=value, got '{pair}'")
        name, _, raw = pair.partition("=")
        try:
            overrides[name.strip()] = float(raw)
        except ValueError:
            raise ConfigError(f"--set value for '{name}' is not a number: '{raw}'")
    return overrides


# --- subcommands -------------------------------------------------------------


def cmd_simulate(args) -> int:
    started = time.monotonic()
    model, path = _load_model_or_fail(args.model)
    overrides = _parse_overrides(args.set or [])
    sim = Simulation(model, seed=args.seed, integrator=args.integrator,
                     overrides=overrides)
    sim.run_to_end()
    outputs = []
    if args.csv:
        out = Path(args.csv)
        _atomic_write(out, sim.csv_text())
        outputs.append(out)
        manifest_path = out.with_suffix(out.suffix + ".manifest.json")
        config_blob = json.dumps({
            "model": str(path), "seed": args.seed, "integrator": args.integrator,
            "set": sorted(overrides.items()),
        }, sort_keys=True)
        _write_manifest(manifest_path, "simulate", config_blob,
                        {"seed": args.seed}, path, outputs, started)
    else:
        sys.stdout.write(sim.csv_text())
    return 0


def cmd_inspect(args) -> int:
    model, _ = _load_model_or_fail(args.model)
    if args.json:
        sys.stdout.write(model_to_json(model))
        return 0
    diags = validate(model)
    print(f"variables: {len(model.variables)}")
    width = max(len(n) for n in model.variables)
    for name in sorted(model.variables):
        var = model.variables[name]
        parts = [f"  {name:<{width}}  {var.kind.value}"]
        if var.units:
            parts.append(f"[{var.units}]")
        if var.limits:
            parts.append(f"limits {var.limits[0]:g}..{var.limits[1]:g}")
        if var.non_negative:
            parts.append("non-negative")
        print(" ".join(parts))
    print("constant converters (injectable):")
    for name in constant_converters(model):
        print(f"  {name}")
    print("dependency order:")
    print("  " + " -> ".join(model.dependency_order))
    for diag in diags:
        print(str(diag), file=sys.stderr)
    return 0


def _config_from_args(args) -> tuple[EnvConfig, str]:
    raw = args.config
    if raw.startswith("builtin:"):
        path = bundled.config_path(raw[len("builtin:"):])
    else:
        path = Path(raw)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    blob = path.read_text(encoding="utf-8")
    return EnvConfig.from_json(blob), blob


def _make_agent(env: SimEnv, spec: str, seed: int):
    if spec == "noop":
        return agents_mod.NoopAgent(env)
    if spec == "random":
        return agents_mod.RandomAgent(env, seed=seed)
    policy_path = Path(spec)
    if not policy_path.is_file():
        raise ConfigError(f"--agent must be noop, random, or a policy file; "
                          f"'{spec}' not found")
    return agents_mod.PolicyAgent(agents_mod.Policy.load(policy_path))


def cmd_episode(args) -> int:
    started = time.monotonic()
    config, blob = _config_from_args(args)
    env = SimEnv(config)
    agent = _make_agent(env, args.agent, args.agent_seed)
    result = agents_mod.run_episode(env, agent, episode=args.episode)
    outputs = []
    if args.csv:
        out = Path(args.csv)
        _atomic_write(out, env.simulation.csv_text())
        outputs.append(out)
    summary = {
        "return": result.episode_return,
        "steps": result.steps,
        "seed": result.seed,
        "agent": args.agent,
        "agent_seed": args.agent_seed,
        "episode": env.episode_index,
        "injections_per_step": result.injections_per_step,
        "rewards": result.rewards,
    }
    summary_text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if args.summary:
        out = Path(args.summary)
        _atomic_write(out, summary_text)
        outputs.append(out)
    else:
        sys.stdout.write(summary_text)
    if outputs:
        manifest_path = outputs[0].with_suffix(outputs[0].suffix + ".manifest.json")
        _write_manifest(manifest_path, "episode", blob,
                        {"config_seed": config.seed, "agent_seed": args.agent_seed,
                         "episode": env.episode_index},
                        None, outputs, started)
    return 0


def cmd_train(args) -> int:
    started = time.monotonic()
    config, blob = _config_from_args(args)
    if config.reward is None:
        raise ConfigError("training needs a reward in the config")
    env = SimEnv(config)
    if args.iters == 0:
        policy = agents_mod.initial_policy(env, seed=args.seed)
        report = agents_mod.TrainReport(base_seed=args.seed, env_seed=config.seed)
    else:
        policy, report = agents_mod.cem_train(
            env, iterations=args.iters, population=args.pop,
            elite_fraction=args.elite, seed=args.seed)
    out = Path(args.out)
    policy.save(out)
    outputs = [out]
    if args.report:
        report_path = Path(args.report)
        _atomic_write(report_path, report.to_jsonl())
        outputs.append(report_path)
    if report.generations:
        last = report.generations[-1]
        print(f"trained {args.iters} generations; "
              f"best return {last.best_return:.6g}, "
              f"final mean return {last.mean_return:.6g}")
    else:
        print("wrote initial (untrained) policy")
    manifest_path = out.with_suffix(out.suffix + ".manifest.json")
    _write_manifest(manifest_path, "train", blob,
                    {"train_seed": args.seed, "config_seed": config.seed},
                    None, outputs, started)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stockflow",
        description="Simulate stock-and-flow models and run RL episodes over them.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a model start to stop")
    p.add_argument("model", help="XMILE file path or builtin:<name>")
    p.add_argument("--integrator", choices=["euler", "rk4"], default="euler")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--set", action="append", metavar="VAR=VALUE",
                   help="override a constant converter (repeatable)")
    p.add_argument("--csv", help="write the trajectory CSV here (default: stdout)")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("inspect", help="print a model's variables and structure")
    p.add_argument("model", help="XMILE file path or builtin:<name>")
    p.add_argument("--json", action="store_true", help="emit the IR as JSON")
    p.set_defaults(fn=cmd_inspect)

    p = sub.add_parser("episode", help="run one environment episode")
    p.add_argument("config", help="env config JSON path or builtin:<name>")
    p.add_argument("--agent", default="noop",
                   help="noop, random, or a policy JSON file")
    p.add_argument("--agent-seed", type=int, default=0)
    p.add_argument("--episode", type=int, default=None,
                   help="episode index (engine seed = config seed + index)")
    p.add_argument("--csv", help="write the trajectory CSV here")
    p.add_argument("--summary", help="write the episode summary JSON here")
    p.set_defaults(fn=cmd_episode)

    p = sub.add_parser("train", help="cross-entropy policy search")
    p.add_argument("config", help="env config JSON path or builtin:<name>")
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--pop", type=int, default=16)
    p.add_argument("--elite", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="write the policy JSON here")
    p.add_argument("--report", help="write per-generation JSONL here")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except XmileError as exc:
        for diag in exc.diagnostics:
            print(str(diag), file=sys.stderr)
        print("error: model did not parse", file=sys.stderr)
        return 2
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (EngineError, ActionError, EnvError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except StockflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

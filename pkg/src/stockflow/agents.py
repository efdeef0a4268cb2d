"""Baseline decision-makers: no-op, uniform random, and a cross-entropy
policy search over a linear tanh policy.

The trainer is deliberately derivative-free and fully seeded, so a
(config, seeds) pair reproduces the exact same report.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .env import SimEnv
from .errors import ConfigError

log = logging.getLogger(__name__)


class _RunningStats:
    """Welford accumulator for per-component observation mean/std."""

    def __init__(self, dim: int):
        self.count = 0
        self.mean = np.zeros(dim)
        self._m2 = np.zeros(dim)

    def update(self, x: np.ndarray):
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self._m2 = self._m2 + delta * (x - self.mean)

    def std(self) -> np.ndarray:
        if self.count < 2:
            return np.ones_like(self.mean)
        return np.maximum(np.sqrt(self._m2 / self.count), 1e-8)


@dataclass
class Policy:
    """Linear map from a z-normalized observation to a flat action in
    (-1, 1)^n via tanh squashing."""

    weights: np.ndarray  # (action_dim, obs_dim)
    bias: np.ndarray  # (action_dim,)
    obs_mean: np.ndarray
    obs_std: np.ndarray

    def act(self, observation: np.ndarray) -> np.ndarray:
        z = (np.asarray(observation, dtype=float) - self.obs_mean) / self.obs_std
        return np.tanh(self.weights @ z + self.bias)

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([self.weights.reshape(-1), self.bias])

    @classmethod
    def from_theta(cls, theta: np.ndarray, obs_dim: int, action_dim: int,
                   obs_mean: np.ndarray, obs_std: np.ndarray) -> "Policy":
        split = obs_dim * action_dim
        weights = np.asarray(theta[:split], dtype=float).reshape(action_dim, obs_dim)
        bias = np.asarray(theta[split:split + action_dim], dtype=float)
        return cls(weights, bias, np.asarray(obs_mean, float), np.asarray(obs_std, float))

    def snapshot_id(self) -> str:
        digest = hashlib.sha256(self.theta.tobytes()).hexdigest()
        return digest[:12]

    def to_json_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "obs_mean": self.obs_mean.tolist(),
            "obs_std": self.obs_std.tolist(),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Policy":
        return cls(
            weights=np.asarray(data["weights"], dtype=float),
            bias=np.asarray(data["bias"], dtype=float),
            obs_mean=np.asarray(data["obs_mean"], dtype=float),
            obs_std=np.asarray(data["obs_std"], dtype=float),
        )

    def save(self, path: Union[str, Path]):
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Policy":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class NoopAgent:
    """Gates every variable off so the episode is the pure simulation.

    Only meaningful on a parameterized action space.
    """

    def __init__(self, env: SimEnv):
        if not env.config.parameterize_action_space:
            raise ConfigError(
                "a no-op agent needs parameterize_action_space=true; without "
                "gates every step must inject something")
        if env.flat_space is not None:
            action = np.zeros(env.flat_space.width)
            for i, label in enumerate(env.flat_space.labels):
                if label.endswith(".gate"):
                    action[i] = -1.0
            self._action = action
        else:
            self._action = {s.variable: (0, s.low if s.kind != "categorical" else 0)
                            for s in env.action_specs}

    def act(self, observation) -> np.ndarray:
        return self._action


class RandomAgent:
    """Uniform samples over the flat action cube [-1, 1]^n."""

    def __init__(self, env: SimEnv, seed: int = 0):
        if env.flat_space is None:
            raise ConfigError("the random agent needs flatten_spaces=true")
        self.width = env.flat_space.width
        self.rng = np.random.default_rng(seed)

    def act(self, observation) -> np.ndarray:
        return self.rng.uniform(-1.0, 1.0, self.width)


class PolicyAgent:
    def __init__(self, policy: Policy):
        self.policy = policy

    def act(self, observation) -> np.ndarray:
        return self.policy.act(observation)


@dataclass
class EpisodeResult:
    episode_return: float
    steps: int
    seed: int
    actions: list
    rewards: list[float]
    final_values: dict[str, float]
    injections_per_step: list[dict]


def run_episode(env: SimEnv, agent, episode: Optional[int] = None) -> EpisodeResult:
    """Roll one full episode and collect its summary."""
    observation = env.reset(episode=episode)
    total = 0.0
    actions = []
    rewards = []
    injections = []
    done = False
    while not done:
        action = agent.act(observation)
        transition = env.step(action)
        observation = transition.observation
        total += transition.reward
        actions.append(np.asarray(action).tolist() if not isinstance(action, dict) else action)
        rewards.append(transition.reward)
        injections.append(transition.info["injections"])
        done = transition.done
    return EpisodeResult(
        episode_return=total,
        steps=len(rewards),
        seed=env.config.seed + (env.episode_index or 0),
        actions=actions,
        rewards=rewards,
        final_values=env.simulation.values,
        injections_per_step=injections,
    )


@dataclass
class GenerationStats:
    iteration: int
    mean_return: float
    max_return: float
    elite_mean: float
    best_return: float
    snapshot_id: str
    episode: int
    discarded: int = 0


@dataclass
class TrainReport:
    base_seed: int
    env_seed: int
    generations: list[GenerationStats] = field(default_factory=list)

    def to_jsonl(self) -> str:
        lines = []
        for g in self.generations:
            lines.append(json.dumps({
                "iteration": g.iteration,
                "mean_return": g.mean_return,
                "max_return": g.max_return,
                "elite_mean": g.elite_mean,
                "best_return": g.best_return,
                "snapshot_id": g.snapshot_id,
                "episode": g.episode,
                "discarded": g.discarded,
            }, sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")


def initial_policy(env: SimEnv, seed: int) -> Policy:
    """Seed-pinned random policy; doubles as the untrained control."""
    if env.flat_space is None:
        raise ConfigError("policy training needs flatten_spaces=true")
    obs_dim = len(env.observation_names)
    action_dim = env.flat_space.width
    rng = np.random.default_rng(seed)
    theta = rng.normal(0.0, 1.0, obs_dim * action_dim + action_dim)
    return Policy.from_theta(theta, obs_dim, action_dim,
                             np.zeros(obs_dim), np.ones(obs_dim))


def cem_train(
    env: SimEnv,
    iterations: int,
    population: int = 16,
    elite_fraction: float = 0.25,
    seed: int = 0,
    sigma_init: float = 1.0,
    sigma_floor: float = 0.01,
) -> tuple[Policy, TrainReport]:
    """Cross-entropy search over policy parameters.

    Every candidate in a generation is scored on the same episode index,
    so they face identical stochasticity; observation normalization uses
    running statistics that are frozen for the duration of a generation.
    Non-finite episode returns discard the sample with a warning.
    """
    if population < 8:
        raise ConfigError("population must be at least 8")
    if not 0.0 < elite_fraction <= 0.5:
        raise ConfigError("elite_fraction must be in (0, 0.5]")
    if env.flat_space is None:
        raise ConfigError("policy training needs flatten_spaces=true")

    obs_dim = len(env.observation_names)
    action_dim = env.flat_space.width
    theta_dim = obs_dim * action_dim + action_dim
    n_elite = max(1, int(round(population * elite_fraction)))

    rng = np.random.default_rng(seed)
    mu = np.zeros(theta_dim)
    sigma = np.full(theta_dim, float(sigma_init))
    stats = _RunningStats(obs_dim)

    report = TrainReport(base_seed=seed, env_seed=env.config.seed)
    best_theta = rng.normal(0.0, 1.0, theta_dim)  # the untrained starting point
    best_mean = np.zeros(obs_dim)
    best_std = np.ones(obs_dim)
    best_return = -np.inf

    for iteration in range(iterations):
        obs_mean = stats.mean.copy()
        obs_std = stats.std()
        thetas = mu + sigma * rng.standard_normal((population, theta_dim))
        retained = iteration > 0 and np.isfinite(best_return)
        if retained:
            # elite retention: the incumbent best competes in every generation
            thetas[-1] = best_theta
        returns = np.empty(population)
        discarded = 0
        for i in range(population):
            policy = Policy.from_theta(thetas[i], obs_dim, action_dim, obs_mean, obs_std)
            observation = env.reset(episode=iteration)
            total = 0.0
            done = False
            while not done:
                stats.update(observation)
                transition = env.step(policy.act(observation))
                observation = transition.observation
                total += transition.reward
                done = transition.done
            if not np.isfinite(total):
                log.warning("discarding candidate %d of generation %d: return %r",
                            i, iteration, total)
                discarded += 1
                total = -np.inf
            returns[i] = total

        if retained and np.isfinite(returns[-1]):
            # re-estimate the incumbent on this generation's episode so a
            # lucky score on an earlier episode cannot block improvements
            best_return = float(returns[-1])
        ranked = np.argsort(-returns, kind="stable")
        elite = [i for i in ranked[:n_elite] if np.isfinite(returns[i])]
        if elite:
            elite_thetas = thetas[elite]
            mu = elite_thetas.mean(axis=0)
            sigma = np.maximum(elite_thetas.std(axis=0), sigma_floor)
            if returns[elite[0]] > best_return:
                best_return = float(returns[elite[0]])
                best_theta = thetas[elite[0]].copy()
                best_mean = obs_mean
                best_std = obs_std
        finite = returns[np.isfinite(returns)]
        elite_returns = returns[elite] if elite else np.array([np.nan])
        generation = GenerationStats(
            iteration=iteration,
            mean_return=float(finite.mean()) if finite.size else float("nan"),
            max_return=float(finite.max()) if finite.size else float("nan"),
            elite_mean=float(elite_returns.mean()),
            best_return=float(best_return) if np.isfinite(best_return) else float("nan"),
            snapshot_id=hashlib.sha256(mu.tobytes()).hexdigest()[:12],
            episode=iteration,
            discarded=discarded,
        )
        report.generations.append(generation)

    policy = Policy.from_theta(best_theta, obs_dim, action_dim, best_mean, best_std)
    return policy, report

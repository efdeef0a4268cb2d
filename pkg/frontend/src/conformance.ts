/** Environment-API conformance checks.
 *
 * Mirrors the usual checklist RL frameworks run against a new env:
 * space descriptors are sane, reset/step return well-typed values of
 * stable shape, episodes terminate, misuse raises.
 */

import { BoundEnv } from "./boundEnv";

export interface ConformanceReport {
  passed: string[];
}

function check(condition: boolean, label: string, passed: string[]): void {
  if (!condition) {
    throw new Error(`environment API conformance failed: ${label}`);
  }
  passed.push(label);
}

function isFiniteVector(xs: unknown, length: number): boolean {
  return (
    Array.isArray(xs) &&
    xs.length === length &&
    xs.every((v) => typeof v === "number" && Number.isFinite(v))
  );
}

export async function checkEnv(env: BoundEnv, episode = 0): Promise<ConformanceReport> {
  const passed: string[] = [];

  check(env.actionSpace.width > 0, "action space has positive width", passed);
  check(
    env.actionSpace.low === -1 && env.actionSpace.high === 1,
    "flat action space is the [-1, 1] box",
    passed,
  );
  check(env.observationLength > 0, "observation space has positive length", passed);
  check(
    env.observationNames.length === env.observationLength,
    "observation names match the declared length",
    passed,
  );
  const actionableNames = new Set(env.actionSpecs.map((s) => s.variable));
  check(
    env.observationNames.every((name) => !actionableNames.has(name)),
    "no actionable variable appears among the observations",
    passed,
  );
  check(
    env.actionSpecs.every((s) =>
      ["continuous", "discrete", "categorical"].includes(s.kind),
    ),
    "action kinds use the mathematical terminology",
    passed,
  );

  const first = await env.reset(episode);
  check(isFiniteVector(first, env.observationLength), "reset returns a finite observation", passed);
  const again = await env.reset(episode);
  check(
    first.every((v, i) => v === again[i]),
    "resetting the same episode reproduces the observation exactly",
    passed,
  );

  const zero = new Array<number>(env.actionSpace.width).fill(0);
  let steps = 0;
  let terminated = false;
  let lastObservation = again;
  while (!terminated) {
    const transition = await env.step(zero);
    check(
      isFiniteVector(transition.observation, env.observationLength),
      `step ${steps} returns a finite observation of stable shape`,
      passed,
    );
    check(
      typeof transition.reward === "number" && Number.isFinite(transition.reward),
      `step ${steps} returns a finite numeric reward`,
      passed,
    );
    check(typeof transition.terminated === "boolean", `step ${steps} returns a boolean flag`, passed);
    check(typeof transition.info === "object", `step ${steps} returns an info object`, passed);
    terminated = transition.terminated;
    lastObservation = transition.observation;
    steps += 1;
    check(steps <= env.episodeSteps, "episode does not overrun its declared length", passed);
  }
  check(steps === env.episodeSteps, "episode terminates exactly at the declared length", passed);
  check(lastObservation.length === env.observationLength, "final observation keeps its shape", passed);

  let threw = false;
  try {
    await env.step(zero);
  } catch {
    threw = true;
  }
  check(threw, "stepping a finished episode throws", passed);

  await env.reset(episode);
  threw = false;
  try {
    const outOfRange = new Array<number>(env.actionSpace.width).fill(0);
    outOfRange[0] = 2.0;
    await env.step(outOfRange);
  } catch {
    threw = true;
  }
  check(threw, "out-of-range actions throw instead of clipping", passed);

  // dedupe the per-step labels for a compact report
  return { passed: [...new Set(passed)] };
}

import { afterEach, beforeAll, describe, expect, it } from "vitest";

import { BoundEnv } from "../src/boundEnv";
import { StockflowClient } from "../src/client";
import { checkEnv } from "../src/conformance";
import { ServiceError } from "../src/types";

const PORT = Number(process.env.STOCKFLOW_PORT ?? 8977);
const client = new StockflowClient(`http://127.0.0.1:${PORT}`);

let config: Record<string, unknown>;
const openEnvs: BoundEnv[] = [];

async function makeEnv(cfg: Record<string, unknown> | string = config): Promise<BoundEnv> {
  const env = await BoundEnv.create(client, cfg);
  openEnvs.push(env);
  return env;
}

beforeAll(async () => {
  expect(await client.health()).toBe(true);
  config = await client.exampleConfig("ev_adoption_train");
});

afterEach(async () => {
  while (openEnvs.length > 0) {
    await openEnvs.pop()?.close();
  }
});

describe("space descriptors", () => {
  it("exposes the flat [-1,1] action box and unbounded observations", async () => {
    const env = await makeEnv();
    // 9 actionables, parameterized: gate+value per variable
    expect(env.actionSpace.width).toBe(18);
    expect(env.actionSpace.low).toBe(-1);
    expect(env.actionSpace.high).toBe(1);
    // every model variable that is not actionable is observable
    expect(env.observationLength).toBe(27);
    expect(env.observationNames.length).toBe(27);
    expect(env.episodeSteps).toBe(20);
    expect(env.parameterized).toBe(true);
  });

  it("reports action kinds in the mathematical terminology", async () => {
    const env = await makeEnv();
    const kinds = env.actionSpecs.map((s) => s.kind).sort();
    expect(kinds.filter((k) => k === "continuous")).toHaveLength(6);
    expect(kinds.filter((k) => k === "discrete")).toHaveLength(1);
    expect(kinds.filter((k) => k === "categorical")).toHaveLength(2);
  });
});

describe("binding transparency", () => {
  it("replays a recorded episode bit-for-bit, CSV included", async () => {
    const recording = await client.runEpisode(config, "random", 5, 0);
    expect(recording.steps).toBe(20);

    const env = await makeEnv();
    await env.reset(0);
    let total = 0;
    for (let k = 0; k < recording.actions.length; k += 1) {
      const transition = await env.step(recording.actions[k]);
      const expected = recording.transitions[k];
      // JSON carries doubles exactly; === is the bit-for-bit check
      expect(transition.observation).toEqual(expected.observation);
      expect(transition.reward).toBe(expected.reward);
      expect(transition.terminated).toBe(expected.done);
      total += transition.reward;
    }
    expect(total).toBe(recording.episode_return);

    const csv = await env.historyCsv();
    expect(csv).toBe(recording.csv);
  });

  it("reproduces the same episode when driven twice with the same seeds", async () => {
    const env = await makeEnv();
    const a = await env.reset(3);
    const b = await env.reset(3);
    expect(a).toEqual(b);
    const zero = new Array(env.actionSpace.width).fill(0);
    const first = await env.step(zero);
    await env.reset(3);
    const second = await env.step(zero);
    expect(second.observation).toEqual(first.observation);
    expect(second.reward).toBe(first.reward);
  });

  it("keeps the reward telescoping invariant through the boundary", async () => {
    const env = await makeEnv();
    const { keyed } = await env.resetKeyed(1);
    const share = (k: Record<string, number>) =>
      (k.ec_in_use / (k.ec_in_use + k.pc_in_use)) * 100;
    const initialShare = share(keyed);
    let total = 0;
    let last = keyed;
    let terminated = false;
    // a mildly adventurous deterministic action pattern
    const action = new Array<number>(env.actionSpace.width).fill(0);
    env.actionSpace.labels.forEach((label, i) => {
      if (label.endsWith(".gate")) action[i] = i % 4 === 0 ? 1 : -1;
    });
    while (!terminated) {
      const transition = await env.step(action);
      total += transition.reward;
      last = transition.info.keyedObservation;
      terminated = transition.terminated;
    }
    expect(Math.abs(total - (share(last) - initialShare))).toBeLessThan(1e-9);
  });
});

describe("environment API conformance", () => {
  it("passes the standard checklist", async () => {
    const env = await makeEnv();
    const report = await checkEnv(env, 0);
    expect(report.passed.length).toBeGreaterThan(10);
  });
});


describe("config sources", () => {
  it("accepts a JSON string and a file path; bad paths throw", async () => {
    const viaString = await makeEnv(JSON.stringify(config));
    expect(viaString.actionSpace.width).toBe(18);

    const path = new URL("./tmp_config.json", import.meta.url).pathname;
    const { writeFileSync, rmSync } = await import("node:fs");
    writeFileSync(path, JSON.stringify(config));
    try {
      const viaFile = await makeEnv(path);
      expect(viaFile.episodeSteps).toBe(20);
    } finally {
      rmSync(path);
    }

    await expect(BoundEnv.create(client, "/no/such/config.json")).rejects.toThrow();
  });
});

describe("error surfacing", () => {
  it("raises the native message for a broken config", async () => {
    await expect(
      BoundEnv.create(client, { model: "builtin:decay", env_step: 0.15 }),
    ).rejects.toMatchObject({ kind: "ConfigError" });
  });

  it("raises on stepping a finished episode", async () => {
    const env = await makeEnv({ ...config, model: "builtin:ev_adoption" });
    await env.reset(0);
    const zero = new Array(env.actionSpace.width).fill(0);
    for (let k = 0; k < env.episodeSteps; k += 1) {
      await env.step(zero);
    }
    await expect(env.step(zero)).rejects.toThrow(/done/);
  });

  it("raises the native message for out-of-range actions", async () => {
    const env = await makeEnv();
    await env.reset(0);
    const bad = new Array(env.actionSpace.width).fill(0);
    bad[0] = 1.5;
    await expect(env.step(bad)).rejects.toMatchObject({ kind: "ActionError" });
    await env.close();
    openEnvs.pop();
  });

  it("surfaces unknown-session errors", async () => {
    await expect(client.resetEnv("nope", 0)).rejects.toMatchObject({
      status: 404,
    });
  });

  it("rejects non-flattened configs binding-side", async () => {
    await expect(
      makeEnv({ ...config, flatten_spaces: false }),
    ).rejects.toThrow(/flatten_spaces/);
  });
});

/** Gym-style environment facade over one service session.
 *
 * The binding holds no simulation state of its own: everything besides
 * the cached space descriptors (and a `terminated` latch derived from the
 * last step) lives in the native environment behind the service.
 */

import { readFileSync } from "node:fs";

import { StockflowClient } from "./client";
import { ActionSpecInfo, EnvDescription, Transition } from "./types";

/** Accepts a config object, a JSON string, or a path to a JSON file. */
export function resolveConfig(
  source: Record<string, unknown> | string,
): Record<string, unknown> {
  if (typeof source !== "string") {
    return source;
  }
  const trimmed = source.trim();
  const text = trimmed.startsWith("{") ? trimmed : readFileSync(source, "utf-8");
  return JSON.parse(text) as Record<string, unknown>;
}

export interface FlatActionSpace {
  /** Flat continuous action box: `width` components in [low, high]. */
  width: number;
  low: number;
  high: number;
  labels: string[];
}

export class BoundEnv {
  readonly actionSpace: FlatActionSpace;
  readonly observationLength: number;
  readonly observationNames: string[];
  readonly actionSpecs: ActionSpecInfo[];
  readonly episodeSteps: number;
  readonly parameterized: boolean;

  private terminated_ = true; // until the first reset
  private everReset = false;

  private constructor(
    private readonly client: StockflowClient,
    private readonly envId: string,
    description: EnvDescription,
  ) {
    if (description.flat === null) {
      throw new Error(
        "the binding exposes only flattened action spaces; set flatten_spaces=true",
      );
    }
    this.actionSpace = {
      width: description.flat.width,
      low: description.flat.low,
      high: description.flat.high,
      labels: description.flat.labels,
    };
    this.observationLength = description.observation_length;
    this.observationNames = description.observation_names;
    this.actionSpecs = description.action_specs;
    this.episodeSteps = description.episode_steps;
    this.parameterized = description.parameterized;
  }

  static async create(
    client: StockflowClient,
    config: Record<string, unknown> | string,
  ): Promise<BoundEnv> {
    const description = await client.createEnv(resolveConfig(config));
    return new BoundEnv(client, description.env_id, description);
  }

  get id(): string {
    return this.envId;
  }

  get terminated(): boolean {
    return this.terminated_;
  }

  async reset(episode?: number): Promise<number[]> {
    const result = await this.client.resetEnv(this.envId, episode);
    this.terminated_ = false;
    this.everReset = true;
    return result.observation;
  }

  async resetKeyed(episode?: number): Promise<{ observation: number[]; keyed: Record<string, number> }> {
    const result = await this.client.resetEnv(this.envId, episode);
    this.terminated_ = false;
    this.everReset = true;
    return { observation: result.observation, keyed: result.keyed_observation };
  }

  async step(action: number[]): Promise<Transition> {
    if (!this.everReset) {
      throw new Error("step() before reset()");
    }
    if (this.terminated_) {
      throw new Error("episode is done; call reset() before stepping again");
    }
    const result = await this.client.stepEnv(this.envId, action);
    this.terminated_ = result.done;
    return {
      observation: result.observation,
      reward: result.reward,
      terminated: result.done,
      info: {
        time: result.time,
        keyedObservation: result.keyed_observation,
        injections: result.injections,
      },
    };
  }

  /** Trajectory CSV of the current episode, produced by the native engine. */
  historyCsv(): Promise<string> {
    return this.client.historyCsv(this.envId);
  }

  async close(): Promise<void> {
    await this.client.deleteEnv(this.envId);
  }
}

/** Wire types for the stockflow environment service. */

export interface ActionSpecInfo {
  variable: string;
  kind: "continuous" | "discrete" | "categorical";
  min?: number | null;
  max?: number | null;
  categories?: number[] | null;
}

export interface FlatSpaceInfo {
  width: number;
  labels: string[];
  low: number;
  high: number;
}

export interface EnvDescription {
  env_id: string;
  action_specs: ActionSpecInfo[];
  flat: FlatSpaceInfo | null;
  observation_names: string[];
  observation_length: number;
  episode_steps: number;
  parameterized: boolean;
}

export interface ResetResult {
  observation: number[];
  keyed_observation: Record<string, number>;
  time: number;
  episode: number;
}

export interface StepResult {
  observation: number[];
  reward: number;
  done: boolean;
  time: number;
  keyed_observation: Record<string, number>;
  injections: Record<string, number>;
}

export interface TransitionRecord {
  observation: number[];
  reward: number;
  done: boolean;
}

export interface EpisodeRecording {
  actions: number[][];
  transitions: TransitionRecord[];
  episode_return: number;
  steps: number;
  engine_seed: number;
  csv: string;
}

/** Gym-style step tuple produced by the binding. */
export interface Transition {
  observation: number[];
  reward: number;
  terminated: boolean;
  info: {
    time: number;
    keyedObservation: Record<string, number>;
    injections: Record<string, number>;
  };
}

export class ServiceError extends Error {
  readonly status: number;
  readonly kind: string;
  readonly diagnostics: string[];

  constructor(status: number, kind: string, message: string, diagnostics: string[] = []) {
    super(message);
    this.name = "ServiceError";
    this.status = status;
    this.kind = kind;
    this.diagnostics = diagnostics;
  }
}

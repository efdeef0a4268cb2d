/** Thin HTTP client for the stockflow service. */

import {
  EnvDescription,
  EpisodeRecording,
  ResetResult,
  ServiceError,
  StepResult,
} from "./types";

async function parseError(response: Response): Promise<ServiceError> {
  let kind = "HttpError";
  let message = `${response.status} ${response.statusText}`;
  let diagnostics: string[] = [];
  try {
    const body = await response.json();
    const detail = body.detail ?? body;
    if (typeof detail === "object" && detail !== null) {
      kind = detail.error ?? kind;
      message = detail.message ?? JSON.stringify(detail);
      diagnostics = detail.diagnostics ?? [];
    } else if (typeof detail === "string") {
      message = detail;
    }
  } catch {
    /* non-JSON body: keep the status line */
  }
  return new ServiceError(response.status, kind, message, diagnostics);
}

export class StockflowClient {
  constructor(readonly baseUrl: string) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  async health(): Promise<boolean> {
    try {
      const response = await fetch(`${this.baseUrl}/health`);
      return response.ok;
    } catch {
      return false;
    }
  }

  exampleConfig(name: string): Promise<Record<string, unknown>> {
    return this.request("GET", `/examples/configs/${name}`);
  }

  createEnv(config: Record<string, unknown>): Promise<EnvDescription> {
    return this.request("POST", "/envs", { config });
  }

  resetEnv(envId: string, episode?: number): Promise<ResetResult> {
    return this.request("POST", `/envs/${envId}/reset`, { episode });
  }

  stepEnv(envId: string, action: number[]): Promise<StepResult> {
    return this.request("POST", `/envs/${envId}/step`, { action });
  }

  async historyCsv(envId: string): Promise<string> {
    const response = await fetch(`${this.baseUrl}/envs/${envId}/history.csv`);
    if (!response.ok) {
      throw await parseError(response);
    }
    return await response.text();
  }

  async deleteEnv(envId: string): Promise<void> {
    await this.request("DELETE", `/envs/${envId}`);
  }

  runEpisode(
    config: Record<string, unknown>,
    agent: "noop" | "random",
    agentSeed = 0,
    episode?: number,
  ): Promise<EpisodeRecording> {
    return this.request("POST", "/episodes/run", {
      config,
      agent,
      agent_seed: agentSeed,
      episode,
    });
  }
}

/** Spawns the Python service for the test run and tears it down after. */

import { spawn, ChildProcess } from "node:child_process";

const PORT = Number(process.env.STOCKFLOW_PORT ?? 8977);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | undefined;

async function healthy(): Promise<boolean> {
  try {
    const response = await fetch(`${BASE}/health`);
    return response.ok;
  } catch {
    return false;
  }
}

export default async function setup(): Promise<() => Promise<void>> {
  if (!(await healthy())) {
    server = spawn(
      process.env.STOCKFLOW_PYTHON ?? "python3",
      ["-m", "stockflow.service", "--port", String(PORT)],
      { stdio: ["ignore", "ignore", "pipe"] },
    );
    let stderr = "";
    server.stderr?.on("data", (chunk) => {
      stderr += String(chunk);
    });
    for (let attempt = 0; attempt < 100; attempt += 1) {
      if (await healthy()) {
        break;
      }
      if (server.exitCode !== null) {
        throw new Error(`service exited with code ${server.exitCode}:\n${stderr}`);
      }
      await new Promise((resolve) => setTimeout(resolve, 200));
    }
    if (!(await healthy())) {
      server.kill();
      throw new Error(`service did not come up on ${BASE}:\n${stderr}`);
    }
  }
  return async () => {
    server?.kill();
  };
}

/** Spawn a real gateway process for end-to-end tests. */

import { spawn, type ChildProcess } from "node:child_process";

export interface LiveGateway {
  baseUrl: string;
  process: ChildProcess;
  stop: () => void;
}

export async function startGateway(port: number): Promise<LiveGateway> {
  const child = spawn(
    "python3",
    [
      "-m",
      "cardless.gateway.main",
      "--listen",
      `127.0.0.1:${port}`,
      "--seed",
      "9",
      "--he-bits",
      "256",
      "--approval-timeout",
      "30",
    ],
    { stdio: ["ignore", "pipe", "pipe"], cwd: ".." },
  );
  let stderr = "";
  child.stderr?.on("data", (chunk) => {
    stderr += String(chunk);
  });

  const baseUrl = `http://127.0.0.1:${port}`;
  const deadline = Date.now() + 45_000;
  while (Date.now() < deadline) {
    if (child.exitCode !== null) {
      throw new Error(`gateway exited early (${child.exitCode}): ${stderr}`);
    }
    try {
      const response = await fetch(`${baseUrl}/api/login`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ username: "probe", password: "probe" }),
      });
      if (response.status === 401 || response.status === 200) {
        return { baseUrl, process: child, stop: () => child.kill() };
      }
    } catch {
      /* not listening yet */
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
  child.kill();
  throw new Error(`gateway never became ready: ${stderr}`);
}

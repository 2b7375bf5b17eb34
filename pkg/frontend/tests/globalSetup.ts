// Boots the primary component (the Python HTTP server) with one project:
// a synthetic slide plus an external detector that emits a fixed score
// ladder, so threshold behavior is fully predictable.

import { spawn, spawnSync, ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync, rmSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import type { GlobalSetupContext } from "vitest/node";

export interface ServerInfo {
  baseUrl: string;
  projectId: string;
  slideId: string;
}

declare module "vitest" {
  export interface ProvidedContext {
    server: ServerInfo;
  }
}

const PYTHON = process.env.LOOPCURATE_PYTHON ?? "python3";
const CLASS_CONFIG = "g\tGDG\tGlobal Disappearing Glomerulosclerosis\no\tGOG\tGlobal Obsolescent Glomerulosclerosis\n";

// 12 machine detections, ids 1..12, scores covering the slider range with an
// exact 0.5 boundary case.
export const DETECTOR_SCORES = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 1.0];

function detectorScript(): string {
  const circles = DETECTOR_SCORES.map((score, i) => {
    const cx = 96 + (i % 4) * 192;
    const cy = 96 + Math.floor(i / 4) * 192;
    return `    <Circle cx="${cx}" cy="${cy}" r="40" score="${score}" provenance="MACHINE" id="${i + 1}"/>`;
  }).join("\n");
  return [
    "import sys",
    'xml = """<?xml version="1.0" encoding="UTF-8"?>',
    '<EasierSet slide_id="fixed" threshold="0">',
    "  <Objects>",
    circles,
    "  </Objects>",
    "</EasierSet>",
    '"""',
    "open(sys.argv[2], 'w').write(xml)",
    "",
  ].join("\n");
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createServer();
    probe.listen(0, "127.0.0.1", () => {
      const address = probe.address();
      if (address && typeof address === "object") {
        const port = address.port;
        probe.close(() => resolve(port));
      } else {
        reject(new Error("no port"));
      }
    });
  });
}

async function waitForServer(baseUrl: string, child: ChildProcess, timeoutMs = 60_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (child.exitCode !== null) throw new Error(`server exited early with code ${child.exitCode}`);
    try {
      const resp = await fetch(`${baseUrl}/projects`);
      if (resp.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error("server did not come up in time");
}

export default async function setup({ provide }: GlobalSetupContext): Promise<() => void> {
  const work = mkdtempSync(join(tmpdir(), "loopcurate-ui-"));
  const slideDir = join(work, "slide");

  const synth = spawnSync(
    PYTHON,
    [
      "-m", "loopcurate.cli", "synth",
      "--seed", "21",
      "--disks", "8",
      "--width", "768",
      "--height", "768",
      "--radius-min", "24",
      "--radius-max", "40",
      "--out", slideDir,
    ],
    { encoding: "utf-8" },
  );
  if (synth.status !== 0) {
    throw new Error(`synth failed: ${synth.stderr}\n(is the Python package installed? pip install -e ..)`);
  }

  const script = join(work, "fixed_detector.py");
  writeFileSync(script, detectorScript());

  const port = await freePort();
  const baseUrl = `http://127.0.0.1:${port}`;
  const child = spawn(PYTHON, ["-m", "loopcurate.cli", "serve", "--port", String(port)], {
    env: { ...process.env, LOOPCURATE_ROOT: join(work, "root") },
    stdio: ["ignore", "inherit", "inherit"],
  });
  await waitForServer(baseUrl, child);

  const created = await fetch(`${baseUrl}/projects`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ name: "UI Contract", class_config_text: CLASS_CONFIG, slides: [slideDir] }),
  });
  if (created.status !== 201) throw new Error(`project creation failed: ${await created.text()}`);
  const project = (await created.json()) as { project_id: string; slides: { slide_id: string }[] };

  const loop = await fetch(`${baseUrl}/projects/${project.project_id}/loops`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({
      detector: { kind: "EXTERNAL", params: { command: [PYTHON, script] }, version_tag: "fixed-1" },
    }),
  });
  if (loop.status !== 201) throw new Error(`loop start failed: ${await loop.text()}`);

  provide("server", {
    baseUrl,
    projectId: project.project_id,
    slideId: project.slides[0].slide_id,
  });

  return () => {
    child.kill("SIGTERM");
    rmSync(work, { recursive: true, force: true });
  };
}

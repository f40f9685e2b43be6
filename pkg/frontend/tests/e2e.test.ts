/** Scripted end-to-end session against the live study service.
 *
 * Drives the real client pipeline (api + mjpeg + controller) through a
 * 10-case balanced set, restarts the service to prove response durability,
 * and checks the served report against the offline comparison tool run on
 * the stored responses.
 */
import { spawn, execFileSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, existsSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { SurveyController, type CaseView } from "../src/app.js";
import { fetchFrames } from "../src/mjpeg.js";
import type { CasePayload } from "../src/types.js";

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;
const PYTHON = process.env.PYTHON ?? "python3";

let fixtureDir: string;
let service: ChildProcess | null = null;

function startService(): ChildProcess {
  const child = spawn(PYTHON, [
    "-m", "prognoscope.cli", "serve",
    "--cases", join(fixtureDir, "cases.json"),
    "--tokens", join(fixtureDir, "tokens.json"),
    "--store", join(fixtureDir, "responses.jsonl"),
    "--port", String(PORT),
  ], { stdio: ["ignore", "pipe", "pipe"] });
  child.stderr?.on("data", (d) => process.stderr.write(`[service] ${d}`));
  return child;
}

async function waitReady(timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const resp = await fetch(`${BASE}/api/session`);
      if (resp.status === 401) return; // up, auth required
    } catch {
      /* not up yet */
    }
    if (Date.now() > deadline) throw new Error("service did not come up");
    await new Promise((r) => setTimeout(r, 200));
  }
}

async function stopService(): Promise<void> {
  if (service) {
    service.kill("SIGTERM");
    await new Promise((r) => setTimeout(r, 500));
    service = null;
  }
}

class HeadlessView implements CaseView {
  completions: number[] = [];
  errors: string[] = [];
  showCase(_payload: CasePayload) {}
  setButtonsEnabled(_enabled: boolean) {}
  setVariant(_variant: string) {}
  showCompletion(count: number) { this.completions.push(count); }
  showError(message: string) { this.errors.push(message); }
  clearError() {}
}

beforeAll(async () => {
  fixtureDir = mkdtempSync(join(tmpdir(), "survey-e2e-"));
  execFileSync(PYTHON, [join(__dirname, "..", "scripts", "make_fixture.py"), fixtureDir]);
  service = startService();
  await waitReady();
}, 60000);

afterAll(async () => {
  await stopService();
});

describe("scripted reader session", () => {
  const traffic: unknown[] = [];
  const choicesMade: Array<{ case_id: string; choice: string }> = [];

  it("completes 10 cases through the real client pipeline", async () => {
    const api = new ApiClient("tok-reviewer", {
      baseUrl: BASE,
      onPayload: (p) => traffic.push(p),
    });
    const session = await api.session();
    expect(session.total).toBe(10);
    expect(session.completed).toBe(0);

    const view = new HeadlessView();
    // headless player: confirm a full loop immediately after frames arrive
    const player = {
      play: (_f: Uint8Array[], _fps: number, onLoop: (n: number) => void) => {
        onLoop(1);
      },
      stop: () => {},
    };
    const video = {
      load: async (url: string) => {
        const { frames, fps } = await fetchFrames(url, api.authHeaders());
        expect(frames.length).toBeGreaterThan(0);
        expect(fps).toBeCloseTo(30, 3);
        return { frames, fps };
      },
    };
    const controller = new SurveyController(api, view, video, player);

    // choose Dead on even case numbers, Alive otherwise
    await controller.start();
    for (let i = 0; i < 10; i++) {
      const current = controller.currentCase;
      expect(current).not.toBeNull();
      const caseNum = parseInt(current!.case_id.slice(1), 10);
      const choice = caseNum % 2 === 0 ? "Dead" : "Alive";
      choicesMade.push({ case_id: current!.case_id, choice });
      await controller.choose(choice);
    }
    expect(view.completions).toEqual([10]);
    expect(view.errors).toEqual([]);
  }, 60000);

  it("never received a truth or score field (traffic assertion)", () => {
    expect(traffic.length).toBeGreaterThan(10);
    const blob = JSON.stringify(traffic);
    for (const field of ['"truth"', '"machine_score"', '"label"', '"score"']) {
      expect(blob).not.toContain(field);
    }
  });

  it("persists all 10 responses across a service restart", async () => {
    await stopService();
    const stored = readFileSync(join(fixtureDir, "responses.jsonl"), "utf-8")
      .trim().split("\n").map((l) => JSON.parse(l));
    expect(stored).toHaveLength(10);
    const byCase = new Map(stored.map((r) => [r.case_id, r.choice]));
    for (const made of choicesMade) {
      expect(byCase.get(made.case_id)).toBe(made.choice);
    }

    service = startService();
    await waitReady();
    const api = new ApiClient("tok-reviewer", { baseUrl: BASE });
    const session = await api.session();
    expect(session.completed).toBe(10);
    expect(session.done).toBe(true);
    const next = await api.nextCase();
    expect(next.done).toBe(true);
  }, 60000);

  it("served report matches the offline comparison on the stored responses", async () => {
    const resp = await fetch(`${BASE}/api/report`, {
      headers: { Authorization: "Bearer tok-admin" },
    });
    expect(resp.status).toBe(200);
    const served = await resp.json();

    const outDir = join(fixtureDir, "offline");
    execFileSync(PYTHON, [
      "-m", "prognoscope.cli", "compare",
      "--responses", join(fixtureDir, "responses.jsonl"),
      "--scores", join(fixtureDir, "scores.csv"),
      "--out", outDir,
    ]);
    const offline = JSON.parse(readFileSync(join(outDir, "report.json"), "utf-8"));

    const servedById = Object.fromEntries(
      served.responders.map((r: { id: string }) => [r.id, r]));
    const offlineById = Object.fromEntries(
      offline.responders.map((r: { id: string }) => [r.id, r]));
    for (const id of Object.keys(offlineById)) {
      for (const key of ["accuracy", "sensitivity", "specificity"]) {
        expect(servedById[id][key]).toBeCloseTo(offlineById[id][key], 12);
      }
    }
    expect(served.cochran_q.q).toBeCloseTo(offline.cochran_q.q, 12);
    expect(served.cochran_q.p).toBeCloseTo(offline.cochran_q.p, 12);
    expect(served.machine_roc.auc).toBeCloseTo(offline.machine_roc.auc, 12);
    expect(existsSync(join(outDir, "figures", "reader_comparison.png"))).toBe(true);
  }, 60000);
});

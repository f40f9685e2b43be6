import { ApiClient } from "./api.js";
import { SurveyController, type CaseView } from "./app.js";
import { fetchFrames } from "./mjpeg.js";
import { LoopPlayer } from "./player.js";
import type { CasePayload, VideoVariant } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

class DomView implements CaseView {
  private aliveBtn = el<HTMLButtonElement>("btn-alive");
  private deadBtn = el<HTMLButtonElement>("btn-dead");

  showCase(payload: CasePayload): void {
    el("progress").textContent =
      `Case ${payload.progress.index} / ${payload.progress.total}`;
    const tbody = el("ehr-body");
    tbody.innerHTML = "";
    for (const row of payload.ehr) {
      const tr = document.createElement("tr");
      const value = row.value === null ? "" : String(row.value);
      for (const text of [row.name, value, row.units]) {
        const td = document.createElement("td");
        td.textContent = text;
        tr.appendChild(td);
      }
      tbody.appendChild(tr);
    }
    el("case-panel").style.display = "";
    el("completion").style.display = "none";
  }

  setButtonsEnabled(enabled: boolean): void {
    this.aliveBtn.disabled = !enabled;
    this.deadBtn.disabled = !enabled;
    el("gate-hint").style.display = enabled ? "none" : "";
  }

  setVariant(variant: VideoVariant): void {
    el("variant-label").textContent = variant;
  }

  showCompletion(count: number): void {
    el("case-panel").style.display = "none";
    const done = el("completion");
    done.style.display = "";
    el("completion-count").textContent = String(count);
  }

  showError(message: string, retryable: boolean): void {
    const box = el("error-box");
    box.style.display = "";
    el("error-text").textContent = message;
    el<HTMLButtonElement>("btn-retry").style.display = retryable ? "" : "none";
  }

  clearError(): void {
    el("error-box").style.display = "none";
  }
}

async function boot(): Promise<void> {
  const token = new URLSearchParams(window.location.search).get("token")
    ?? window.prompt("reviewer token")
    ?? "";
  const api = new ApiClient(token);
  const view = new DomView();
  const canvas = el<HTMLCanvasElement>("video-canvas");
  const loopPlayer = new LoopPlayer(canvas);
  let onLoopHook: (loops: number) => void = () => undefined;
  const player = {
    play: async (frames: Uint8Array[], fps: number, onLoop: (n: number) => void) => {
      onLoopHook = onLoop;
      await loopPlayer.load(frames, fps);
    },
    stop: () => loopPlayer.stop(),
  };
  // re-bind the loop callback through the player hook
  (loopPlayer as unknown as { hooks: { onLoop: (n: number) => void } }).hooks = {
    onLoop: (n: number) => onLoopHook(n),
  };
  const video = {
    load: (url: string) => fetchFrames(url, api.authHeaders()),
  };
  const controller = new SurveyController(api, view, video, player);

  el<HTMLButtonElement>("btn-alive").addEventListener("click", () =>
    void controller.choose("Alive"));
  el<HTMLButtonElement>("btn-dead").addEventListener("click", () =>
    void controller.choose("Dead"));
  el<HTMLButtonElement>("btn-variant").addEventListener("click", () =>
    void controller.toggleVariant());
  el<HTMLButtonElement>("btn-retry").addEventListener("click", () =>
    void controller.retryVideo());
  document.addEventListener("keydown", (ev) => void controller.handleKey(ev.key));

  const session = await api.session();
  el("reviewer-label").textContent = session.reviewer_id;
  await controller.start();
}

void boot();

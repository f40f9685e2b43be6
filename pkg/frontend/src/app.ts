import { ApiClient, ApiError } from "./api.js";
import type { CasePayload, Choice, NextCase, VideoVariant } from "./types.js";

/** Rendering surface; the DOM binding implements this, and unit tests
 *  substitute a recorder. */
export interface CaseView {
  showCase(payload: CasePayload): void;
  setButtonsEnabled(enabled: boolean): void;
  setVariant(variant: VideoVariant): void;
  showCompletion(count: number): void;
  showError(message: string, retryable: boolean): void;
  clearError(): void;
}

export interface VideoSource {
  load(url: string): Promise<{ frames: Uint8Array[]; fps: number }>;
}

export interface FramePlayer {
  play(
    frames: Uint8Array[],
    fps: number,
    onLoop: (loops: number) => void,
  ): Promise<void> | void;
  stop(): void;
}

/** Drives one reviewer session: fetch case, loop video, gate the decision
 *  buttons on a completed loop, submit, advance. Conflicts resync to the
 *  server cursor; transient network failures retry idempotently. */
export class SurveyController {
  private current: CasePayload | null = null;
  private gated = true;
  private variant: VideoVariant = "raw";
  private submitting = false;

  constructor(
    private api: ApiClient,
    private view: CaseView,
    private video: VideoSource,
    private player: FramePlayer,
  ) {}

  get currentCase(): CasePayload | null {
    return this.current;
  }

  get buttonsGated(): boolean {
    return this.gated;
  }

  async start(): Promise<void> {
    await this.advance();
  }

  private async advance(): Promise<void> {
    this.view.clearError();
    this.player.stop();
    let next: NextCase;
    try {
      next = await this.api.nextCase();
    } catch (err) {
      this.view.showError(`could not fetch the next case: ${String(err)}`, true);
      return;
    }
    if (next.done) {
      this.current = null;
      this.view.showCompletion(next.completed);
      return;
    }
    this.current = next;
    this.gated = true;
    this.variant = "raw";
    this.view.showCase(next);
    this.view.setButtonsEnabled(false);
    this.view.setVariant("raw");
    await this.loadVideo(next.video_url);
  }

  private async loadVideo(url: string): Promise<void> {
    try {
      const { frames, fps } = await this.video.load(this.api.videoUrl(url));
      await this.player.play(frames, fps, (loops) => {
        if (loops >= 1 && this.gated) {
          // the reviewer has seen the whole clip once; unlock the decision
          this.gated = false;
          this.view.setButtonsEnabled(true);
        }
      });
    } catch (err) {
      this.view.showError(`video failed to load: ${String(err)}`, true);
    }
  }

  async retryVideo(): Promise<void> {
    if (!this.current) return;
    this.view.clearError();
    const url = this.variant === "raw" ? this.current.video_url
      : this.current.annotated_url;
    await this.loadVideo(url);
  }

  async toggleVariant(): Promise<void> {
    if (!this.current) return;
    this.variant = this.variant === "raw" ? "annotated" : "raw";
    this.view.setVariant(this.variant);
    this.player.stop();
    const url = this.variant === "raw" ? this.current.video_url
      : this.current.annotated_url;
    await this.loadVideo(url);
  }

  /** Submit the reviewer's judgment for the current case. */
  async choose(choice: Choice): Promise<void> {
    if (!this.current || this.gated || this.submitting) return;
    const caseId = this.current.case_id;
    this.submitting = true;
    this.view.setButtonsEnabled(false);
    try {
      for (;;) {
        try {
          await this.api.submit(caseId, choice);
          break;
        } catch (err) {
          if (err instanceof ApiError && err.status === 409) {
            // duplicate or out-of-order: the server cursor is truth; resync
            break;
          }
          if (err instanceof ApiError) {
            this.view.showError(`submission rejected: ${err.message}`, false);
            return;
          }
          // transient network failure: resubmission is idempotent because
          // the server refuses duplicates for the same (reviewer, case)
          await new Promise((r) => setTimeout(r, 250));
        }
      }
      await this.advance();
    } finally {
      this.submitting = false;
    }
  }

  /** Keyboard ergonomics: A = Alive, D = Dead. */
  async handleKey(key: string): Promise<void> {
    const k = key.toLowerCase();
    if (k === "a") await this.choose("Alive");
    if (k === "d") await this.choose("Dead");
  }
}

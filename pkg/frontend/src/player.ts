/** Canvas loop player for decoded JPEG frame sequences.
 *
 * Frames are drawn on a timer at the declared rate and loop forever; the
 * loop counter drives the one-full-loop gate on the decision buttons.
 */

export interface PlayerHooks {
  onLoop?: (loops: number) => void;
}

export class LoopPlayer {
  private frames: ImageBitmap[] = [];
  private timer: ReturnType<typeof setInterval> | null = null;
  private index = 0;
  loops = 0;

  constructor(
    private canvas: HTMLCanvasElement,
    private hooks: PlayerHooks = {},
  ) {}

  async load(payloads: Uint8Array[], fps: number): Promise<void> {
    this.stop();
    this.frames = [];
    this.index = 0;
    this.loops = 0;
    for (const bytes of payloads) {
      const blob = new Blob([bytes.buffer.slice(bytes.byteOffset, bytes.byteOffset + bytes.byteLength) as ArrayBuffer], { type: "image/jpeg" });
      this.frames.push(await createImageBitmap(blob));
    }
    if (!this.frames.length) {
      throw new Error("video stream contained no frames");
    }
    this.canvas.width = this.frames[0].width;
    this.canvas.height = this.frames[0].height;
    this.start(fps);
  }

  private start(fps: number): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) throw new Error("canvas has no 2d context");
    const interval = 1000 / Math.max(fps, 1);
    this.timer = setInterval(() => {
      ctx.drawImage(this.frames[this.index], 0, 0);
      this.index += 1;
      if (this.index >= this.frames.length) {
        this.index = 0;
        this.loops += 1;
        this.hooks.onLoop?.(this.loops);
      }
    }, interval);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
    for (const frame of this.frames) frame.close?.();
    this.frames = [];
  }
}

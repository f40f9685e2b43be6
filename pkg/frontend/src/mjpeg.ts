/** Incremental parser for multipart/x-mixed-replace JPEG frame sequences.
 *
 * The service streams parts of the form
 *   --frame\r\nContent-Type: image/jpeg\r\nContent-Length: N\r\n\r\n<bytes>\r\n
 * terminated by --frame--. Feed chunks as they arrive; complete JPEG
 * payloads come back in order.
 */

const BOUNDARY = "--frame";

function concat(a: Uint8Array, b: Uint8Array): Uint8Array {
  const out = new Uint8Array(a.length + b.length);
  out.set(a, 0);
  out.set(b, a.length);
  return out;
}

function indexOf(haystack: Uint8Array, needle: Uint8Array, from = 0): number {
  outer: for (let i = from; i <= haystack.length - needle.length; i++) {
    for (let j = 0; j < needle.length; j++) {
      if (haystack[i + j] !== needle[j]) continue outer;
    }
    return i;
  }
  return -1;
}

const encoder = new TextEncoder();
const HEADER_END = encoder.encode("\r\n\r\n");
const BOUNDARY_BYTES = encoder.encode(BOUNDARY);

export class MjpegParser {
  private buffer: Uint8Array = new Uint8Array(0);
  private finishedFlag = false;

  get finished(): boolean {
    return this.finishedFlag;
  }

  /** Feed a chunk; returns any complete JPEG payloads it unlocked. */
  push(chunk: Uint8Array): Uint8Array[] {
    this.buffer = concat(this.buffer, chunk);
    const frames: Uint8Array[] = [];
    for (;;) {
      const start = indexOf(this.buffer, BOUNDARY_BYTES);
      if (start < 0) break;
      const afterBoundary = start + BOUNDARY_BYTES.length;
      // terminal marker: --frame--
      if (
        this.buffer.length >= afterBoundary + 2 &&
        this.buffer[afterBoundary] === 0x2d &&
        this.buffer[afterBoundary + 1] === 0x2d
      ) {
        this.finishedFlag = true;
        this.buffer = new Uint8Array(0);
        break;
      }
      const headerEnd = indexOf(this.buffer, HEADER_END, afterBoundary);
      if (headerEnd < 0) break;
      const header = new TextDecoder().decode(
        this.buffer.slice(afterBoundary, headerEnd),
      );
      const match = header.match(/Content-Length:\s*(\d+)/i);
      if (!match) {
        throw new Error("mjpeg part missing Content-Length");
      }
      const length = parseInt(match[1], 10);
      const payloadStart = headerEnd + HEADER_END.length;
      if (this.buffer.length < payloadStart + length) break; // need more bytes
      frames.push(this.buffer.slice(payloadStart, payloadStart + length));
      this.buffer = this.buffer.slice(payloadStart + length);
    }
    return frames;
  }
}

/** Fetch an MJPEG endpoint and decode every frame payload plus the declared
 *  frame rate. */
export async function fetchFrames(
  url: string,
  headers: Record<string, string>,
  fetchImpl: typeof fetch = fetch.bind(globalThis),
): Promise<{ frames: Uint8Array[]; fps: number }> {
  const resp = await fetchImpl(url, { headers });
  if (!resp.ok) {
    throw new Error(`video request failed: HTTP ${resp.status}`);
  }
  const fps = parseFloat(resp.headers.get("X-Frame-Rate") ?? "30");
  const parser = new MjpegParser();
  const frames: Uint8Array[] = [];
  if (resp.body) {
    const reader = resp.body.getReader();
    for (;;) {
      const { done, value } = await reader.read();
      if (value) frames.push(...parser.push(value));
      if (done) break;
    }
  } else {
    const whole = new Uint8Array(await resp.arrayBuffer());
    frames.push(...parser.push(whole));
  }
  return { frames, fps };
}

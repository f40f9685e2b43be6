import type { Choice, NextCase, ResponseAck, SessionState } from "./types.js";

/** Field names that must never appear in anything the server sends us
 *  before session completion. Every JSON payload is scanned. */
const FORBIDDEN_FIELDS = ["truth", "machine_score", "label", "score"];

export class BlindingViolation extends Error {}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

function scanForLeaks(value: unknown, path = ""): void {
  if (Array.isArray(value)) {
    value.forEach((v, i) => scanForLeaks(v, `${path}[${i}]`));
    return;
  }
  if (value && typeof value === "object") {
    for (const [key, v] of Object.entries(value as Record<string, unknown>)) {
      if (FORBIDDEN_FIELDS.includes(key)) {
        throw new BlindingViolation(`server leaked field "${key}" at ${path}`);
      }
      scanForLeaks(v, path ? `${path}.${key}` : key);
    }
  }
}

export interface ApiClientOptions {
  baseUrl?: string;
  fetchImpl?: typeof fetch;
  /** invoked with every decoded JSON payload, after the blinding scan */
  onPayload?: (payload: unknown) => void;
}

/** Thin typed client for the study service; enforces the blinding contract
 *  on every response it decodes. */
export class ApiClient {
  private baseUrl: string;
  private fetchImpl: typeof fetch;
  private onPayload?: (payload: unknown) => void;

  constructor(private token: string, options: ApiClientOptions = {}) {
    this.baseUrl = options.baseUrl ?? "";
    this.fetchImpl = options.fetchImpl ?? fetch.bind(globalThis);
    this.onPayload = options.onPayload;
  }

  private headers(): Record<string, string> {
    return { Authorization: `Bearer ${this.token}` };
  }

  private async json<T>(resp: Response): Promise<T> {
    const body = await resp.json();
    scanForLeaks(body);
    this.onPayload?.(body);
    if (!resp.ok) {
      const message =
        typeof body === "object" && body !== null && "error" in body
          ? String((body as { error: unknown }).error)
          : `HTTP ${resp.status}`;
      throw new ApiError(resp.status, message);
    }
    return body as T;
  }

  async session(): Promise<SessionState> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/session`, {
      headers: this.headers(),
    });
    return this.json<SessionState>(resp);
  }

  async nextCase(): Promise<NextCase> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/cases/next`, {
      headers: this.headers(),
    });
    return this.json<NextCase>(resp);
  }

  async submit(caseId: string, choice: Choice): Promise<ResponseAck> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/responses`, {
      method: "POST",
      headers: { ...this.headers(), "Content-Type": "application/json" },
      body: JSON.stringify({ case_id: caseId, choice }),
    });
    return this.json<ResponseAck>(resp);
  }

  videoUrl(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  authHeaders(): Record<string, string> {
    return this.headers();
  }
}

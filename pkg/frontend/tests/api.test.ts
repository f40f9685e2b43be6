import { describe, expect, it } from "vitest";
import { ApiClient, ApiError, BlindingViolation } from "../src/api.js";

function fakeFetch(status: number, body: unknown): typeof fetch {
  return (async () =>
    new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    })) as typeof fetch;
}

describe("ApiClient", () => {
  it("sends the bearer token", async () => {
    let seen: Record<string, string> = {};
    const impl = (async (_url: RequestInfo | URL, init?: RequestInit) => {
      seen = (init?.headers ?? {}) as Record<string, string>;
      return new Response(JSON.stringify({ done: true, total: 0, completed: 0 }));
    }) as typeof fetch;
    const api = new ApiClient("tok-123", { fetchImpl: impl });
    await api.nextCase();
    expect(seen.Authorization).toBe("Bearer tok-123");
  });

  it("posts the choice in the documented wire shape", async () => {
    let body = "";
    const impl = (async (_url: RequestInfo | URL, init?: RequestInit) => {
      body = String(init?.body);
      return new Response(
        JSON.stringify({ recorded: true, case_id: "c1", completed: 1, total: 2, done: false }),
      );
    }) as typeof fetch;
    const api = new ApiClient("t", { fetchImpl: impl });
    await api.submit("c1", "Dead");
    expect(JSON.parse(body)).toEqual({ case_id: "c1", choice: "Dead" });
  });

  it("raises ApiError with the server message on failure", async () => {
    const api = new ApiClient("t", {
      fetchImpl: fakeFetch(409, { error: "duplicate response for case c1" }),
    });
    await expect(api.submit("c1", "Alive")).rejects.toThrow(ApiError);
    await expect(api.submit("c1", "Alive")).rejects.toThrow(/duplicate/);
  });

  it("rejects any payload carrying a truth or score field", async () => {
    const leaking = {
      done: false,
      case_id: "c1",
      ehr: [{ name: "age", value: 60, units: "years" }],
      nested: { deep: [{ truth: 1 }] },
    };
    const api = new ApiClient("t", { fetchImpl: fakeFetch(200, leaking) });
    await expect(api.nextCase()).rejects.toThrow(BlindingViolation);
  });

  it("accepts clean payloads and forwards them to the traffic hook", async () => {
    const seen: unknown[] = [];
    const payload = { done: true, total: 3, completed: 3 };
    const api = new ApiClient("t", {
      fetchImpl: fakeFetch(200, payload),
      onPayload: (p) => seen.push(p),
    });
    const out = await api.nextCase();
    expect(out).toEqual(payload);
    expect(seen).toHaveLength(1);
  });
});

// Contract tests against API responses recorded from a real backend run
// (a shipping-fault scenario driven through the full pipeline). The
// dashboard is a pure view/controller: everything asserted here is
// pass-through fidelity, not recomputation.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { Controller } from "../src/controller.js";
import {
  renderEvents,
  renderFailures,
  renderPatches,
  renderedPatchOrder,
} from "../src/render.js";
import { DashboardState } from "../src/state.js";
import type { EventRow, FailureRow, PatchRow } from "../src/types.js";

const fixtures = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

const patchRows: PatchRow[] = JSON.parse(
  readFileSync(join(fixtures, "patches.json"), "utf-8"),
);
const failureRows: FailureRow[] = JSON.parse(
  readFileSync(join(fixtures, "failures.json"), "utf-8"),
);
const eventRows: EventRow[] = readFileSync(
  join(fixtures, "events.ndjson"),
  "utf-8",
)
  .trim()
  .split("\n")
  .map((line) => JSON.parse(line));

function loadedState(): DashboardState {
  const state = new DashboardState();
  state.setFailures(structuredClone(failureRows));
  state.setPatches(structuredClone(patchRows));
  return state;
}

/**
 * A fetch stub serving the fixtures, with scriptable POST outcomes.
 * Successful approves/rejects are reflected in subsequent GET /patches,
 * like the real server.
 */
function fakeFetch(
  post: (path: string) => { status: number; body: unknown } = () => ({
    status: 200,
    body: { state: "approved" },
  }),
) {
  const calls: string[] = [];
  const approved = new Set<string>();
  const rejected = new Set<string>();
  const fn = async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    calls.push(`${init?.method ?? "GET"} ${path}`);
    if (init?.method === "POST") {
      const { status, body } = post(path);
      const match = path.match(/^\/patches\/([^/]+)\/(approve|reject)$/);
      if (status === 200 && match) {
        (match[2] === "approve" ? approved : rejected).add(match[1]);
      }
      return new Response(JSON.stringify(body), { status });
    }
    if (path === "/failures") {
      return new Response(JSON.stringify(failureRows), { status: 200 });
    }
    if (path === "/patches") {
      const rows = patchRows
        .filter((r) => !rejected.has(r.id))
        .map((r) =>
          approved.has(r.id) ? { ...r, state: "approved" as const } : r,
        );
      return new Response(JSON.stringify(rows), { status: 200 });
    }
    throw new Error(`unexpected ${path}`);
  };
  return { fn: fn as typeof fetch, calls };
}

describe("rendering is order-preserving pass-through", () => {
  it("renders patches in exactly the server-ranked order", () => {
    const html = renderPatches(loadedState());
    expect(renderedPatchOrder(html)).toEqual(patchRows.map((r) => r.id));
  });

  it("server order is echoed even when it disagrees with any local sort", () => {
    // feed rows deliberately not sorted by any column the UI shows
    const shuffled = [...patchRows].reverse();
    const state = new DashboardState();
    state.setPatches(shuffled);
    const html = renderPatches(state);
    expect(renderedPatchOrder(html)).toEqual(shuffled.map((r) => r.id));
  });

  it("renders failure groups in server order with pass-through counts", () => {
    const html = renderFailures(failureRows);
    for (const row of failureRows) {
      expect(html).toContain(`<td class="count">${row.count}</td>`);
      expect(html).toContain(`data-signature="${row.signature}"`);
    }
    const order = [...html.matchAll(/data-signature="([^"]+)"/g)].map(
      (m) => m[1],
    );
    expect(order).toEqual(failureRows.map((r) => r.signature));
  });

  it("progress bar value is exactly the API regression count", () => {
    const html = renderPatches(loadedState());
    for (const row of patchRows) {
      expect(html).toContain(
        `<progress value="${row.regression_success_count}"`,
      );
    }
  });

  it("empty feeds render empty states", () => {
    expect(renderFailures([])).toContain("No production failures");
    expect(renderPatches(new DashboardState())).toContain(
      "No patches awaiting review",
    );
  });

  it("diff text is shown escaped, never interpreted", () => {
    const html = renderPatches(loadedState());
    expect(html).toContain("+++ b/app.hpl");
    expect(html).not.toContain("<script");
  });
});

describe("event ring", () => {
  it("keeps events in arrival order and advances the cursor", () => {
    const state = new DashboardState();
    for (const row of eventRows) state.pushEvent(row);
    const seqs = state.events.map((r) => r.seq);
    expect(seqs).toEqual([...seqs].sort((a, b) => a! - b!));
    expect(state.eventCursor).toBe(eventRows[eventRows.length - 1].seq! + 1);
    expect(renderEvents(state.events)).toContain("routing");
  });

  it("heartbeats advance the cursor without entering the ring", () => {
    const state = new DashboardState();
    state.pushEvent({ kind: "heartbeat", seq: 41 });
    expect(state.events).toHaveLength(0);
    expect(state.eventCursor).toBe(42);
  });
});

describe("optimistic actions", () => {
  const surviving = patchRows.find((r) => r.state === "surviving")!;

  it("approve moves the patch out of the actionable list", async () => {
    const { fn } = fakeFetch(() => ({
      status: 200,
      body: { id: surviving.id, state: "approved" },
    }));
    const controller = new Controller(
      new ApiClient("http://x", fn),
      loadedState(),
    );
    await controller.approve(surviving.id);
    const ids = controller.state.actionable().map((r) => r.id);
    expect(ids).not.toContain(surviving.id);
    expect(controller.state.deployed.map((r) => r.id)).toContain(
      surviving.id,
    );
    expect(controller.state.toasts).toHaveLength(0);
  });

  it("WrongState rolls the optimistic approve back and toasts", async () => {
    const { fn } = fakeFetch((path) =>
      path.endsWith("/approve")
        ? { status: 409, body: { error: "WrongState", detail: "rejected" } }
        : { status: 200, body: {} },
    );
    const state = loadedState();
    const before = state.patches.map((r) => ({ id: r.id, state: r.state }));
    const controller = new Controller(new ApiClient("http://x", fn), state);
    await controller.approve(surviving.id);
    expect(state.patches.map((r) => ({ id: r.id, state: r.state }))).toEqual(
      before,
    );
    expect(state.deployed).toHaveLength(0);
    expect(state.toasts[0].tone).toBe("error");
    expect(state.toasts[0].text).toContain("WrongState");
  });

  it("reject removes the row; failure restores it in place", async () => {
    const failing = fakeFetch(() => ({
      status: 404,
      body: { error: "UnknownPatch" },
    }));
    const state = loadedState();
    const before = state.patches.map((r) => r.id);
    const controller = new Controller(new ApiClient("http://x", failing.fn), state);
    await controller.reject(patchRows[2].id);
    expect(state.patches.map((r) => r.id)).toEqual(before);

    const ok = fakeFetch(() => ({ status: 200, body: { state: "rejected" } }));
    const controller2 = new Controller(
      new ApiClient("http://x", ok.fn),
      loadedState(),
    );
    await controller2.reject(patchRows[2].id);
    expect(ok.calls).toContain(`POST /patches/${patchRows[2].id}/reject`);
  });

  it("surfaces ApiError codes from the client", async () => {
    const { fn } = fakeFetch(() => ({
      status: 409,
      body: { error: "WrongState", detail: "x is regressive" },
    }));
    const api = new ApiClient("http://x", fn);
    await expect(api.approve("abc")).rejects.toThrowError(ApiError);
  });
});

import type {
  EventRow,
  FailureRow,
  PatchRow,
  Toast,
} from "./types.js";

const EVENT_RING_SIZE = 200;

/**
 * All client state. Pure data + transitions; no I/O here. Ordering of
 * `failures` and `patches` is always exactly what the server sent — the
 * dashboard never re-sorts.
 */
export class DashboardState {
  failures: FailureRow[] = [];
  patches: PatchRow[] = [];
  events: EventRow[] = [];
  deployed: PatchRow[] = [];
  pending: Map<string, "approve" | "reject"> = new Map();
  toasts: Toast[] = [];
  eventCursor = 0;

  setFailures(rows: FailureRow[]): void {
    this.failures = rows;
  }

  setPatches(rows: PatchRow[]): void {
    this.patches = rows;
    // a patch the server no longer lists can't have an action in flight
    for (const id of [...this.pending.keys()]) {
      if (!rows.some((r) => r.id === id)) this.pending.delete(id);
    }
  }

  /** Rows the operator can act on (approved ones move to the deployed panel). */
  actionable(): PatchRow[] {
    return this.patches.filter((r) => r.state !== "approved");
  }

  pushEvent(row: EventRow): void {
    if (typeof row.seq === "number") {
      this.eventCursor = row.seq + 1;
    }
    if (row.kind === "heartbeat") return;
    this.events.push(row);
    if (this.events.length > EVENT_RING_SIZE) {
      this.events.splice(0, this.events.length - EVENT_RING_SIZE);
    }
  }

  toast(text: string, tone: Toast["tone"] = "info"): void {
    this.toasts.push({ text, tone });
    if (this.toasts.length > 5) this.toasts.shift();
  }

  // -- optimistic actions -------------------------------------------------

  /** Optimistically mark `id` approved; returns an undo closure. */
  beginApprove(id: string): () => void {
    const row = this.patches.find((r) => r.id === id);
    if (!row) return () => {};
    const before = row.state;
    row.state = "approved";
    this.deployed = [...this.deployed, row];
    this.pending.set(id, "approve");
    return () => {
      row.state = before;
      this.deployed = this.deployed.filter((r) => r.id !== id);
    };
  }

  /** Optimistically drop `id` from the list; returns an undo closure. */
  beginReject(id: string): () => void {
    const index = this.patches.findIndex((r) => r.id === id);
    if (index < 0) return () => {};
    const row = this.patches[index];
    this.patches = this.patches.filter((r) => r.id !== id);
    this.pending.set(id, "reject");
    return () => {
      const restored = [...this.patches];
      restored.splice(index, 0, row);
      this.patches = restored;
    };
  }

  settle(id: string): void {
    this.pending.delete(id);
  }
}

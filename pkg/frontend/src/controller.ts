import { ApiClient, ApiError } from "./api.js";
import { DashboardState } from "./state.js";

const POLL_INTERVAL_MS = 2000;

/**
 * Binds the API client to the state: refresh cycles, the event stream
 * with a polling fallback, and optimistic approve/reject with rollback.
 */
export class Controller {
  private stopped = false;
  private abort: AbortController | null = null;

  constructor(
    public api: ApiClient,
    public state: DashboardState,
    private onChange: () => void = () => {},
  ) {}

  async refresh(): Promise<void> {
    const [failures, patches] = await Promise.all([
      this.api.failures(),
      this.api.patches(),
    ]);
    this.state.setFailures(failures);
    this.state.setPatches(patches);
    this.onChange();
  }

  async approve(id: string): Promise<void> {
    const undo = this.state.beginApprove(id);
    this.onChange();
    try {
      await this.api.approve(id);
    } catch (err) {
      undo();
      this.state.toast(describe("approve", id, err), "error");
    } finally {
      this.state.settle(id);
    }
    await this.refresh();
  }

  async reject(id: string): Promise<void> {
    const undo = this.state.beginReject(id);
    this.onChange();
    try {
      await this.api.reject(id);
    } catch (err) {
      undo();
      this.state.toast(describe("reject", id, err), "error");
    } finally {
      this.state.settle(id);
    }
    await this.refresh();
  }

  /**
   * Consume the live event stream; if it drops or is unavailable, poll
   * the tables every 2 s and keep retrying the stream.
   */
  async subscribe(): Promise<void> {
    while (!this.stopped) {
      this.abort = new AbortController();
      try {
        await this.api.streamEvents(
          this.state.eventCursor,
          (row) => {
            this.state.pushEvent(row);
            if (row.kind === "patch-state" || row.kind === "patch-queued") {
              void this.refresh();
            }
            this.onChange();
          },
          this.abort.signal,
        );
      } catch {
        // stream unavailable: poll once, then retry the stream
        try {
          await this.refresh();
        } catch {
          // server unreachable; the next cycle will retry
        }
      }
      if (!this.stopped) await sleep(POLL_INTERVAL_MS);
    }
  }

  stop(): void {
    this.stopped = true;
    this.abort?.abort();
  }
}

function describe(action: string, id: string, err: unknown): string {
  if (err instanceof ApiError) {
    return `${action} ${id.slice(0, 8)}… failed: ${err.message}`;
  }
  return `${action} ${id.slice(0, 8)}… failed`;
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

import type { EventRow, FailureRow, PatchRow } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    public detail?: string,
  ) {
    super(detail ? `${code}: ${detail}` : code);
  }
}

type Fetch = typeof fetch;

/** Thin typed client over the control API. */
export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: Fetch = fetch,
  ) {}

  private async request<T>(method: string, path: string): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, { method });
    const body = await resp.json();
    if (!resp.ok) {
      throw new ApiError(resp.status, body.error ?? "Unknown", body.detail);
    }
    return body as T;
  }

  health(): Promise<{ ok: boolean }> {
    return this.request("GET", "/health");
  }

  failures(): Promise<FailureRow[]> {
    return this.request("GET", "/failures");
  }

  patches(): Promise<PatchRow[]> {
    return this.request("GET", "/patches");
  }

  approve(id: string): Promise<{ id: string; state: string }> {
    return this.request("POST", `/patches/${id}/approve`);
  }

  reject(id: string): Promise<{ id: string; state: string }> {
    return this.request("POST", `/patches/${id}/reject`);
  }

  /**
   * Follow the NDJSON event stream from `cursor`, invoking `onEvent` per
   * row. Resolves when the server closes the stream; the caller decides
   * whether to reconnect or fall back to polling.
   */
  async streamEvents(
    cursor: number,
    onEvent: (row: EventRow) => void,
    signal?: AbortSignal,
  ): Promise<void> {
    const resp = await this.fetchFn(`${this.baseUrl}/events?cursor=${cursor}`, {
      signal,
    });
    if (!resp.ok || !resp.body) {
      throw new ApiError(resp.status, "StreamUnavailable");
    }
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      const lines = buffer.split("\n");
      buffer = lines.pop() ?? "";
      for (const line of lines) {
        const text = line.trim();
        if (!text) continue;
        onEvent(JSON.parse(text) as EventRow);
      }
    }
  }
}

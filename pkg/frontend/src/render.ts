import type { DashboardState } from "./state.js";
import type { EventRow, FailureRow, PatchRow } from "./types.js";

// Pure HTML-string renderers so the contract tests can assert on output
// without a browser. main.ts injects these into the page.

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderFailures(rows: FailureRow[]): string {
  if (rows.length === 0) {
    return `<p class="empty">No production failures observed.</p>`;
  }
  const body = rows
    .map((r) => {
      const models = Object.entries(r.patch_counts)
        .map(([m, c]) => `${escapeHtml(m)}: ${c.valid} valid / ${c.invalid} invalid`)
        .join("<br>");
      return (
        `<tr data-signature="${escapeHtml(r.signature)}">` +
        `<td class="sig">${escapeHtml(r.signature)}</td>` +
        `<td class="count">${r.count}</td>` +
        `<td>${r.explored ? "explored" : "queued"}</td>` +
        `<td>${models || "—"}</td></tr>`
      );
    })
    .join("");
  return (
    `<table class="failures"><thead><tr>` +
    `<th>signature</th><th>count</th><th>search</th><th>candidates</th>` +
    `</tr></thead><tbody>${body}</tbody></table>`
  );
}

export function renderPatches(state: DashboardState): string {
  const rows = state.actionable();
  if (rows.length === 0) {
    return `<p class="empty">No patches awaiting review.</p>`;
  }
  // scale bars against the front-runner; values themselves are pass-through
  const maxClean = Math.max(1, ...rows.map((r) => r.regression_success_count));
  const body = rows.map((r) => renderPatchRow(r, maxClean, state)).join("");
  return (
    `<table class="patches"><thead><tr>` +
    `<th>patch</th><th>model / strategy</th><th>state</th>` +
    `<th>failures</th><th>regression progress</th><th></th>` +
    `</tr></thead><tbody>${body}</tbody></table>`
  );
}

function renderPatchRow(
  r: PatchRow,
  maxClean: number,
  state: DashboardState,
): string {
  const busy = state.pending.has(r.id) ? " disabled" : "";
  const canAct = r.state === "valid" || r.state === "surviving";
  const actions = canAct
    ? `<button data-action="approve" data-id="${r.id}"${busy}>approve</button>` +
      `<button data-action="reject" data-id="${r.id}"${busy}>reject</button>`
    : "";
  return (
    `<tr data-id="${r.id}" class="state-${r.state}">` +
    `<td><code>${r.id}</code><details><summary>diff</summary>` +
    `<pre class="diff">${escapeHtml(r.diff)}</pre></details></td>` +
    `<td>${escapeHtml(r.model)}<br><small>${escapeHtml(r.strategy)}</small></td>` +
    `<td class="state">${r.state}</td>` +
    `<td class="failure-count">${r.failure_count}</td>` +
    `<td><progress value="${r.regression_success_count}" max="${maxClean}">` +
    `</progress> <span class="clean">${r.regression_success_count}</span></td>` +
    `<td class="actions">${actions}</td></tr>`
  );
}

export function renderDeployed(rows: PatchRow[]): string {
  if (rows.length === 0) {
    return `<p class="empty">Nothing deployed yet.</p>`;
  }
  return (
    `<ul class="deployed">` +
    rows
      .map(
        (r) =>
          `<li data-id="${r.id}"><code>${r.id}</code> ` +
          `${escapeHtml(r.strategy)} — ${escapeHtml(r.signature)}</li>`,
      )
      .join("") +
    `</ul>`
  );
}

export function renderEvents(rows: EventRow[]): string {
  const recent = rows.slice(-30).reverse();
  if (recent.length === 0) {
    return `<p class="empty">No events yet.</p>`;
  }
  return (
    `<ul class="events">` +
    recent
      .map((r) => {
        const rest = Object.entries(r)
          .filter(([k]) => k !== "kind" && k !== "seq")
          .map(([k, v]) => `${k}=${escapeHtml(String(v))}`)
          .join(" ");
        return `<li><span class="seq">#${r.seq}</span> <b>${escapeHtml(
          r.kind,
        )}</b> ${rest}</li>`;
      })
      .join("") +
    `</ul>`
  );
}

export function renderToasts(state: DashboardState): string {
  return state.toasts
    .map((t) => `<div class="toast ${t.tone}">${escapeHtml(t.text)}</div>`)
    .join("");
}

/** Order of patch ids as rendered, for the order-preservation contract. */
export function renderedPatchOrder(html: string): string[] {
  return [...html.matchAll(/<tr data-id="([^"]+)"/g)].map((m) => m[1]);
}

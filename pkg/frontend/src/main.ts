import { ApiClient } from "./api.js";
import { Controller } from "./controller.js";
import {
  renderDeployed,
  renderEvents,
  renderFailures,
  renderPatches,
  renderToasts,
} from "./render.js";
import { DashboardState } from "./state.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "http://127.0.0.1:8471";

const state = new DashboardState();
const controller = new Controller(new ApiClient(base), state, paint);

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function paint(): void {
  el("failures").innerHTML = renderFailures(state.failures);
  el("patches").innerHTML = renderPatches(state);
  el("deployed").innerHTML = renderDeployed(state.deployed);
  el("events").innerHTML = renderEvents(state.events);
  el("toasts").innerHTML = renderToasts(state);
}

document.addEventListener("click", (ev) => {
  const target = ev.target as HTMLElement;
  const action = target.dataset.action;
  const id = target.dataset.id;
  if (!action || !id) return;
  if (action === "approve") void controller.approve(id);
  if (action === "reject") void controller.reject(id);
});

void controller.refresh().then(() => void controller.subscribe());

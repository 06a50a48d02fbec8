/** Page wiring: poll the service once a second, render the round, submit
 * labels. All mutation goes through the HTTP API; the DOM is rebuilt from
 * the state object after every change. */

import { AnnotateClient } from "./api.js";
import {
  applyServerSnapshot,
  applySubmitResult,
  beginSubmit,
  emptyState,
  markDisconnected,
  progress,
  type UiQueryView,
  type UiState,
} from "./state.js";
import { drawCard } from "./scatter.js";
import type { Label, SourcePoint } from "./types.js";

const POLL_INTERVAL_MS = 1000;
const ANNOTATOR = "browser";

const client = new AnnotateClient("");
let state: UiState = emptyState();
let sourceContext: SourcePoint[] = [];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function render(): void {
  const root = document.getElementById("app");
  if (!root) return;
  root.replaceChildren();

  if (!state.connected) {
    root.appendChild(el("div", "banner error",
      "connection lost: retrying every second"));
  }
  if (!state.round) {
    root.appendChild(el("div", "banner idle",
      "no active round: waiting for the next query batch"));
    return;
  }

  const p = progress(state);
  const header = el("div", "round-header");
  header.appendChild(el("h2", undefined,
    `Round ${state.round.round} / domain ${state.round.domain}`));
  const bar = el("div", "progress");
  const fill = el("div", "progress-fill");
  fill.style.width = p.budget ? `${(100 * p.labeled) / p.budget}%` : "0%";
  bar.appendChild(fill);
  header.appendChild(bar);
  header.appendChild(el("span", "progress-text",
    `${p.labeled} labeled / ${p.pending} pending of ${p.budget}`));
  root.appendChild(header);

  if (state.complete) {
    root.appendChild(el("div", "banner complete",
      "round complete: training resumed"));
  }

  const grid = el("div", "cards");
  for (const card of state.cards) {
    grid.appendChild(renderCard(card));
  }
  root.appendChild(grid);
}

function renderCard(card: UiQueryView): HTMLElement {
  const box = el("div", card.status === "labeled" ? "card labeled" : "card");
  box.appendChild(el("div", "card-title", card.sample_id));

  if (card.features.length >= 2) {
    const canvas = el("canvas", "card-plot");
    canvas.width = 220;
    canvas.height = 160;
    box.appendChild(canvas);
    drawCard(canvas, sourceContext, card.features);
  }
  if (card.features.length !== 2) {
    const table = el("div", "card-features");
    card.features.forEach((v, i) => {
      table.appendChild(el("span", "feature", `f${i}=${v.toFixed(3)}`));
    });
    box.appendChild(table);
  }

  if (card.status === "labeled") {
    box.appendChild(el("div", "card-label",
      card.label === 1 ? "labeled: positive" : "labeled: negative"));
  } else {
    const buttons = el("div", "card-buttons");
    for (const [label, text] of [[0, "negative"], [1, "positive"]] as const) {
      const button = el("button", `label-${label}`, text);
      button.disabled = card.submitting;
      button.addEventListener("click", () => void submit(card.sample_id, label));
      buttons.appendChild(button);
    }
    box.appendChild(buttons);
  }
  if (card.error) {
    box.appendChild(el("div", "card-error", card.error));
  }
  return box;
}

async function submit(sampleId: string, label: Label): Promise<void> {
  const next = beginSubmit(state, sampleId);
  if (next === null) return; // double click or already labeled
  state = next;
  render();
  const result = await client.submit(sampleId, label, ANNOTATOR);
  state = applySubmitResult(state, sampleId, label, result);
  render();
}

async function poll(): Promise<void> {
  try {
    const [status, queries] = await Promise.all([client.status(), client.queries()]);
    state = applyServerSnapshot(state, status, queries);
    if (sourceContext.length === 0) {
      sourceContext = (await client.sourceContext()) ?? [];
    }
  } catch {
    state = markDisconnected(state);
  }
  render();
}

void poll();
setInterval(() => void poll(), POLL_INTERVAL_MS);

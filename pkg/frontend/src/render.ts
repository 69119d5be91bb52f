// DOM rendering of the worksheet: formulas on the left margin indented by
// tree depth, tactics on the right margin, subproblem headers clickable.
// Rendering a malformed payload produces an error panel, never a blank
// screen.

import {MalformedPayload, WorksheetViewModel} from "./model.js";
import type {ContextFact} from "./types.js";

export interface Handlers {
  onToggleFold(pos: string): void;
  onInspect(pos: string): void;
  onKnowledge(tacticText: string): void;
  onBacktrack(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document, tag: K, className?: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export function renderWorksheet(
  container: HTMLElement,
  vm: WorksheetViewModel,
  handlers: Handlers,
): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  try {
    renderBanner(container, vm, handlers);
    renderRows(container, vm, handlers);
    renderResult(container, vm);
  } catch (err) {
    container.replaceChildren();
    const panel = el(doc, "div", "error-panel");
    panel.appendChild(el(doc, "strong", undefined, "could not render the worksheet"));
    panel.appendChild(el(doc, "div", "error-detail",
      err instanceof MalformedPayload ? err.message : String(err)));
    container.appendChild(panel);
  }
}

function renderBanner(container: HTMLElement, vm: WorksheetViewModel, handlers: Handlers): void {
  const doc = container.ownerDocument;
  if (!vm.banner) {
    return;
  }
  const banner = el(doc, "div", `banner banner-${vm.banner.kind.toLowerCase()}`);
  banner.appendChild(el(doc, "span", "banner-text", vm.banner.text));
  if (vm.banner.offerBacktrack) {
    const button = el(doc, "button", "backtrack-offer", "backtrack");
    button.onclick = () => handlers.onBacktrack();
    banner.appendChild(button);
  }
  container.appendChild(banner);
}

function renderRows(container: HTMLElement, vm: WorksheetViewModel, handlers: Handlers): void {
  const doc = container.ownerDocument;
  const sheet = el(doc, "div", "worksheet");
  for (const row of vm.rows()) {
    const line = el(doc, "div", `row row-${row.kind}`);
    line.dataset.pos = row.pos;
    if (row.kind === "tactic") {
      const tactic = el(doc, "span", "tactic-text", row.text);
      tactic.title = "click for the knowledge behind this tactic";
      tactic.onclick = () => handlers.onKnowledge(row.text);
      line.appendChild(tactic);
    } else if (row.kind === "formula") {
      if (!vm.isFromServer(row.text)) {
        throw new MalformedPayload(`formula at ${row.pos} has no server provenance`);
      }
      const left = el(doc, "span", "formula-left");
      left.style.paddingLeft = `${row.depth * 24}px`;
      left.appendChild(el(doc, "span", "marker", row.marker ?? ""));
      const body = el(doc, "span", "formula-text", row.text);
      if (row.hasTrace) {
        body.classList.add("has-trace");
        body.title = "click for the collapsed steps";
        body.onclick = () => handlers.onInspect(row.pos);
      }
      left.appendChild(body);
      line.appendChild(left);
    } else {
      const header = el(doc, "span", "subcalc-header");
      header.style.paddingLeft = `${row.depth * 24}px`;
      header.textContent = `• ${row.text}${row.collapsed ? "  …" : ""}`;
      header.title = row.collapsed ? "unfold" : "fold";
      header.onclick = () => handlers.onToggleFold(row.pos);
      line.appendChild(header);
    }
    sheet.appendChild(line);
  }
  container.appendChild(sheet);
}

function renderResult(container: HTMLElement, vm: WorksheetViewModel): void {
  const doc = container.ownerDocument;
  const result = vm.calc?.result;
  if (!result || vm.calc?.status !== "solved") {
    return;
  }
  const panel = el(doc, "div", "result-panel");
  panel.appendChild(el(doc, "span", "result-label", "result"));
  for (const r of result) {
    panel.appendChild(el(doc, "div", "result-eq", `${r.name} = ${r.unicode}`));
  }
  container.appendChild(panel);
}

export function renderContext(container: HTMLElement, facts: ContextFact[]): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  const list = el(doc, "div", "context-panel");
  for (const fact of facts) {
    const row = el(doc, "div", "fact");
    row.appendChild(el(doc, "span", `origin origin-${fact.origin}`, fact.origin));
    row.appendChild(el(doc, "span", "fact-term", fact.unicode));
    list.appendChild(row);
  }
  container.appendChild(list);
}

export function renderKnowledge(container: HTMLElement, texts: string[]): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  const panel = el(doc, "div", "knowledge-panel");
  if (texts.length === 0) {
    panel.appendChild(el(doc, "div", "knowledge-empty", "no matching knowledge item"));
  }
  for (const text of texts) {
    panel.appendChild(el(doc, "div", "knowledge-item", text));
  }
  container.appendChild(panel);
}

export function renderTrace(container: HTMLElement, steps: Record<string, unknown>[]): void {
  const doc = container.ownerDocument;
  container.replaceChildren();
  const list = el(doc, "div", "trace-panel");
  if (steps.length === 0) {
    list.appendChild(el(doc, "div", "trace-empty", "no collapsed steps"));
  }
  for (const step of steps) {
    const label = (step.rule ?? step.tactic ?? "?") as string;
    const result = (step.result ?? step.formula ?? "") as string;
    list.appendChild(el(doc, "div", "trace-step", `${label} → ${result}`));
  }
  container.appendChild(list);
}

// Scripted end-to-end session against the real service: six program
// steps, one formula input, one fold/unfold round trip, one backtrack.
// After every command the worksheet is rendered into a DOM and the
// displayed formula strings are compared, character for character, with
// the strings the server sent; nothing displayed may lack provenance.

import {beforeAll, describe, expect, it} from "vitest";

import {ApiClient} from "../src/api.js";
import {WorksheetViewModel} from "../src/model.js";
import {renderWorksheet} from "../src/render.js";
import type {CalcEntry, CalcPayload} from "../src/types.js";

const BASE = "http://127.0.0.1:8719";

const MAX_ARGS = {
  r: "r",
  givens: "[r]",
  max: "A",
  finds: "[u, v]",
  rels: "[A = 2*u*v - u^2, u/2 = r*sin(alpha), v/2 = r*cos(alpha)]",
  var: "alpha",
  interval: "interval_open(0, pi/2)",
  errbound: "0.001",
};

function formulaStrings(entries: CalcEntry[]): string[] {
  const out: string[] = [];
  for (const entry of entries) {
    if (entry.kind === "formula") {
      out.push(entry.unicode);
    } else if (entry.kind === "subcalc" && entry.entries) {
      out.push(...formulaStrings(entry.entries));
    }
  }
  return out;
}

function formulaAsciiStrings(entries: CalcEntry[]): string[] {
  const out: string[] = [];
  for (const entry of entries) {
    if (entry.kind === "formula") {
      out.push(entry.ascii);
    } else if (entry.kind === "subcalc" && entry.entries) {
      out.push(...formulaAsciiStrings(entry.entries));
    }
  }
  return out;
}

function displayed(container: HTMLElement): string[] {
  return [...container.querySelectorAll(".formula-text")].map((n) => n.textContent ?? "");
}

function visibleFormulaStrings(calc: CalcPayload, open: Set<string>): string[] {
  const out: string[] = [];
  const walk = (entries: CalcEntry[]) => {
    for (const entry of entries) {
      if (entry.kind === "formula") {
        out.push(entry.unicode);
      } else if (entry.kind === "subcalc" && open.has(entry.pos) && entry.entries) {
        walk(entry.entries);
      }
    }
  };
  walk(calc.entries);
  return out;
}

describe("worksheet transcript against the live service", () => {
  const api = new ApiClient(BASE);
  let vm: WorksheetViewModel;
  let container: HTMLElement;

  function redraw(): void {
    renderWorksheet(container, vm, {
      onToggleFold: () => undefined,
      onInspect: () => undefined,
      onKnowledge: () => undefined,
      onBacktrack: () => undefined,
    });
  }

  async function refetch(): Promise<CalcPayload> {
    const calc = await api.getCalc(vm.sessionId, vm.open);
    vm.setCalc(calc);
    redraw();
    return calc;
  }

  /** Fetch with every subproblem unfolded (discovered to a fixpoint). */
  async function deepCalc(): Promise<CalcPayload> {
    const open = new Set<string>();
    for (;;) {
      const calc = await api.getCalc(vm.sessionId, open);
      let grew = false;
      const walk = (entries: CalcEntry[]) => {
        for (const e of entries) {
          if (e.kind === "subcalc") {
            if (!open.has(e.pos)) {
              open.add(e.pos);
              grew = true;
            }
            if (e.entries) {
              walk(e.entries);
            }
          }
        }
      };
      walk(calc.entries);
      if (!grew) {
        return calc;
      }
    }
  }

  function assertFaithful(calc: CalcPayload): void {
    const expected = visibleFormulaStrings(calc, vm.open);
    const shown = displayed(container);
    expect(shown).toEqual(expected);          // exact payload strings, in order
    for (const text of shown) {
      expect(vm.isFromServer(text)).toBe(true); // nothing synthesized locally
    }
  }

  beforeAll(async () => {
    const payload = await api.createSession(["maximum_by", "calculus"], "maximize", MAX_ARGS);
    vm = new WorksheetViewModel(payload.id);
    vm.setCalc(payload.calc);
    container = document.createElement("div");
    document.body.appendChild(container);
    redraw();
  });

  it("performs six program steps, each rendered verbatim", async () => {
    for (let i = 0; i < 6; i++) {
      const payload = await api.step(vm.sessionId, {kind: "do_next"});
      vm.noteOutcome(payload.outcome);
      const calc = await refetch();
      assertFaithful(calc);
      expect(vm.banner?.kind).toBe("Stepped");
    }
  });

  it("accepts a formula input and shows the derived banner", async () => {
    const deepBefore = await deepCalc();
    const current = formulaStrings(deepBefore.entries).length;
    // feed back the server's own latest formula (ascii form): derivable
    // with an empty collapsed derivation
    const latestAscii = formulaAsciiStrings(deepBefore.entries).at(-1) ?? "";
    const payload = await api.step(vm.sessionId, {kind: "formula", text: latestAscii});
    vm.noteOutcome(payload.outcome);
    expect(payload.outcome.kind).toBe("Derived");
    expect(vm.banner?.text).toBe("derived (0 steps)");
    const after = await refetch();
    assertFaithful(after);
    const deepAfter = await deepCalc();
    expect(formulaStrings(deepAfter.entries).length).toBe(current + 1);
  });

  it("unfolds and refolds a subproblem without changing the calculation", async () => {
    const before = await api.getCalc(vm.sessionId, new Set());
    const sub = before.entries.find((e) => e.kind === "subcalc");
    expect(sub).toBeDefined();
    const pos = (sub as {pos: string}).pos;

    vm.toggleFold(pos);
    const unfolded = await refetch();
    assertFaithful(unfolded);
    const inlined = unfolded.entries.find((e) => e.kind === "subcalc" && e.pos === pos);
    expect((inlined as {entries?: unknown}).entries).toBeDefined();
    expect(displayed(container).length).toBeGreaterThan(formulaStrings(before.entries).length);

    vm.toggleFold(pos);
    await refetch();
    const again = await api.getCalc(vm.sessionId, new Set());
    expect(again).toEqual(before);             // fold state never touches the data
  });

  it("fetches the knowledge behind a rewrite rule", async () => {
    const texts = await api.ruleTexts("diff_sum");
    expect(texts).toHaveLength(1);
    expect(texts[0]).toContain("d_d(bdv, u - v)");
  });

  it("backtracks one step and renders the restored state verbatim", async () => {
    const log = await api.log(vm.sessionId);
    const before = await deepCalc();
    const target = log.log.length - 2;
    await api.backtrack(vm.sessionId, target);
    const calc = await refetch();
    assertFaithful(calc);
    const after = await deepCalc();
    expect(formulaStrings(after.entries).length)
      .toBeLessThan(formulaStrings(before.entries).length);
  });
});

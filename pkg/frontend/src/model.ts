// The worksheet view model: a pure projection of the last fetched calc
// payload plus local fold state. No mathematical state is ever created
// here; every formula string the view shows is registered on arrival
// from the server, which makes "no client-side synthesis" auditable.

import type {CalcEntry, CalcPayload, Outcome} from "./types.js";

export interface Row {
  kind: "formula" | "tactic" | "subcalc";
  pos: string;
  depth: number;
  text: string;      // the display string, verbatim from the payload
  marker?: string;
  collapsed?: boolean;
  hasTrace?: boolean;
}

export interface Banner {
  kind: string;
  text: string;
  offerBacktrack: boolean;
}

export class MalformedPayload extends Error {}

export class WorksheetViewModel {
  sessionId: string;
  calc: CalcPayload | null = null;
  open = new Set<string>();          // local fold state: positions held open
  pending = false;                   // at most one in-flight request
  banner: Banner | null = null;
  private provenance = new Set<string>();

  constructor(sessionId: string) {
    this.sessionId = sessionId;
  }

  setCalc(calc: CalcPayload): void {
    if (!calc || !Array.isArray(calc.entries)) {
      throw new MalformedPayload("calc payload has no entries");
    }
    this.registerEntries(calc.entries);
    for (const r of calc.result ?? []) {
      this.provenance.add(r.unicode);
      this.provenance.add(r.ascii);
    }
    this.calc = calc;
  }

  private registerEntries(entries: CalcEntry[]): void {
    for (const entry of entries) {
      if (entry.kind === "formula") {
        if (typeof entry.unicode !== "string" || typeof entry.marker !== "string") {
          throw new MalformedPayload(`formula entry at ${entry.pos} lacks display strings`);
        }
        this.provenance.add(entry.unicode);
        this.provenance.add(entry.ascii);
      } else if (entry.kind === "subcalc" && entry.entries) {
        this.registerEntries(entry.entries);
      }
    }
  }

  noteOutcome(outcome: Outcome): void {
    const formula = "formula" in outcome ? outcome.formula : null;
    if (formula) {
      this.provenance.add(formula.unicode);
      this.provenance.add(formula.ascii);
    }
    this.banner = describeOutcome(outcome);
  }

  isFromServer(text: string): boolean {
    return this.provenance.has(text);
  }

  toggleFold(pos: string): void {
    if (this.open.has(pos)) {
      this.open.delete(pos);
    } else {
      this.open.add(pos);
    }
  }

  /** Flatten the entry tree into display rows, honouring the fold map. */
  rows(): Row[] {
    if (this.calc === null) {
      return [];
    }
    const out: Row[] = [];
    const walk = (entries: CalcEntry[], depth: number) => {
      for (const entry of entries) {
        if (entry.kind === "tactic") {
          out.push({kind: "tactic", pos: entry.pos, depth, text: entry.text});
        } else if (entry.kind === "formula") {
          out.push({
            kind: "formula", pos: entry.pos, depth,
            text: entry.unicode, marker: entry.marker, hasTrace: entry.has_trace,
          });
        } else {
          const unfolded = this.open.has(entry.pos) && entry.entries !== undefined;
          out.push({
            kind: "subcalc", pos: entry.pos, depth,
            text: `Problem [${entry.spec.join(", ")}]`,
            collapsed: !unfolded,
          });
          if (unfolded && entry.entries) {
            walk(entry.entries, depth + 1);
          }
        }
      }
    };
    walk(this.calc.entries, 0);
    return out;
  }
}

export function describeOutcome(outcome: Outcome): Banner {
  switch (outcome.kind) {
    case "Stepped":
      return {kind: "Stepped", text: `stepped: ${outcome.tactic_text}`, offerBacktrack: false};
    case "Located":
      return {kind: "Located", text: `located: ${outcome.tactic_text}`, offerBacktrack: false};
    case "Helpless":
      return {
        kind: "Helpless",
        text: "helpless: the step is kept but the program has no matching tactic",
        offerBacktrack: true,
      };
    case "Derived":
      return {kind: "Derived", text: `derived (${outcome.steps} steps)`, offerBacktrack: false};
    case "NotDerivable":
      return {kind: "NotDerivable", text: "not derivable; calculation unchanged", offerBacktrack: false};
    case "Finished":
      return {
        kind: "Finished",
        text: `finished: [ ${outcome.result.map((r) => `${r.name} = ${r.unicode}`).join(", ")} ]`,
        offerBacktrack: false,
      };
    case "Stuck":
      return {kind: "Stuck", text: `stuck: ${outcome.reason}`, offerBacktrack: true};
  }
}

// Wire types for the worksheet API (docs/api.md). Every payload the UI
// shows originates from these; the client never builds formulas itself.

export interface ApiError {
  code: string;
  message: string;
  position?: string;
}

export type Envelope<T> = {ok: true; payload: T} | {ok: false; error: ApiError};

export interface FormulaText {
  ascii: string;
  unicode: string;
}

export type CalcEntry =
  | {kind: "tactic"; pos: string; text: string; tactic: unknown}
  | {
      kind: "formula";
      pos: string;
      marker: string;
      ascii: string;
      unicode: string;
      justification: string;
      has_trace: boolean;
    }
  | {kind: "subcalc"; pos: string; spec: string[]; collapsed: boolean; entries?: CalcEntry[]};

export interface ResultEntry {
  name: string;
  ascii: string;
  unicode: string;
}

export interface CalcPayload {
  spec: string[];
  status: string;
  entries: CalcEntry[];
  result?: ResultEntry[] | null;
}

export type Outcome =
  | {kind: "Stepped"; tactic_text: string; formula: FormulaText | null; pos: string}
  | {kind: "Located"; tactic_text: string; formula: FormulaText | null; pos: string}
  | {kind: "Helpless"; formula: FormulaText | null; pos: string}
  | {kind: "Derived"; formula: FormulaText; steps: number; pos: string}
  | {kind: "NotDerivable"}
  | {kind: "Finished"; result: ResultEntry[]}
  | {kind: "Stuck"; reason: string};

export interface StepPayload {
  outcome: Outcome;
  calc: CalcPayload;
}

export interface SessionPayload {
  id: string;
  calc: CalcPayload;
}

export interface ContextFact {
  term: string;
  unicode: string;
  origin: string;
}

export type StepRequest =
  | {kind: "do_next"}
  | {kind: "tactic"; text: string}
  | {kind: "formula"; text: string};

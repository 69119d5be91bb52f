// Thin JSON client over the session service. Unwraps envelopes and turns
// error envelopes into ApiFailure so callers deal with one shape.

import type {
  CalcPayload,
  ContextFact,
  Envelope,
  SessionPayload,
  StepPayload,
  StepRequest,
} from "./types.js";

export class ApiFailure extends Error {
  code: string;
  position?: string;

  constructor(code: string, message: string, position?: string) {
    super(message);
    this.code = code;
    this.position = position;
  }
}

type Fetcher = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private base: string;
  private fetcher: Fetcher;

  constructor(base = "", fetcher: Fetcher = (...args) => fetch(...args)) {
    this.base = base.replace(/\/$/, "");
    this.fetcher = fetcher;
  }

  private async call<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetcher(this.base + path, init);
    } catch (err) {
      throw new ApiFailure("network", String(err));
    }
    let body: Envelope<T>;
    try {
      body = (await response.json()) as Envelope<T>;
    } catch {
      throw new ApiFailure("bad_payload", `non-JSON response (${response.status})`);
    }
    if (!("ok" in body)) {
      throw new ApiFailure("bad_payload", "response is not an envelope");
    }
    if (!body.ok) {
      throw new ApiFailure(body.error.code, body.error.message, body.error.position);
    }
    return body.payload;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.call<T>(path, {
      method: "POST",
      headers: {"content-type": "application/json"},
      body: JSON.stringify(payload),
    });
  }

  createSession(spec: string[], method: string, args: Record<string, string>): Promise<SessionPayload> {
    return this.post("/sessions", {spec, method, args});
  }

  getCalc(id: string, unfold: Iterable<string>): Promise<CalcPayload> {
    const list = [...unfold].join(",");
    const query = list ? `?unfold=${encodeURIComponent(list)}` : "";
    return this.call(`/sessions/${id}/calc${query}`);
  }

  step(id: string, request: StepRequest): Promise<StepPayload> {
    return this.post(`/sessions/${id}/step`, request);
  }

  backtrack(id: string, pos: number): Promise<{calc: CalcPayload; log_length: number}> {
    return this.post(`/sessions/${id}/backtrack`, {pos});
  }

  context(id: string, pos: string): Promise<{facts: ContextFact[]}> {
    return this.call(`/sessions/${id}/context?pos=${encodeURIComponent(pos)}`);
  }

  trace(id: string, pos: string): Promise<{steps: Record<string, unknown>[]}> {
    return this.call(`/sessions/${id}/trace?pos=${encodeURIComponent(pos)}`);
  }

  log(id: string): Promise<{log: {index: number; trigger: string; summary: string}[]}> {
    return this.call(`/sessions/${id}/log`);
  }

  theories(): Promise<{theories: string[]}> {
    return this.call("/knowledge/theories");
  }

  theory(name: string): Promise<{name: string; parent: string | null; rules: string[]}> {
    return this.call(`/knowledge/theories/${encodeURIComponent(name)}`);
  }

  /** The rule texts behind a tactic label, searched across all theories. */
  async ruleTexts(ruleName: string): Promise<string[]> {
    const {theories} = await this.theories();
    const out: string[] = [];
    for (const name of theories) {
      const detail = await this.theory(name);
      for (const text of detail.rules) {
        if (text.startsWith(`${ruleName}:`)) {
          out.push(`${name}: ${text}`);
        }
      }
    }
    return out;
  }
}

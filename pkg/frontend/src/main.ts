// Application wiring: one session, one in-flight request at a time, and
// a refetch of the calculation after every command. All mathematical
// content comes from the server; this file only moves it around.

import {ApiClient, ApiFailure} from "./api.js";
import {WorksheetViewModel} from "./model.js";
import {renderContext, renderKnowledge, renderTrace, renderWorksheet, Handlers} from "./render.js";

const DIFF_PRESET = {
  spec: ["differentiate", "function"],
  method: "differentiate",
  args: {
    interval: "interval_open(0, pi/2)",
    f: "8*r^2*sin(alpha)*cos(alpha) - 4*r^2*sin(alpha)^2",
    v: "alpha",
  },
};

export class WorksheetApp {
  api: ApiClient;
  vm: WorksheetViewModel | null = null;
  root: HTMLElement;
  private sheet: HTMLElement;
  private side: HTMLElement;
  private status: HTMLElement;
  private buttons: HTMLButtonElement[] = [];

  constructor(root: HTMLElement, api: ApiClient) {
    this.root = root;
    this.api = api;
    const doc = root.ownerDocument;
    this.status = doc.createElement("div");
    this.status.className = "status";
    this.sheet = doc.createElement("div");
    this.sheet.className = "sheet";
    this.side = doc.createElement("div");
    this.side.className = "side";
    root.append(this.buildControls(), this.status, this.sheet, this.side);
  }

  private buildControls(): HTMLElement {
    const doc = this.root.ownerDocument;
    const bar = doc.createElement("div");
    bar.className = "controls";

    const button = (id: string, label: string, action: () => Promise<void>) => {
      const b = doc.createElement("button");
      b.id = id;
      b.textContent = label;
      b.onclick = () => void this.guarded(action);
      this.buttons.push(b);
      bar.appendChild(b);
      return b;
    };

    button("open", "open", () => this.open());
    button("do-next", "next step", () => this.step({kind: "do_next"}));

    const formulaInput = doc.createElement("input");
    formulaInput.id = "formula-input";
    formulaInput.placeholder = "formula, e.g. 8*r^2*(...)";
    bar.appendChild(formulaInput);
    button("submit-formula", "input formula", () =>
      this.step({kind: "formula", text: formulaInput.value}));

    const tacticInput = doc.createElement("input");
    tacticInput.id = "tactic-input";
    tacticInput.placeholder = "tactic, e.g. Rewrite_Inst [(bdv, alpha)] diff_sin";
    bar.appendChild(tacticInput);
    button("submit-tactic", "input tactic", () =>
      this.step({kind: "tactic", text: tacticInput.value}));

    const backInput = doc.createElement("input");
    backInput.id = "back-input";
    backInput.placeholder = "log step";
    backInput.size = 6;
    bar.appendChild(backInput);
    button("backtrack", "backtrack", () => this.backtrack(parseInt(backInput.value, 10)));
    button("show-context", "context", () => this.showContext());
    return bar;
  }

  /** Serialize commands: at most one in-flight request per session. */
  private async guarded(action: () => Promise<void>): Promise<void> {
    if (this.vm?.pending) {
      return;
    }
    if (this.vm) {
      this.vm.pending = true;
    }
    for (const b of this.buttons) {
      b.disabled = true;
    }
    try {
      await action();
      this.status.textContent = "";
    } catch (err) {
      if (err instanceof ApiFailure) {
        this.status.textContent = `error [${err.code}]: ${err.message}`;
      } else {
        this.status.textContent = String(err);
      }
    } finally {
      if (this.vm) {
        this.vm.pending = false;
      }
      for (const b of this.buttons) {
        b.disabled = false;
      }
      this.redraw();
    }
  }

  async open(): Promise<void> {
    const payload = await this.api.createSession(
      DIFF_PRESET.spec, DIFF_PRESET.method, DIFF_PRESET.args);
    this.vm = new WorksheetViewModel(payload.id);
    this.vm.setCalc(payload.calc);
  }

  async step(request: Parameters<ApiClient["step"]>[1]): Promise<void> {
    if (!this.vm) {
      throw new ApiFailure("no_session", "open a session first");
    }
    const payload = await this.api.step(this.vm.sessionId, request);
    this.vm.noteOutcome(payload.outcome);
    await this.refetch();
  }

  async backtrack(pos: number): Promise<void> {
    if (!this.vm) {
      throw new ApiFailure("no_session", "open a session first");
    }
    await this.api.backtrack(this.vm.sessionId, pos);
    this.vm.banner = {kind: "Backtracked", text: `backtracked to step ${pos}`, offerBacktrack: false};
    await this.refetch();
  }

  async refetch(): Promise<void> {
    if (!this.vm) {
      return;
    }
    this.vm.setCalc(await this.api.getCalc(this.vm.sessionId, this.vm.open));
  }

  async showContext(): Promise<void> {
    if (!this.vm) {
      throw new ApiFailure("no_session", "open a session first");
    }
    const payload = await this.api.context(this.vm.sessionId, "");
    renderContext(this.side, payload.facts);
  }

  handlers(): Handlers {
    return {
      onToggleFold: (pos) => {
        void this.guarded(async () => {
          if (!this.vm) {
            return;
          }
          this.vm.toggleFold(pos);
          await this.refetch();
        });
      },
      onInspect: (pos) => {
        void this.guarded(async () => {
          if (!this.vm) {
            return;
          }
          const payload = await this.api.trace(this.vm.sessionId, pos);
          renderTrace(this.side, payload.steps);
        });
      },
      onKnowledge: (tacticText) => {
        void this.guarded(async () => {
          const match = /^(?:Rewrite|Rewrite_Set)\s+(\w+)|\]\s*(\w+)\s*$/.exec(tacticText);
          const ruleName = match?.[1] ?? match?.[2];
          if (!ruleName) {
            renderKnowledge(this.side, []);
            return;
          }
          renderKnowledge(this.side, await this.api.ruleTexts(ruleName));
        });
      },
      onBacktrack: () => {
        void this.guarded(async () => {
          if (!this.vm) {
            return;
          }
          const log = await this.api.log(this.vm.sessionId);
          const last = Math.max(0, log.log.length - 2);
          await this.backtrack(last);
        });
      },
    };
  }

  redraw(): void {
    if (this.vm) {
      renderWorksheet(this.sheet, this.vm, this.handlers());
    }
  }
}

export function install(doc: Document): WorksheetApp {
  const root = doc.querySelector<HTMLElement>("#app");
  if (!root) {
    throw new Error("missing #app container");
  }
  return new WorksheetApp(root, new ApiClient(""));
}

declare const window: (Window & typeof globalThis) | undefined;
if (typeof window !== "undefined" && typeof document !== "undefined" && document.querySelector("#app")) {
  install(document);
}

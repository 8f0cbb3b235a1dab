/** Small live widgets: payload state readout and the AR/UER forms. */

import { ArDecision, PortalClient } from "./api.js";

/** Shows the latest engineering value of one telemetry path. */
export class PayloadStateWidget {
  readonly root: HTMLElement;
  private readonly valueEl: HTMLElement;
  lastValue: number | null = null;

  constructor(doc: Document, readonly client: PortalClient, readonly path: string) {
    this.root = doc.createElement("div");
    this.root.className = "payload-state";
    const label = doc.createElement("span");
    label.textContent = path.split(".").slice(-2).join(".");
    this.valueEl = doc.createElement("strong");
    this.valueEl.textContent = "–";
    this.root.append(label, doc.createTextNode(" "), this.valueEl);
  }

  async refresh(): Promise<number | null> {
    const value = await this.client.latest(this.path);
    this.lastValue = value;
    this.valueEl.textContent = value === null ? "–" : value.toFixed(3);
    return value;
  }
}

/** Three-field activity-request wizard: task, window, arguments. */
export class ArWizard {
  readonly root: HTMLFormElement;
  readonly taskInput: HTMLInputElement;
  readonly startInput: HTMLInputElement;
  readonly endInput: HTMLInputElement;
  readonly argsInput: HTMLInputElement;
  readonly statusEl: HTMLElement;
  lastDecision: ArDecision | null = null;

  constructor(doc: Document, readonly client: PortalClient) {
    this.root = doc.createElement("form");
    this.root.className = "ar-wizard";
    this.taskInput = this.field(doc, "task", "task id");
    this.startInput = this.field(doc, "start", "window start (ms)");
    this.endInput = this.field(doc, "end", "window end (ms)");
    this.argsInput = this.field(doc, "args", "args (k=v,...)");
    this.statusEl = doc.createElement("p");
    this.statusEl.className = "ar-status";
    this.root.appendChild(this.statusEl);
    this.root.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.submit();
    });
  }

  private field(doc: Document, name: string, placeholder: string): HTMLInputElement {
    const input = doc.createElement("input");
    input.name = name;
    input.placeholder = placeholder;
    this.root.appendChild(input);
    return input;
  }

  parseArgs(): Record<string, unknown> {
    const out: Record<string, unknown> = {};
    for (const pair of this.argsInput.value.split(",")) {
      const [k, v] = pair.split("=");
      if (k && v !== undefined) {
        const n = Number(v);
        out[k.trim()] = Number.isNaN(n) ? v.trim() : n;
      }
    }
    return out;
  }

  async submit(): Promise<ArDecision> {
    const decision = await this.client.submitAr(
      this.taskInput.value.trim(),
      Number(this.startInput.value),
      Number(this.endInput.value),
      this.parseArgs(),
    );
    this.lastDecision = decision;
    this.statusEl.textContent =
      decision.state === "scheduled"
        ? `${decision.ar_id} scheduled at ${decision.start_ms}`
        : `${decision.ar_id} ${decision.state}: ${(decision.conflicts ?? []).join("; ")}`;
    return decision;
  }
}

/** Fire a user execution request against one of the caller's running ARs. */
export class UerPanel {
  readonly root: HTMLFormElement;
  readonly targetInput: HTMLInputElement;
  readonly taskInput: HTMLInputElement;
  readonly argsInput: HTMLInputElement;
  readonly statusEl: HTMLElement;

  constructor(doc: Document, readonly client: PortalClient) {
    this.root = doc.createElement("form");
    this.root.className = "uer-panel";
    this.targetInput = doc.createElement("input");
    this.targetInput.name = "target";
    this.taskInput = doc.createElement("input");
    this.taskInput.name = "uer-task";
    this.argsInput = doc.createElement("input");
    this.argsInput.name = "args";
    this.statusEl = doc.createElement("p");
    this.root.append(this.targetInput, this.taskInput, this.argsInput, this.statusEl);
    this.root.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.fire();
    });
  }

  async fire(args?: Record<string, unknown>): Promise<boolean> {
    try {
      const out = await this.client.submitUer(
        this.targetInput.value.trim(),
        this.taskInput.value.trim(),
        args ?? {},
      );
      this.statusEl.textContent = out.accepted ? "accepted" : "not accepted";
      return out.accepted;
    } catch (err) {
      this.statusEl.textContent = String(err);
      return false;
    }
  }
}

/** Typed client for the ground segment web gateway (docs/api.md). */

export interface SampleJson {
  param_id: string;
  path: string;
  timestamp: number;
  raw: number;
  engineering: number;
  validity: "valid" | "stale" | "invalid";
}

export interface EventJson {
  uid: number;
  id: string;
  source: string;
  severity: "info" | "warning" | "alarm";
  timestamp: number;
  payload: Record<string, unknown>;
}

/** Own schedule entries carry the full record ... */
export interface OwnScheduleEntry {
  ar_id: string;
  task_id: string;
  start_ms: number;
  end_ms: number;
  requester: string;
  args: Record<string, unknown>;
  own: true;
}

/** ... foreign ones only an anonymous busy block. */
export interface ForeignScheduleEntry {
  start_ms: number;
  end_ms: number;
  label: "occupied";
  own: false;
}

export type ScheduleEntry = OwnScheduleEntry | ForeignScheduleEntry;

export interface ArDecision {
  ar_id: string;
  state: "scheduled" | "rejected" | "bumped";
  start_ms?: number;
  conflicts?: string[];
}

export interface StatusJson {
  time_ms: number;
  schedule_version: number;
  executor: { active: string[]; pending: string[]; records: number };
  counters: Record<string, number>;
}

export class GatewayError extends Error {
  constructor(public status: number, detail: string) {
    super(`gateway ${status}: ${detail}`);
  }
}

async function unwrap<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      detail = String(((await resp.json()) as { detail?: string }).detail ?? detail);
    } catch {
      /* non-JSON error body */
    }
    throw new GatewayError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class PortalClient {
  private token: string | null = null;

  constructor(readonly baseUrl: string) {}

  private headers(): Record<string, string> {
    return this.token ? { Authorization: `Bearer ${this.token}` } : {};
  }

  private url(path: string, params?: Record<string, string | number>): string {
    const u = new URL(`/api/v1${path}`, this.baseUrl);
    for (const [k, v] of Object.entries(params ?? {})) {
      u.searchParams.set(k, String(v));
    }
    return u.toString();
  }

  async login(user: string, password: string): Promise<void> {
    const data = await unwrap<{ token: string }>(
      await fetch(this.url("/login"), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ user, password }),
      }),
    );
    this.token = data.token;
  }

  get authenticated(): boolean {
    return this.token !== null;
  }

  async latest(path: string): Promise<number | null> {
    const data = await unwrap<{ engineering: number | null }>(
      await fetch(this.url("/telemetry/latest", { path }), { headers: this.headers() }),
    );
    return data.engineering;
  }

  async archive(prefix: string, t0: number, t1: number): Promise<SampleJson[]> {
    const data = await unwrap<{ samples: SampleJson[] }>(
      await fetch(this.url("/telemetry/archive", { prefix, t0, t1 }), {
        headers: this.headers(),
      }),
    );
    return data.samples;
  }

  /** CSV export as raw bytes, so callers can save or compare verbatim. */
  async exportCsv(prefix: string, t0: number, t1: number): Promise<Uint8Array> {
    const resp = await fetch(this.url("/telemetry/export", { prefix, t0, t1 }), {
      headers: this.headers(),
    });
    if (!resp.ok) {
      throw new GatewayError(resp.status, resp.statusText);
    }
    return new Uint8Array(await resp.arrayBuffer());
  }

  streamUrl(prefix: string, since: number, limit = 1000): string {
    return this.url("/telemetry/stream", { prefix, since, limit });
  }

  streamHeaders(): Record<string, string> {
    return this.headers();
  }

  async events(sinceUid = 0): Promise<EventJson[]> {
    const data = await unwrap<{ events: EventJson[] }>(
      await fetch(this.url("/events", { since_uid: sinceUid }), { headers: this.headers() }),
    );
    return data.events;
  }

  async submitAr(
    taskId: string,
    windowStartMs: number,
    windowEndMs: number,
    args: Record<string, unknown> = {},
  ): Promise<ArDecision> {
    return unwrap<ArDecision>(
      await fetch(this.url("/ars"), {
        method: "POST",
        headers: { "Content-Type": "application/json", ...this.headers() },
        body: JSON.stringify({
          task_id: taskId,
          window_start_ms: windowStartMs,
          window_end_ms: windowEndMs,
          args,
        }),
      }),
    );
  }

  async cancelAr(arId: string): Promise<{ ar_id: string; state: string }> {
    return unwrap(
      await fetch(this.url(`/ars/${arId}`), { method: "DELETE", headers: this.headers() }),
    );
  }

  async submitUer(
    targetArId: string,
    uerTaskId: string,
    args: Record<string, unknown> = {},
  ): Promise<{ accepted: boolean; runs?: string[] }> {
    return unwrap(
      await fetch(this.url("/uers"), {
        method: "POST",
        headers: { "Content-Type": "application/json", ...this.headers() },
        body: JSON.stringify({ target_ar_id: targetArId, uer_task_id: uerTaskId, args }),
      }),
    );
  }

  async schedule(): Promise<{ version: number; entries: ScheduleEntry[] }> {
    return unwrap(await fetch(this.url("/schedule"), { headers: this.headers() }));
  }

  async status(): Promise<StatusJson> {
    return unwrap(await fetch(this.url("/status"), { headers: this.headers() }));
  }

  async overview(): Promise<Record<string, unknown>> {
    return unwrap(await fetch(this.url("/overview"), { headers: this.headers() }));
  }
}

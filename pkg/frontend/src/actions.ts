import type { ApiError, JournalRecord, QueueEntry } from "./types.js";

export type ActionKind = "quarantine" | "power_off" | "patch" | "add_exception";

export interface PendingAction {
  key: string;
  reference: string;
  action: ActionKind;
  target: string;
}

export interface SubmitOutcome {
  ok: boolean;
  pendingKey?: string;
  errorCode?: string;
}

/** Gateway rule mirrored client-side: remediation needs a triaged incident. */
export function canSubmit(entry: Pick<QueueEntry, "state"> | undefined): boolean {
  return entry?.state === "InProgress";
}

export function actionKey(reference: string, action: string, target: string): string {
  return `${reference}|${action}|${target}`;
}

/**
 * Optimistic action submission. A submit puts a pending badge up; the badge
 * clears when the matching action record arrives on the stream, which is
 * the gateway's confirmation. Retries reuse the same idempotency key and
 * are refused while the first attempt is still pending, so a flaky network
 * cannot double-fire a response action.
 */
export class ActionTracker {
  readonly pending = new Map<string, PendingAction>();
  readonly confirmed: PendingAction[] = [];
  readonly errors: ApiError[] = [];

  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
    private readonly requestedBy = "console",
  ) {}

  async submit(reference: string, action: ActionKind, target: string): Promise<SubmitOutcome> {
    const key = actionKey(reference, action, target);
    if (this.pending.has(key)) {
      return { ok: false, errorCode: "duplicate_pending", pendingKey: key };
    }
    this.pending.set(key, { key, reference, action, target });
    let resp: Response;
    try {
      resp = await this.fetchImpl(`${this.baseUrl}/api/actions`, {
        method: "POST",
        headers: { "content-type": "application/json", "x-idempotency-key": key },
        body: JSON.stringify({
          action,
          target,
          incident_ref: reference,
          requested_by: this.requestedBy,
        }),
      });
    } catch {
      // network failure: keep nothing pending, allow a retry with the same key
      this.pending.delete(key);
      return { ok: false, errorCode: "network", pendingKey: key };
    }
    if (!resp.ok) {
      this.pending.delete(key);
      const error = (await resp.json()) as ApiError;
      this.errors.push(error);
      return { ok: false, errorCode: error.code };
    }
    return { ok: true, pendingKey: key };
  }

  /** Feed stream records; action records confirm matching pending badges. */
  reconcile(record: JournalRecord): void {
    if (record.kind !== "action") return;
    const body = record.body as Record<string, any>;
    const key = actionKey(body.incident_ref, body.action, body.target);
    const entry = this.pending.get(key);
    if (entry) {
      this.pending.delete(key);
      this.confirmed.push(entry);
    }
  }

  isPending(reference: string, action: ActionKind, target: string): boolean {
    return this.pending.has(actionKey(reference, action, target));
  }
}

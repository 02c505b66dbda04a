// Wire shapes mirrored from the gateway API. The console never invents
// state: everything below arrives over /api/stream or the REST endpoints.

export type JournalKind =
  | "telemetry"
  | "event"
  | "alert"
  | "incident"
  | "action"
  | "import"
  | "sim_delta";

export interface JournalRecord {
  seq: number;
  ts_ms: number;
  kind: JournalKind;
  body: Record<string, unknown>;
  digest: string;
}

export interface QueueEntry {
  reference: string;
  priority: number;
  state: string;
  tier: string;
  response_due_ms: number;
  opened_ms: number;
}

export interface BoardTile {
  dedup_key: string;
  event_type: string;
  severity: number;
  count: number;
  last_seen_ms: number;
}

export interface ApiError {
  status: number;
  code: string;
  detail: string;
}

export type NodeStatusName =
  | "Active"
  | "Quarantined"
  | "PoweredOff"
  | "Dead"
  | "Compromised";

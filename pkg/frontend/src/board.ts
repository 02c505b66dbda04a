import type { BoardTile, JournalRecord, NodeStatusName, QueueEntry } from "./types.js";

/**
 * The console's entire model, rebuilt by folding journal records in seq
 * order. Replaying the same stream from seq 0 always reproduces the same
 * board and queue; the only cursor is lastSeq.
 */
export interface ConsoleState {
  lastSeq: number;
  tiles: Map<string, BoardTile>;
  queue: Map<string, QueueEntry>;
  nodeStatus: Map<string, NodeStatusName>;
  alertIndex: Map<number, string>; // alert_id -> dedup_key
}

export function emptyState(): ConsoleState {
  return {
    lastSeq: 0,
    tiles: new Map(),
    queue: new Map(),
    nodeStatus: new Map(),
    alertIndex: new Map(),
  };
}

/**
 * Fold one stream record into the state. Records must arrive in seq order;
 * a record at or before lastSeq is a duplicate and is ignored, which makes
 * reconnect overlap harmless.
 */
export function applyRecord(state: ConsoleState, record: JournalRecord): ConsoleState {
  if (record.seq <= state.lastSeq) return state;
  state.lastSeq = record.seq;
  const body = record.body as Record<string, any>;
  switch (record.kind) {
    case "alert":
      if (body.op === "new") {
        state.alertIndex.set(body.alert_id, body.dedup_key);
        state.tiles.set(body.dedup_key, {
          dedup_key: body.dedup_key,
          event_type: body.event_type,
          severity: body.severity,
          count: 1,
          last_seen_ms: body.last_seen_ms,
        });
      } else {
        const key = state.alertIndex.get(body.alert_id);
        const tile = key === undefined ? undefined : state.tiles.get(key);
        if (tile) {
          tile.count += 1;
          tile.last_seen_ms = body.last_seen_ms;
          tile.severity = body.severity;
        }
      }
      break;
    case "incident":
      if (body.op === "open") {
        state.queue.set(body.reference, {
          reference: body.reference,
          priority: body.priority,
          state: body.state,
          tier: body.tier,
          response_due_ms: body.response_due_ms,
          opened_ms: body.opened_ms,
        });
      } else if (body.op === "transition") {
        const entry = state.queue.get(body.reference);
        if (entry) entry.state = body.to;
      }
      break;
    case "sim_delta":
      if (body.kind === "status_change") {
        state.nodeStatus.set(body.node_id, body.to);
      } else if (body.kind === "run_start") {
        for (const nid of body.nodes as string[]) state.nodeStatus.set(nid, "Active");
      } else if (body.kind === "rogue_joined") {
        state.nodeStatus.set(body.node_id, "Active");
      }
      break;
    default:
      break; // telemetry/event/import/action need no board state
  }
  return state;
}

export function tilesBySeverity(state: ConsoleState): BoardTile[] {
  return [...state.tiles.values()].sort(
    (a, b) => a.severity - b.severity || b.last_seen_ms - a.last_seen_ms,
  );
}

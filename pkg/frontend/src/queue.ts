import type { QueueEntry } from "./types.js";

/**
 * Triage order for the incident queue: priority first (P1 on top), then the
 * nearest response deadline, then reference for a total, stable order.
 * Pure function; the queue view is fully determined by its entries.
 */
export function orderQueue(entries: readonly QueueEntry[]): QueueEntry[] {
  return [...entries].sort((a, b) => {
    if (a.priority !== b.priority) return a.priority - b.priority;
    if (a.response_due_ms !== b.response_due_ms) return a.response_due_ms - b.response_due_ms;
    return a.reference < b.reference ? -1 : a.reference > b.reference ? 1 : 0;
  });
}

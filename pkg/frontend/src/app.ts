import { ActionTracker, canSubmit, type ActionKind } from "./actions.js";
import { applyRecord, emptyState, tilesBySeverity } from "./board.js";
import { orderQueue } from "./queue.js";
import { StreamClient } from "./stream.js";
import type { JournalRecord } from "./types.js";

const SEVERITY_LABEL: Record<number, string> = { 1: "sev1", 2: "sev2", 3: "sev3", 4: "sev4", 5: "sev5" };
const ACTIONS: ActionKind[] = ["quarantine", "power_off", "patch", "add_exception"];

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function mountConsole(root: HTMLElement, baseUrl = ""): () => void {
  const state = emptyState();
  const tracker = new ActionTracker(baseUrl);

  const banner = el("div", "banner hidden", "stream disconnected, resuming...");
  const toast = el("div", "toast hidden");
  const board = el("div", "board");
  const queueTable = el("div", "queue");
  const topo = el("div", "topo");
  root.append(banner, board, queueTable, topo, toast);

  let toastTimer: ReturnType<typeof setTimeout> | undefined;
  function showToast(text: string): void {
    toast.textContent = text;
    toast.classList.remove("hidden");
    if (toastTimer) clearTimeout(toastTimer);
    toastTimer = setTimeout(() => toast.classList.add("hidden"), 4000);
  }

  function renderBoard(): void {
    board.replaceChildren(el("h2", "", "Alerts"));
    for (const tile of tilesBySeverity(state)) {
      const div = el("div", `tile ${SEVERITY_LABEL[tile.severity] ?? "sev5"}`);
      div.append(
        el("span", "tile-type", tile.event_type),
        el("span", "tile-key", tile.dedup_key),
        el("span", "tile-count", `x${tile.count}`),
      );
      board.append(div);
    }
  }

  function renderQueue(): void {
    queueTable.replaceChildren(el("h2", "", "Incident queue"));
    for (const entry of orderQueue([...state.queue.values()])) {
      const row = el("div", `incident state-${entry.state.toLowerCase()}`);
      row.append(
        el("span", "ref", entry.reference),
        el("span", "prio", `P${entry.priority}`),
        el("span", "tier", entry.tier),
        el("span", "state", entry.state),
      );
      for (const action of ACTIONS) {
        const button = document.createElement("button");
        button.textContent = action;
        button.disabled = !canSubmit(entry);
        button.onclick = async () => {
          const target = prompt(`${action} target node id:`) ?? "";
          if (!target) return;
          const outcome = await tracker.submit(entry.reference, action, target);
          if (!outcome.ok && outcome.errorCode !== "duplicate_pending") {
            showToast(`action failed: ${outcome.errorCode}`);
          }
          renderQueue();
        };
        row.append(button);
      }
      if ([...tracker.pending.values()].some((p) => p.reference === entry.reference)) {
        row.append(el("span", "pending", "pending..."));
      }
      queueTable.append(row);
    }
  }

  function renderTopo(): void {
    topo.replaceChildren(el("h2", "", "Fleet"));
    for (const [nid, status] of [...state.nodeStatus.entries()].sort()) {
      topo.append(el("span", `node node-${status.toLowerCase()}`, nid));
    }
  }

  function renderAll(): void {
    renderBoard();
    renderQueue();
    renderTopo();
  }

  const client = new StreamClient({
    baseUrl,
    onRecord: (record: JournalRecord) => {
      applyRecord(state, record);
      tracker.reconcile(record);
      renderAll();
    },
    onStatus: (connected: boolean) => {
      banner.classList.toggle("hidden", connected);
    },
  });
  client.start();
  renderAll();
  return () => client.stop();
}

declare global {
  interface Window {
    mountConsole?: typeof mountConsole;
  }
}

if (typeof window !== "undefined") {
  window.mountConsole = mountConsole;
}

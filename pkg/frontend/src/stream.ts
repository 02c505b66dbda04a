import type { JournalRecord } from "./types.js";

export interface StreamOptions {
  baseUrl: string;
  kinds?: string[];
  lastSeq?: number;
  onRecord: (record: JournalRecord) => void;
  onStatus?: (connected: boolean) => void;
  /** reconnect backoff in ms; tests shrink it */
  retryMs?: number;
  fetchImpl?: typeof fetch;
}

/**
 * Server-sent-events subscriber over fetch streaming (works in browsers and
 * node). Tracks the last applied seq and resumes from it on every
 * reconnect, so a dropped connection never loses or repeats records.
 */
export class StreamClient {
  private lastSeq: number;
  private stopped = false;
  private controller: AbortController | null = null;

  constructor(private readonly opts: StreamOptions) {
    this.lastSeq = opts.lastSeq ?? 0;
  }

  get cursor(): number {
    return this.lastSeq;
  }

  start(): void {
    void this.loop();
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
  }

  private url(): string {
    const params = new URLSearchParams({ last_seq: String(this.lastSeq) });
    if (this.opts.kinds?.length) params.set("kinds", this.opts.kinds.join(","));
    return `${this.opts.baseUrl}/api/stream?${params}`;
  }

  private async loop(): Promise<void> {
    const retry = this.opts.retryMs ?? 1000;
    const doFetch = this.opts.fetchImpl ?? fetch;
    while (!this.stopped) {
      this.controller = new AbortController();
      try {
        const resp = await doFetch(this.url(), { signal: this.controller.signal });
        if (!resp.ok || !resp.body) throw new Error(`stream http ${resp.status}`);
        this.opts.onStatus?.(true);
        await this.consume(resp.body);
      } catch {
        // fall through to reconnect
      }
      this.opts.onStatus?.(false);
      if (this.stopped) return;
      await new Promise((r) => setTimeout(r, retry));
    }
  }

  private async consume(body: ReadableStream<Uint8Array>): Promise<void> {
    const reader = body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) return;
      buffer += decoder.decode(value, { stream: true });
      let split;
      while ((split = buffer.indexOf("\n\n")) >= 0) {
        const frame = buffer.slice(0, split);
        buffer = buffer.slice(split + 2);
        if (!frame.startsWith("data: ")) continue; // keepalive comment
        const record = JSON.parse(frame.slice(6)) as JournalRecord;
        if (record.seq <= this.lastSeq) continue; // reconnect overlap
        this.lastSeq = record.seq;
        this.opts.onRecord(record);
      }
    }
  }
}

// WebSocket stream client with reconnect-and-replay: on connection loss it
// reopens from the last seen seq, so no event is missed or duplicated.

import { StreamFrame } from './types.js';

type SocketFactory = (url: string) => WebSocket;

export interface StreamOptions {
  maxRetries?: number;
  retryDelayMs?: number;
  socketFactory?: SocketFactory;
}

export class StreamClient {
  private ws: WebSocket | null = null;
  private lastSeq: number;
  private retries = 0;
  private closed = false;
  private readonly maxRetries: number;
  private readonly retryDelayMs: number;
  private readonly factory: SocketFactory;

  onFrame?: (frame: StreamFrame) => void;
  onClose?: () => void;
  onReconnect?: (fromSeq: number) => void;

  constructor(private baseUrl: string, private sessionId: string,
              opts: StreamOptions = {}, fromSeq = 0) {
    this.lastSeq = fromSeq - 1;
    this.maxRetries = opts.maxRetries ?? 5;
    this.retryDelayMs = opts.retryDelayMs ?? 500;
    this.factory = opts.socketFactory ?? ((url) => new WebSocket(url));
  }

  private url(fromSeq: number): string {
    return `${this.baseUrl}/sessions/${this.sessionId}/stream?from_seq=${fromSeq}`;
  }

  connect(): void {
    if (this.closed) return;
    const fromSeq = this.lastSeq + 1;
    this.ws = this.factory(this.url(fromSeq));
    this.ws.onopen = () => { this.retries = 0; };
    this.ws.onmessage = (msg: MessageEvent) => this.handleMessage(String(msg.data));
    this.ws.onclose = () => this.handleClose();
    this.ws.onerror = () => { /* onclose follows */ };
  }

  private handleMessage(data: string): void {
    let frame: StreamFrame;
    try {
      frame = JSON.parse(data);
    } catch {
      return;
    }
    if (frame.type === 'event') {
      if (frame.event.seq <= this.lastSeq) return; // replay overlap guard
      this.lastSeq = frame.event.seq;
      if (frame.event.topic === 'session_ended') this.closed = true;
    }
    this.onFrame?.(frame);
  }

  private handleClose(): void {
    if (this.closed) {
      this.onClose?.();
      return;
    }
    if (this.retries >= this.maxRetries) {
      this.onClose?.();
      return;
    }
    this.retries += 1;
    setTimeout(() => {
      if (this.closed) return;
      this.onReconnect?.(this.lastSeq + 1);
      this.connect();
    }, this.retryDelayMs * this.retries);
  }

  lastSeenSeq(): number {
    return this.lastSeq;
  }

  /** Simulate a dropped connection (testing aid). */
  dropConnection(): void {
    this.ws?.close();
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }
}

// Reconnecting socket with mailbox semantics: the render loop consumes
// only the newest state text once per frame, so a slow tab never builds a
// backlog, and a dropped connection retries with exponential backoff.

export interface SocketLike {
  send(text: string): void;
  close(): void;
  onopen: ((ev: any) => void) | null;
  onmessage: ((ev: any) => void) | null;
  onclose: ((ev: any) => void) | null;
  onerror: ((ev: any) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientEvents {
  onConnect?: () => void;
  onDisconnect?: () => void;
}

export class TeleopClient {
  private socket: SocketLike | null = null;
  private mailbox: string | null = null;
  private backoffMs = 250;
  private closed = false;
  private retryTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly url: string,
    private readonly factory: SocketFactory,
    private readonly events: ClientEvents = {},
  ) {}

  connect(): void {
    if (this.closed) return;
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.backoffMs = 250;
      this.events.onConnect?.();
    };
    socket.onmessage = (ev) => {
      this.mailbox = String(ev.data);
    };
    const retry = () => {
      if (this.closed) return;
      this.socket = null;
      this.events.onDisconnect?.();
      this.retryTimer = setTimeout(() => this.connect(), this.backoffMs);
      this.backoffMs = Math.min(this.backoffMs * 2, 5000);
    };
    socket.onclose = retry;
    socket.onerror = () => {
      // the close handler performs the retry; some sockets fire both
    };
  }

  get ready(): boolean {
    return this.socket !== null;
  }

  // commands sent while disconnected are dropped, not queued
  send(text: string): void {
    if (this.socket === null) return;
    try {
      this.socket.send(text);
    } catch {
      /* racing a close: the reconnect path takes over */
    }
  }

  // newest message since the last call, or null
  take(): string | null {
    const m = this.mailbox;
    this.mailbox = null;
    return m;
  }

  close(): void {
    this.closed = true;
    if (this.retryTimer !== null) clearTimeout(this.retryTimer);
    this.socket?.close();
    this.socket = null;
  }
}

// Pilot session state machine: hello/grant handshake, server-paced command
// stream, ping-measured latency, and strict render-from-last-push semantics.

import {
  CommandPayload,
  Message,
  StatePushPayload,
  TeleopMode,
  decodeMessage,
  encodeMessage,
} from "./protocol.js";

export type ConnectionState = "connecting" | "online" | "closed";

export interface UiSessionState {
  connection: ConnectionState;
  role: "pending" | "pilot" | "observer";
  controlling: boolean;
  denyReason: string | null;
  latencyMs: number | null;        // last ping round trip
  mode: TeleopMode | null;         // last acknowledged mode_event only
  lastPush: StatePushPayload | null;
  lastPushAtMs: number | null;     // client clock, for the hold banner
  errors: string[];
}

export interface SocketLike {
  send(data: Uint8Array): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
}

export interface SessionOptions {
  role?: "pilot" | "observer";
  nowMs?: () => number;
  pingEveryPushes?: number;        // ping cadence in StatePush counts
  commandProvider?: (simTime: number) => CommandPayload | null;
  onStatePush?: (p: StatePushPayload) => void;
  onUpdate?: (s: UiSessionState) => void;
}

const TICK_MS = 1000 / 30;

export class PilotSession {
  readonly state: UiSessionState = {
    connection: "connecting",
    role: "pending",
    controlling: false,
    denyReason: null,
    latencyMs: null,
    mode: null,
    lastPush: null,
    lastPushAtMs: null,
    errors: [],
  };
  commandsSent = 0;
  private seq = 0;
  private readonly now: () => number;
  private readonly opts: SessionOptions;
  private pendingPings = new Map<number, number>();

  constructor(private socket: SocketLike, opts: SessionOptions = {}) {
    this.opts = opts;
    this.now = opts.nowMs ?? (() => Date.now());
    socket.onopen = () => {
      this.send("hello", { role: opts.role ?? "pilot" });
    };
    socket.onmessage = (ev) => this.handleData(ev.data);
    socket.onclose = () => {
      this.state.connection = "closed";
      this.state.controlling = false;
      this.notify();
    };
    socket.onerror = () => {
      this.state.errors.push("socket error");
      this.notify();
    };
  }

  private notify(): void {
    this.opts.onUpdate?.(this.state);
  }

  send(kind: Message["kind"], payload: Record<string, unknown>): void {
    const msg: Message = { kind, seq: this.seq++, t_sent: this.now(), payload };
    this.socket.send(encodeMessage(msg));
  }

  ping(): void {
    const seq = this.seq;
    this.pendingPings.set(seq, this.now());
    this.send("ping", {});
  }

  release(): void {
    if (this.state.controlling) {
      this.send("command_push", { pedals: [0, 0, 0, 0], keys: [], release: true });
      this.state.controlling = false;
      this.notify();
    }
  }

  close(): void {
    this.socket.close();
  }

  // True when the robot would be holding: no fresh StatePush for > 2 ticks.
  holdBanner(): boolean {
    if (this.state.lastPushAtMs === null) return true;
    return this.now() - this.state.lastPushAtMs > 2 * TICK_MS;
  }

  private handleData(data: unknown): void {
    let bytes: Uint8Array;
    if (data instanceof Uint8Array) {
      bytes = data;
    } else if (data instanceof ArrayBuffer) {
      bytes = new Uint8Array(data);
    } else if (typeof Buffer !== "undefined" && Buffer.isBuffer(data)) {
      bytes = new Uint8Array(data);
    } else {
      this.state.errors.push("non-binary frame");
      this.notify();
      return;
    }
    let msg: Message;
    try {
      msg = decodeMessage(bytes);
    } catch (err) {
      this.state.errors.push(String(err));
      this.notify();
      return;
    }
    this.handleMessage(msg);
  }

  private handleMessage(msg: Message): void {
    switch (msg.kind) {
      case "control_grant":
        this.state.connection = "online";
        this.state.role = "pilot";
        this.state.controlling = true;
        this.state.denyReason = null;
        break;
      case "control_deny":
        this.state.connection = "online";
        this.state.role = "observer";   // deny surfaces as observer mode
        this.state.controlling = false;
        this.state.denyReason = String(msg.payload.reason ?? "denied");
        break;
      case "mode_event":
        this.state.connection = "online";
        this.state.mode = msg.payload.mode as TeleopMode;
        break;
      case "pong": {
        const sent = this.pendingPings.get(msg.payload.echo_seq as number);
        if (sent !== undefined) {
          this.pendingPings.delete(msg.payload.echo_seq as number);
          this.state.latencyMs = this.now() - sent;
        }
        break;
      }
      case "state_push": {
        const push = msg.payload as unknown as StatePushPayload;
        this.state.connection = "online";
        this.state.lastPush = push;
        this.state.lastPushAtMs = this.now();
        this.opts.onStatePush?.(push);
        if (this.state.controlling && this.opts.commandProvider) {
          const cmd = this.opts.commandProvider(push.sim_time);
          if (cmd) {
            this.send("command_push", cmd as unknown as Record<string, unknown>);
            this.commandsSent += 1;
          }
        }
        const cadence = this.opts.pingEveryPushes ?? 30;
        if (cadence > 0 && push.tick % cadence === 0) {
          this.ping();
        }
        break;
      }
      case "error":
        this.state.errors.push(String(msg.payload.reason));
        break;
      default:
        break;
    }
    this.notify();
  }
}

// Reconnecting wrapper: a pilot denied control retries with fresh sessions
// until the token frees up (closing the holder's tab releases it server-side
// within a tick, so the next retry wins).
export class ControlSeeker {
  session: PilotSession | null = null;
  attempts = 0;
  private stopped = false;

  constructor(
    private connect: () => SocketLike,
    private opts: SessionOptions & { retryMs?: number } = {},
  ) {}

  start(): void {
    this.attempts += 1;
    const retryMs = this.opts.retryMs ?? 1000;
    let retired = false; // one retry per denied session, not per update
    const sess = new PilotSession(this.connect(), {
      ...this.opts,
      onUpdate: (st) => {
        this.opts.onUpdate?.(st);
        if (this.stopped || retired) return;
        if (st.role === "observer" && st.denyReason === "busy") {
          retired = true;
          sess.close();
          setTimeout(() => {
            if (!this.stopped) this.start();
          }, retryMs);
        }
      },
    });
    this.session = sess;
  }

  stop(): void {
    this.stopped = true;
    this.session?.close();
  }
}

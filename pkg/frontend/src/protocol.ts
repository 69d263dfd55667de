// Wire protocol codec for the pilot service (schema version 1).
// Framing: 1-byte kind tag, u32 big-endian payload length, canonical JSON
// (sorted keys, no whitespace). See docs/protocol_schema.md in the robot repo.

export const KIND_TAGS = {
  hello: 1,
  state_push: 2,
  command_push: 3,
  mode_event: 4,
  ping: 5,
  pong: 6,
  control_grant: 7,
  control_deny: 8,
  error: 9,
} as const;

export type Kind = keyof typeof KIND_TAGS;

const TAG_KINDS = new Map<number, Kind>(
  Object.entries(KIND_TAGS).map(([k, v]) => [v, k as Kind]),
);

export type TeleopMode = "walking" | "operation";

export interface StatePushPayload {
  tick: number;
  sim_time: number;
  state: number[];       // 18 slots
  mode: TeleopMode;
  base: number[];        // [x, y, heading]
}

export interface HandEstimate {
  pose: number[];        // [qw qx qy qz tx ty tz]
  rms: number;
  n_tags: number;
  ambiguity: boolean;
  converged: boolean;
  timestamp: number;
}

export interface CommandPayload {
  pedals: number[];
  keys: string[];
  left?: HandEstimate;
  right?: HandEstimate;
  release?: true;
}

export interface Message {
  kind: Kind;
  seq: number;
  t_sent: number;
  payload: Record<string, unknown>;
}

export class MalformedMessage extends Error {
  constructor(public position: number, reason: string) {
    super(`byte ${position}: ${reason}`);
  }
}

// Canonical JSON: objects serialized with sorted keys, compact separators.
function canonicalJson(value: unknown): string {
  if (value === null || typeof value === "number" || typeof value === "boolean") {
    return JSON.stringify(value);
  }
  if (typeof value === "string") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  if (typeof value === "object") {
    const obj = value as Record<string, unknown>;
    const keys = Object.keys(obj).sort();
    return "{" + keys.map((k) => JSON.stringify(k) + ":" + canonicalJson(obj[k])).join(",") + "}";
  }
  throw new Error(`cannot serialize ${typeof value}`);
}

export function encodeMessage(m: Message): Uint8Array {
  if (!(m.kind in KIND_TAGS)) {
    throw new Error(`unknown kind ${m.kind}`);
  }
  const body: Record<string, unknown> = { seq: m.seq, t_sent: m.t_sent, ...m.payload };
  const json = new TextEncoder().encode(canonicalJson(body));
  const out = new Uint8Array(5 + json.length);
  out[0] = KIND_TAGS[m.kind];
  new DataView(out.buffer).setUint32(1, json.length, false);
  out.set(json, 5);
  return out;
}

function isNum(x: unknown): x is number {
  return typeof x === "number" && Number.isFinite(x);
}

function isNumArray(x: unknown, n?: number): x is number[] {
  return Array.isArray(x) && (n === undefined || x.length === n) && x.every(isNum);
}

export function decodeMessage(data: Uint8Array): Message {
  if (data.length < 5) {
    throw new MalformedMessage(data.length, "truncated header (need 5 bytes)");
  }
  const kind = TAG_KINDS.get(data[0]);
  if (kind === undefined) {
    throw new MalformedMessage(0, `unknown kind tag ${data[0]}`);
  }
  const length = new DataView(data.buffer, data.byteOffset).getUint32(1, false);
  if (data.length - 5 !== length) {
    throw new MalformedMessage(5, `length field ${length} != payload bytes ${data.length - 5}`);
  }
  let body: unknown;
  try {
    body = JSON.parse(new TextDecoder("utf-8", { fatal: true }).decode(data.subarray(5)));
  } catch (err) {
    throw new MalformedMessage(5, `payload not JSON: ${err}`);
  }
  if (typeof body !== "object" || body === null || Array.isArray(body)) {
    throw new MalformedMessage(5, "payload must be a JSON object");
  }
  const obj = body as Record<string, unknown>;
  const seq = obj.seq;
  const tSent = obj.t_sent;
  delete obj.seq;
  delete obj.t_sent;
  if (typeof seq !== "number" || !Number.isInteger(seq) || seq < 0) {
    throw new MalformedMessage(5, "seq must be a non-negative integer");
  }
  if (!isNum(tSent)) {
    throw new MalformedMessage(5, "t_sent must be a finite number");
  }
  validatePayload(kind, obj);
  return { kind, seq, t_sent: tSent, payload: obj };
}

function validatePayload(kind: Kind, p: Record<string, unknown>): void {
  const fail = (reason: string): never => {
    throw new MalformedMessage(5, reason);
  };
  switch (kind) {
    case "hello":
      if (p.role !== "pilot" && p.role !== "observer") fail(`bad role ${p.role}`);
      break;
    case "state_push":
      if (!Number.isInteger(p.tick) || (p.tick as number) < 0) fail("bad tick");
      if (!isNum(p.sim_time)) fail("bad sim_time");
      if (!isNumArray(p.state, 18)) fail("state must be 18 numbers");
      if (p.mode !== "walking" && p.mode !== "operation") fail(`bad mode ${p.mode}`);
      if (!isNumArray(p.base, 3)) fail("base must be [x, y, heading]");
      break;
    case "command_push":
      if (!isNumArray(p.pedals, 4) || (p.pedals as number[]).some((v) => v < 0 || v > 1)) {
        fail("pedals must be 4 numbers in [0,1]");
      }
      if (!Array.isArray(p.keys) || !(p.keys as unknown[]).every((k) => typeof k === "string")) {
        fail("keys must be strings");
      }
      break;
    case "mode_event":
      if (p.mode !== "walking" && p.mode !== "operation") fail(`bad mode ${p.mode}`);
      break;
    case "pong":
      if (!Number.isInteger(p.echo_seq)) fail("bad echo_seq");
      if (!isNum(p.echo_t_sent)) fail("bad echo_t_sent");
      break;
    case "control_grant":
      if (typeof p.session_id !== "string") fail("bad session_id");
      break;
    case "control_deny":
    case "error":
      if (typeof p.reason !== "string") fail("bad reason");
      break;
    case "ping":
      break;
  }
}

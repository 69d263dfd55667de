"""Wire protocol for the remote-teleoperation service.

Framing: one byte kind tag, a 4-byte big-endian payload length, then the
payload as canonical JSON (sorted keys, compact separators, UTF-8). The
canonical form makes encode(decode(x)) byte-stable and the frame survives any
ordered reliable byte stream. Each message carries a per-sender sequence
number and a send timestamp in milliseconds.

Schema summary (also published in docs/protocol_schema.md):
  Hello        {role}                              client -> server, first
  StatePush    {tick, sim_time, state, mode, base} server -> all, 30 Hz
  CommandPush  {pedals, keys, left?, right?, release?} holder -> server
  ModeEvent    {mode}                              server -> all, on change
  Ping         {}                                  either direction
  Pong         {echo_seq, echo_t_sent}             reply to Ping
  ControlGrant {session_id}                        server -> new holder
  ControlDeny  {reason}                            server -> pilot
  Error        {reason}                            server -> client, then close
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

KIND_TAGS = {
    "hello": 1,
    "state_push": 2,
    "command_push": 3,
    "mode_event": 4,
    "ping": 5,
    "pong": 6,
    "control_grant": 7,
    "control_deny": 8,
    "error": 9,
}
TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}

MAX_PAYLOAD_BYTES = 1 << 20


class MalformedMessage(Exception):
    def __init__(self, position: int, reason: str):
        self.position = position
        self.reason = reason
        super().__init__(f"byte {position}: {reason}")


class ProtocolViolation(Exception):
    pass


@dataclass(frozen=True)
class Message:
    kind: str
    seq: int
    t_sent: float  # ms
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KIND_TAGS:
            raise ValueError(f"unknown message kind {self.kind!r}")
        if not isinstance(self.seq, int) or self.seq < 0 or self.seq >= 1 << 64:
            raise ValueError("seq must be a u64")
        if not (isinstance(self.t_sent, (int, float)) and math.isfinite(self.t_sent)):
            raise ValueError("t_sent must be a finite number")


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _is_num_list(x, n=None) -> bool:
    if not isinstance(x, list) or (n is not None and len(x) != n):
        return False
    return all(_is_num(v) for v in x)


def _check_estimate(est) -> bool:
    if not isinstance(est, dict):
        return False
    if set(est) != {"pose", "rms", "n_tags", "ambiguity", "converged", "timestamp"}:
        return False
    return (_is_num_list(est["pose"], 7)
            and _is_num(est["rms"]) and est["rms"] >= 0
            and isinstance(est["n_tags"], int) and est["n_tags"] >= 1
            and isinstance(est["ambiguity"], bool)
            and isinstance(est["converged"], bool)
            and _is_num(est["timestamp"]))


def _validate_payload(kind: str, p: dict) -> str | None:
    """Returns an error string or None. Unknown keys are rejected."""
    def only(*keys, optional=()):
        extras = set(p) - set(keys) - set(optional)
        missing = set(keys) - set(p)
        if extras:
            return f"unexpected payload keys {sorted(extras)}"
        if missing:
            return f"missing payload keys {sorted(missing)}"
        return None

    if kind == "hello":
        err = only("role")
        if err:
            return err
        if p["role"] not in ("pilot", "observer"):
            return f"bad role {p['role']!r}"
    elif kind == "state_push":
        err = only("tick", "sim_time", "state", "mode", "base")
        if err:
            return err
        if not (isinstance(p["tick"], int) and p["tick"] >= 0):
            return "tick must be a non-negative int"
        if not _is_num(p["sim_time"]):
            return "sim_time must be a number"
        if not _is_num_list(p["state"], 18):
            return "state must be 18 numbers"
        if p["mode"] not in ("walking", "operation"):
            return f"bad mode {p['mode']!r}"
        if not _is_num_list(p["base"], 3):
            return "base must be [x, y, heading]"
    elif kind == "command_push":
        err = only("pedals", "keys", optional=("left", "right", "release"))
        if err:
            return err
        if not _is_num_list(p["pedals"], 4) or not all(0 <= v <= 1 for v in p["pedals"]):
            return "pedals must be 4 numbers in [0,1]"
        if not (isinstance(p["keys"], list) and all(isinstance(k, str) for k in p["keys"])):
            return "keys must be a list of strings"
        for hand in ("left", "right"):
            if hand in p and not _check_estimate(p[hand]):
                return f"bad {hand} estimate"
        if "release" in p and p["release"] is not True:
            return "release must be true when present"
    elif kind == "mode_event":
        err = only("mode")
        if err:
            return err
        if p["mode"] not in ("walking", "operation"):
            return f"bad mode {p['mode']!r}"
    elif kind == "ping":
        err = only()
        if err:
            return err
    elif kind == "pong":
        err = only("echo_seq", "echo_t_sent")
        if err:
            return err
        if not (isinstance(p["echo_seq"], int) and p["echo_seq"] >= 0):
            return "echo_seq must be a non-negative int"
        if not _is_num(p["echo_t_sent"]):
            return "echo_t_sent must be a number"
    elif kind == "control_grant":
        err = only("session_id")
        if err:
            return err
        if not isinstance(p["session_id"], str):
            return "session_id must be a string"
    elif kind in ("control_deny", "error"):
        err = only("reason")
        if err:
            return err
        if not isinstance(p["reason"], str):
            return "reason must be a string"
    return None


def encode_msg(m: Message) -> bytes:
    err = _validate_payload(m.kind, m.payload)
    if err:
        raise ValueError(f"cannot encode {m.kind}: {err}")
    body = {"seq": m.seq, "t_sent": m.t_sent, **m.payload}
    payload = json.dumps(body, sort_keys=True, separators=(",", ":")).encode()
    return struct.pack(">BI", KIND_TAGS[m.kind], len(payload)) + payload


def decode_msg(data: bytes) -> Message:
    """Parse one framed message; never raises anything but MalformedMessage."""
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise MalformedMessage(0, "not a byte buffer")
    data = bytes(data)
    if len(data) < 5:
        raise MalformedMessage(len(data), "truncated header (need 5 bytes)")
    tag, length = struct.unpack(">BI", data[:5])
    kind = TAG_KINDS.get(tag)
    if kind is None:
        raise MalformedMessage(0, f"unknown kind tag {tag}")
    if length > MAX_PAYLOAD_BYTES:
        raise MalformedMessage(1, f"payload length {length} exceeds limit")
    if len(data) - 5 != length:
        raise MalformedMessage(5, f"length field {length} != payload bytes {len(data) - 5}")
    try:
        body = json.loads(data[5:].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedMessage(5, f"payload not canonical JSON: {exc}") from exc
    if not isinstance(body, dict):
        raise MalformedMessage(5, "payload must be a JSON object")
    seq = body.pop("seq", None)
    t_sent = body.pop("t_sent", None)
    if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0 or seq >= 1 << 64:
        raise MalformedMessage(5, "seq must be a u64")
    if not _is_num(t_sent):
        raise MalformedMessage(5, "t_sent must be a finite number")
    err = _validate_payload(kind, body)
    if err:
        raise MalformedMessage(5, err)
    return Message(kind=kind, seq=seq, t_sent=float(t_sent), payload=body)


def estimate_to_wire(pose_list: list, rms: float, n_tags: int,
                     ambiguity: bool, converged: bool, timestamp: float) -> dict:
    return {"pose": [float(x) for x in pose_list], "rms": float(rms),
            "n_tags": int(n_tags), "ambiguity": bool(ambiguity),
            "converged": bool(converged), "timestamp": float(timestamp)}

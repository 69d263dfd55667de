"""Remote-teleoperation service: session protocol over any ordered channel.

The protocol logic lives in ServerCore, a transport-free state machine driven
by four events (connect, bytes, tick, disconnect). All robot-side mutation
happens inside on_tick on the single TeleopSession it owns, so any transport
that funnels events from one thread/loop satisfies the single-writer rule.

Two transports are provided: an in-process event-scheduler harness (virtual
time, deterministic, used by tests and latency experiments) and a websockets
adapter serving the `/pilot` endpoint in real time.
"""

from __future__ import annotations

import asyncio
import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from .marker_pose import PoseEstimate
from .protocol import Message, MalformedMessage, decode_msg, encode_msg
from .se3 import Pose6D
from .teleop_core import PedalState, TeleopSession, TICK, world_state18

DEFAULT_TICK_HZ = 30


def _estimate_from_wire(d: dict) -> PoseEstimate:
    return PoseEstimate(
        pose=Pose6D.from_list(d["pose"]),
        rms_reprojection=float(d["rms"]),
        n_tags_used=int(d["n_tags"]),
        ambiguity_flag=bool(d["ambiguity"]),
        converged=bool(d["converged"]),
    )


@dataclass
class _Session:
    sid: str
    role: str | None = None         # set by Hello
    hello_done: bool = False
    last_seq: int = -1
    closed: bool = False


@dataclass
class ServerCore:
    """Protocol brain: sessions, control token, and the simulated robot."""

    teleop: TeleopSession = field(default_factory=TeleopSession)
    tick_hz: int = DEFAULT_TICK_HZ
    sessions: dict = field(default_factory=dict)
    control_holder: str | None = None
    outbox: list = field(default_factory=list)   # (sid, Message)
    closing: list = field(default_factory=list)  # sids the transport must close
    tick_count: int = 0
    _seq: itertools.count = field(default_factory=itertools.count)
    _pending_command: dict | None = None
    _last_mode: str | None = None

    def _send(self, sid: str, kind: str, payload: dict, now_ms: float) -> None:
        self.outbox.append((sid, Message(kind=kind, seq=next(self._seq),
                                         t_sent=now_ms, payload=payload)))

    def _fail(self, sid: str, reason: str, now_ms: float) -> None:
        self._send(sid, "error", {"reason": reason}, now_ms)
        sess = self.sessions.get(sid)
        if sess:
            sess.closed = True
        self.closing.append(sid)
        self._release_if_holder(sid)

    def _release_if_holder(self, sid: str) -> None:
        if self.control_holder == sid:
            self.control_holder = None
            self._pending_command = None

    def on_connect(self, sid: str) -> None:
        if sid in self.sessions:
            raise ValueError(f"duplicate session id {sid}")
        self.sessions[sid] = _Session(sid=sid)

    def on_disconnect(self, sid: str) -> None:
        self.sessions.pop(sid, None)
        self._release_if_holder(sid)

    def on_bytes(self, sid: str, data: bytes, now_ms: float = 0.0) -> None:
        sess = self.sessions.get(sid)
        if sess is None or sess.closed:
            return
        try:
            msg = decode_msg(data)
        except MalformedMessage as exc:
            self._fail(sid, f"malformed message: {exc}", now_ms)
            return
        if msg.seq <= sess.last_seq:
            self._fail(sid, f"sequence regression {msg.seq} after {sess.last_seq}", now_ms)
            return
        sess.last_seq = msg.seq
        self.on_message(sid, msg, now_ms)

    def on_message(self, sid: str, msg: Message, now_ms: float = 0.0) -> None:
        sess = self.sessions.get(sid)
        if sess is None or sess.closed:
            return
        if not sess.hello_done:
            if msg.kind != "hello":
                self._fail(sid, f"protocol violation: {msg.kind} before hello", now_ms)
                return
            sess.hello_done = True
            sess.role = msg.payload["role"]
            # banner sync for every client; grant/deny for pilots only
            self._send(sid, "mode_event", {"mode": self.teleop.state.mode.value}, now_ms)
            if sess.role == "pilot":
                if self.control_holder is None:
                    self.control_holder = sid
                    self._send(sid, "control_grant", {"session_id": sid}, now_ms)
                else:
                    self._send(sid, "control_deny", {"reason": "busy"}, now_ms)
            return

        if msg.kind == "hello":
            self._fail(sid, "protocol violation: duplicate hello", now_ms)
        elif msg.kind == "ping":
            self._send(sid, "pong", {"echo_seq": msg.seq, "echo_t_sent": msg.t_sent}, now_ms)
        elif msg.kind == "command_push":
            if sid != self.control_holder:
                return  # only the token holder may drive; others are dropped
            if msg.payload.get("release"):
                self._release_if_holder(sid)
                self._send(sid, "control_deny", {"reason": "released"}, now_ms)
                return
            # latest-wins within a tick for the continuous inputs, but key
            # events are one-shot and must survive coalescing in order
            carried = self._pending_command["keys"] if self._pending_command else []
            self._pending_command = dict(msg.payload)
            self._pending_command["keys"] = list(carried) + list(msg.payload["keys"])
        elif msg.kind in ("pong", "mode_event", "state_push",
                          "control_grant", "control_deny", "error"):
            # server-bound copies of server-only kinds are violations
            self._fail(sid, f"protocol violation: unexpected {msg.kind}", now_ms)

    def on_tick(self, now_ms: float = 0.0) -> None:
        """One robot tick: apply at most one pending command, step, broadcast."""
        cmd = self._pending_command
        self._pending_command = None
        if cmd is None:
            self.teleop.tick()
        else:
            left = _estimate_from_wire(cmd["left"]) if "left" in cmd else None
            right = _estimate_from_wire(cmd["right"]) if "right" in cmd else None
            self.teleop.tick(
                pedals=PedalState(*[float(v) for v in cmd["pedals"]]),
                keys=tuple(cmd["keys"]),
                left_est=left,
                right_est=right,
            )
        self.tick_count += 1

        mode = self.teleop.state.mode.value
        if mode != self._last_mode and self._last_mode is not None:
            for sid, sess in self.sessions.items():
                if sess.hello_done and not sess.closed:
                    self._send(sid, "mode_event", {"mode": mode}, now_ms)
        self._last_mode = mode

        world = self.teleop.world
        payload = {
            "tick": self.tick_count,
            "sim_time": world.time,
            "state": [float(x) for x in world_state18(world)],
            "mode": mode,
            "base": [world.base.x, world.base.y, world.base.heading],
        }
        for sid, sess in self.sessions.items():
            if sess.hello_done and not sess.closed:
                self._send(sid, "state_push", payload, now_ms)

    def drain(self) -> tuple[list, list]:
        out, self.outbox = self.outbox, []
        closing, self.closing = self.closing, []
        return out, closing


# --------------------------------------------------------------------------
# Deterministic in-process transport: event scheduler + latency channels.

class EventScheduler:
    """Virtual-time event queue; deterministic given deterministic posting."""

    def __init__(self):
        self._heap = []
        self._tie = itertools.count()
        self.now = 0.0

    def post(self, at: float, fn) -> None:
        if at < self.now:
            at = self.now
        heapq.heappush(self._heap, (at, next(self._tie), fn))

    def post_in(self, delay: float, fn) -> None:
        self.post(self.now + delay, fn)

    def run_until(self, t_end: float) -> None:
        while self._heap and self._heap[0][0] <= t_end:
            at, _, fn = heapq.heappop(self._heap)
            self.now = at
            fn()
        self.now = t_end

    def pending(self) -> int:
        return len(self._heap)


class Channel:
    """Ordered unidirectional byte channel over an EventScheduler (ms)."""

    def __init__(self, scheduler: EventScheduler, deliver):
        self.scheduler = scheduler
        self.deliver = deliver

    def send(self, data: bytes) -> None:
        self.scheduler.post_in(0.0, lambda: self.deliver(data))


class LatencyChannel:
    """Wraps a channel, delaying each message by delay + uniform(+-jitter)
    while preserving send order (delivery times are made non-decreasing)."""

    def __init__(self, inner, delay_ms: float, jitter_ms: float = 0.0, seed: int = 0):
        if delay_ms < 0 or jitter_ms < 0:
            raise ValueError("delay and jitter must be >= 0")
        self.inner = inner
        self.delay_ms = delay_ms
        self.jitter_ms = jitter_ms
        self._rng = np.random.default_rng(seed)
        self._last_at = -float("inf")
        self.scheduler = inner.scheduler
        self.deliver = inner.deliver

    def send(self, data: bytes) -> None:
        jitter = self._rng.uniform(-self.jitter_ms, self.jitter_ms) if self.jitter_ms else 0.0
        at = self.scheduler.now + max(0.0, self.delay_ms + jitter)
        at = max(at, self._last_at)  # per-sender order preservation
        self._last_at = at
        self.scheduler.post(at, lambda: self.deliver(data))


def latency_inject(channel, delay_ms: float, jitter_ms: float = 0.0, seed: int = 0):
    """Wrap a channel with transmission delay; zero delay/jitter passes through."""
    if delay_ms == 0.0 and jitter_ms == 0.0:
        return channel
    return LatencyChannel(channel, delay_ms, jitter_ms, seed)


class SimServer:
    """ServerCore bound to an EventScheduler, ticking in virtual time."""

    def __init__(self, core: ServerCore, scheduler: EventScheduler,
                 latency_ms: float = 0.0, jitter_ms: float = 0.0, seed: int = 0):
        self.core = core
        self.scheduler = scheduler
        self.latency_ms = latency_ms
        self.jitter_ms = jitter_ms
        self.seed = seed
        self.clients: dict = {}
        self._next_sid = itertools.count()
        self._tick_period = 1000.0 / core.tick_hz

    def start_ticking(self) -> None:
        self._tick()

    def _tick(self) -> None:
        self.core.on_tick(self.scheduler.now)
        self._pump()
        self.scheduler.post_in(self._tick_period, self._tick)

    def connect(self, client) -> None:
        n = next(self._next_sid)
        sid = f"sim-{n}"
        client.sid = sid
        down = Channel(self.scheduler, client._receive)
        up = Channel(self.scheduler, lambda data, s=sid: self._from_client(s, data))
        client.uplink = latency_inject(up, self.latency_ms, self.jitter_ms,
                                       seed=self.seed + 2 * n)
        self.clients[sid] = latency_inject(down, self.latency_ms, self.jitter_ms,
                                           seed=self.seed + 2 * n + 1)
        self.core.on_connect(sid)
        self._pump()

    def disconnect(self, sid: str) -> None:
        self.clients.pop(sid, None)
        self.core.on_disconnect(sid)
        self._pump()

    def _from_client(self, sid: str, data: bytes) -> None:
        if sid not in self.clients:
            return
        self.core.on_bytes(sid, data, self.scheduler.now)
        self._pump()

    def _pump(self) -> None:
        out, closing = self.core.drain()
        for sid, msg in out:
            ch = self.clients.get(sid)
            if ch is not None:
                ch.send(encode_msg(msg))
        for sid in closing:
            self.clients.pop(sid, None)
            self.core.on_disconnect(sid)


class SimClient:
    """Scriptable client endpoint for the simulated transport."""

    def __init__(self):
        self.sid = None
        self.uplink = None
        self.inbox: list = []
        self._seq = itertools.count()
        self.on_message = None

    def send(self, kind: str, payload: dict, now_ms: float = 0.0) -> None:
        msg = Message(kind=kind, seq=next(self._seq), t_sent=now_ms, payload=payload)
        self.uplink.send(encode_msg(msg))

    def _receive(self, data: bytes) -> None:
        msg = decode_msg(data)
        self.inbox.append(msg)
        if self.on_message:
            self.on_message(msg)

    def received(self, kind: str) -> list:
        return [m for m in self.inbox if m.kind == kind]


# --------------------------------------------------------------------------
# Real-time transport: websockets endpoint at /pilot.

class _DelayedLink:
    """Order-preserving delayed delivery: a queue of (deliver_at, item) pairs
    consumed by one task, so injected latency never blocks the producer."""

    def __init__(self, deliver, latency_ms: float, jitter_ms: float, rng):
        self._deliver = deliver
        self._latency_ms = latency_ms
        self._jitter_ms = jitter_ms
        self._rng = rng
        self._queue: asyncio.Queue = asyncio.Queue()
        self._last_at = 0.0
        self._task = asyncio.ensure_future(self._run())

    def push(self, item) -> None:
        now = asyncio.get_running_loop().time()
        jitter = (self._rng.uniform(-self._jitter_ms, self._jitter_ms)
                  if self._jitter_ms else 0.0)
        at = now + max(0.0, self._latency_ms + jitter) / 1000.0
        at = max(at, self._last_at)  # per-sender order preservation
        self._last_at = at
        self._queue.put_nowait((at, item))

    async def _run(self):
        loop = asyncio.get_running_loop()
        while True:
            at, item = await self._queue.get()
            delay = at - loop.time()
            if delay > 0:
                await asyncio.sleep(delay)
            await self._deliver(item)

    def close(self) -> None:
        self._task.cancel()


class WebsocketServer:
    """Serves ServerCore over websockets; one asyncio loop owns all mutation."""

    def __init__(self, core: ServerCore, host: str = "127.0.0.1", port: int = 8765,
                 latency_ms: float = 0.0, jitter_ms: float = 0.0, seed: int = 0):
        self.core = core
        self.host = host
        self.port = port
        self.latency_ms = latency_ms
        self.jitter_ms = jitter_ms
        self._rng = np.random.default_rng(seed)
        self._conns: dict = {}
        self._links: dict = {}  # sid -> (inbound link, outbound link)
        self._next_sid = itertools.count()
        self._stop = asyncio.Event()
        self.bound_port: int | None = None

    def _now_ms(self) -> float:
        return asyncio.get_running_loop().time() * 1000.0

    def _pump(self) -> None:
        out, closing = self.core.drain()
        for sid, msg in out:
            links = self._links.get(sid)
            if links is not None:
                links[1].push(encode_msg(msg))
        for sid in closing:
            ws = self._conns.pop(sid, None)
            self.core.on_disconnect(sid)
            if ws is not None:
                asyncio.ensure_future(ws.close())

    def _drop_links(self, sid: str) -> None:
        links = self._links.pop(sid, None)
        if links:
            for link in links:
                link.close()

    async def _handler(self, ws):
        path = getattr(getattr(ws, "request", None), "path", "/pilot")
        if path.rstrip("/") not in ("", "/pilot"):
            await ws.close(code=4404, reason="unknown endpoint")
            return
        sid = f"ws-{next(self._next_sid)}"
        self._conns[sid] = ws

        async def consume(data: bytes) -> None:
            self.core.on_bytes(sid, data, self._now_ms())
            self._pump()

        async def send_out(data: bytes) -> None:
            try:
                await ws.send(data)
            except Exception:
                pass  # peer gone; the handler's finally does the cleanup

        self._links[sid] = (
            _DelayedLink(consume, self.latency_ms, self.jitter_ms, self._rng),
            _DelayedLink(send_out, self.latency_ms, self.jitter_ms, self._rng),
        )
        self.core.on_connect(sid)
        self._pump()
        try:
            async for data in ws:
                if isinstance(data, str):
                    data = data.encode()
                self._links[sid][0].push(data)
        finally:
            self._drop_links(sid)
            self._conns.pop(sid, None)
            self.core.on_disconnect(sid)

    async def _tick_loop(self):
        period = 1.0 / self.core.tick_hz
        loop = asyncio.get_running_loop()
        deadline = loop.time() + period
        while not self._stop.is_set():
            delay = deadline - loop.time()
            if delay > 0:
                try:
                    await asyncio.wait_for(self._stop.wait(), timeout=delay)
                    break
                except asyncio.TimeoutError:
                    pass
            self.core.on_tick(self._now_ms())
            self._pump()
            deadline += period  # drift-free pacing

    async def serve(self, ready: asyncio.Event | None = None):
        import websockets
        async with websockets.serve(self._handler, self.host, self.port) as server:
            self.bound_port = next(iter(server.sockets)).getsockname()[1]
            if ready is not None:
                ready.set()
            tick = asyncio.create_task(self._tick_loop())
            try:
                await self._stop.wait()
            finally:
                tick.cancel()

    def stop(self) -> None:
        self._stop.set()

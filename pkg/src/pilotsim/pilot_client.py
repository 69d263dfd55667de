"""Headless pilot client: drives the teleoperation service over a websocket.

Implements the same session flow a human-facing client follows (hello, wait
for grant, one CommandPush per received StatePush) but scripts the inputs.
The reach script engages the left clutch, slides a synthetic handle pose so
the end-effector tracks a straight line to a goal offset, injects a burst of
ambiguity-flagged estimates midway (which the robot must reject), then holds.
"""

from __future__ import annotations

import asyncio
from dataclasses import dataclass, field

import numpy as np

from .body_kinematics import COMMAND18_LAYOUT as L
from .body_kinematics import arm_config_from_config, arm_fk, ArmJoints
from .protocol import Message, decode_msg, encode_msg, estimate_to_wire
from .se3 import Pose6D
from .teleop_core import KEY_CLUTCH_LEFT, TICK


def ee_from_state18(state: list, side: str = "left") -> Pose6D:
    cfg = arm_config_from_config(side=side)
    j = ArmJoints(
        lift=state[L["lift"]],
        shoulder=state[L[f"{side}_shoulder"]],
        elbow=state[L[f"{side}_elbow"]],
        wrist1=state[L[f"{side}_wrist1"]],
        wrist2=state[L[f"{side}_wrist2"]],
        wrist3=state[L[f"{side}_wrist3"]],
        gripper=state[L[f"{side}_gripper"]],
    )
    return arm_fk(j, cfg)


@dataclass
class ReachReport:
    granted: bool = False
    state_pushes: int = 0
    goal: np.ndarray | None = None
    final_ee: np.ndarray | None = None
    final_distance_m: float = float("inf")
    rtt_ms: list = field(default_factory=list)
    ticks_sent: int = 0


async def run_reach_client(url: str, goal_offset=(0.08, -0.05, 0.04),
                           move_ticks: int = 90, hold_ticks: int = 60,
                           flagged_burst: tuple = (45, 50),
                           ping_every: int = 15,
                           timeout_s: float = 30.0) -> ReachReport:
    """Connect to a running service and execute the reach script.

    Returns once the scripted command budget is spent. The caller owns the
    pass/fail judgement (final distance, command continuity).
    """
    import websockets

    report = ReachReport()
    offset = np.asarray(goal_offset, dtype=float)
    seq = 0
    loop = asyncio.get_running_loop()

    def msg(kind: str, payload: dict) -> bytes:
        nonlocal seq
        m = Message(kind=kind, seq=seq, t_sent=loop.time() * 1000.0, payload=payload)
        seq += 1
        return encode_msg(m)

    async with websockets.connect(url, open_timeout=timeout_s) as ws:
        await ws.send(msg("hello", {"role": "pilot"}))

        handle_start = Pose6D(translation=[0.0, 0.0, 0.5])
        ee_ref = None
        handle_to_ee = None
        tick = 0
        pending_pings: dict = {}

        async def recv() -> Message:
            data = await asyncio.wait_for(ws.recv(), timeout=timeout_s)
            if isinstance(data, str):
                data = data.encode()
            return decode_msg(data)

        while tick < move_ticks + hold_ticks:
            m = await recv()
            if m.kind == "control_deny":
                return report
            if m.kind == "control_grant":
                report.granted = True
                continue
            if m.kind == "pong":
                sent = pending_pings.pop(m.payload["echo_seq"], None)
                if sent is not None:
                    report.rtt_ms.append(loop.time() * 1000.0 - sent)
                continue
            if m.kind != "state_push":
                continue

            report.state_pushes += 1
            state = m.payload["state"]
            if not report.granted:
                continue

            if ee_ref is None:
                ee = ee_from_state18(state)
                ee_ref = ee
                report.goal = ee.translation + offset
                # handle motion maps through the EE orientation at clutch time
                handle_to_ee = ee.rotation_matrix()

            progress = min(1.0, (tick + 1) / move_ticks)
            delta_handle = handle_to_ee.T @ (offset * progress)
            pose_now = Pose6D(handle_start.quaternion,
                              handle_start.translation + delta_handle)
            flagged = flagged_burst[0] <= tick < flagged_burst[1]
            est_pose = Pose6D(translation=[9.9, -9.9, 9.9]) if flagged else pose_now
            payload = {
                "pedals": [0.0, 0.0, 0.0, 0.0],
                "keys": [KEY_CLUTCH_LEFT] if tick == 0 else [],
                "left": estimate_to_wire(est_pose.to_list(), 0.0, 5,
                                         flagged, True, m.payload["sim_time"]),
            }
            await ws.send(msg("command_push", payload))
            report.ticks_sent += 1

            if ping_every and tick % ping_every == 0:
                ping = Message(kind="ping", seq=seq, t_sent=loop.time() * 1000.0,
                               payload={})
                pending_pings[seq] = loop.time() * 1000.0
                seq += 1
                await ws.send(encode_msg(ping))

            if tick == move_ticks + hold_ticks - 1:
                report.final_ee = ee_from_state18(state).translation
                if report.goal is not None:
                    report.final_distance_m = float(
                        np.linalg.norm(report.final_ee - report.goal))
            tick += 1

    return report


async def run_observer_probe(url: str, watch_s: float = 2.0,
                             timeout_s: float = 10.0) -> dict:
    """Connect as an observer and count StatePush traffic for a short window."""
    import websockets

    out = {"state_pushes": 0, "granted": False, "denied": False, "mode_events": 0}
    async with websockets.connect(url, open_timeout=timeout_s) as ws:
        m = Message(kind="hello", seq=0, t_sent=0.0, payload={"role": "observer"})
        await ws.send(encode_msg(m))
        loop = asyncio.get_running_loop()
        t_end = loop.time() + watch_s
        while loop.time() < t_end:
            try:
                data = await asyncio.wait_for(ws.recv(), timeout=max(0.01, t_end - loop.time()))
            except asyncio.TimeoutError:
                break
            if isinstance(data, str):
                data = data.encode()
            msg = decode_msg(data)
            if msg.kind == "state_push":
                out["state_pushes"] += 1
            elif msg.kind == "control_grant":
                out["granted"] = True
            elif msg.kind == "control_deny":
                out["denied"] = True
            elif msg.kind == "mode_event":
                out["mode_events"] += 1
    return out

"""Operator-side teleoperation logic and the kinematic world it drives.

A 30 Hz tick consumes pedal values, key events, and per-hand pose estimates:
pedals steer the base or grippers/lift depending on the active mode, keys
toggle mode/locks/clutch, and accepted hand poses are retargeted into
end-effector goals through a clutch (relative) mapping. Commands fill the
frozen 18-slot vector and a rate-limited kinematic world executes them.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .body_kinematics import (
    ArmConfig,
    ArmJoints,
    BasePose,
    COMMAND18_LAYOUT as L,
    Unreachable,
    arm_config_from_config,
    arm_fk,
    arm_ik,
    base_apply_displacement,
    validate_command18,
    wrap_angle,
)
from .marker_pose import PoseEstimate
from .se3 import Pose6D

TELEOP_HZ = 30
TICK = 1.0 / TELEOP_HZ


class CorruptLog(Exception):
    """Session log failed its checksum or structure checks on load."""


class TeleopMode(str, Enum):
    WALKING = "walking"
    OPERATION = "operation"


@dataclass(frozen=True)
class PedalState:
    p1: float = 0.0
    p2: float = 0.0
    p3: float = 0.0
    p4: float = 0.0

    def __post_init__(self):
        for name in ("p1", "p2", "p3", "p4"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"pedal {name}={v} outside [0, 1]")

    def as_tuple(self) -> tuple:
        return (self.p1, self.p2, self.p3, self.p4)


# Keyboard bindings (event names, not raw key codes; the client maps keys).
KEY_MODE_TOGGLE = "mode_toggle"
KEY_LOCK_LEFT = "lock_left"
KEY_LOCK_RIGHT = "lock_right"
KEY_CLUTCH_LEFT = "clutch_left"
KEY_CLUTCH_RIGHT = "clutch_right"
KEY_ARM_RESET = "arm_reset"


@dataclass(frozen=True)
class HandReference:
    """Clutch anchor: handle pose and end-effector pose at engagement."""
    handle: Pose6D
    ee: Pose6D


@dataclass(frozen=True)
class TeleopState:
    mode: TeleopMode = TeleopMode.OPERATION
    gripper_locked_left: bool = False
    gripper_locked_right: bool = False
    clutch_engaged_left: bool = False
    clutch_engaged_right: bool = False
    ref_left: HandReference | None = None
    ref_right: HandReference | None = None
    target_left: Pose6D | None = None
    target_right: Pose6D | None = None
    arm_reset_pending: bool = False


def handle_key(state: TeleopState, key: str) -> TeleopState:
    """Apply one key event; unknown keys leave the state untouched."""
    if key == KEY_MODE_TOGGLE:
        new_mode = (TeleopMode.OPERATION if state.mode == TeleopMode.WALKING
                    else TeleopMode.WALKING)
        return replace(state, mode=new_mode)
    if key == KEY_LOCK_LEFT:
        return replace(state, gripper_locked_left=not state.gripper_locked_left)
    if key == KEY_LOCK_RIGHT:
        return replace(state, gripper_locked_right=not state.gripper_locked_right)
    if key == KEY_CLUTCH_LEFT:
        if state.clutch_engaged_left:
            return replace(state, clutch_engaged_left=False, ref_left=None,
                           target_left=None)
        return replace(state, clutch_engaged_left=True, ref_left=None)
    if key == KEY_CLUTCH_RIGHT:
        if state.clutch_engaged_right:
            return replace(state, clutch_engaged_right=False, ref_right=None,
                           target_right=None)
        return replace(state, clutch_engaged_right=True, ref_right=None)
    if key == KEY_ARM_RESET:
        return replace(state, clutch_engaged_left=False, clutch_engaged_right=False,
                       ref_left=None, ref_right=None, target_left=None,
                       target_right=None, arm_reset_pending=True)
    return state


@dataclass(frozen=True)
class TeleopLimits:
    base_speed_max: float = 0.6        # m/s at full pedal
    base_turn_max: float = 1.2         # rad/s at full pedal
    lift_speed_max: float = 0.25       # m/s at full pedal
    gripper_max: float = 0.12          # m
    translation_scale: float = 1.0     # handle-to-EE translation scaling
    handle_speed_max: float = 1.5      # m/s, physical bound on handle motion
    rms_reject_px: float = 3.0         # estimate rejection threshold
    stale_ticks: int = 2
    arm_joint_speed: float = 2.5       # rad/s rate limit
    lift_speed: float = 0.4            # m/s rate limit (execution)
    gripper_speed: float = 0.25        # m/s rate limit
    head_speed: float = 2.0            # rad/s rate limit
    base_exec_speed: float = 0.8       # m/s execution clamp
    base_exec_turn: float = 1.6        # rad/s execution clamp


@dataclass(frozen=True)
class PartialCommand:
    """Per-tick pedal contribution, already scaled to displacements/targets."""
    base_forward: float = 0.0          # m this tick
    base_heading: float = 0.0          # rad this tick
    lift_delta: float = 0.0            # m this tick
    left_gripper: float | None = None  # absolute opening target
    right_gripper: float | None = None


def pedal_map(state: TeleopState, pedals: PedalState,
              limits: TeleopLimits | None = None) -> PartialCommand:
    """Translate pedal depressions into this tick's command contribution.

    Walking: p1/p2 drive forward/backward, p3/p4 turn left/right.
    Operation: p1/p2 command the gripper openings (ignored while locked),
    p3/p4 move the lift up/down.
    """
    lim = limits or TeleopLimits()
    if state.mode == TeleopMode.WALKING:
        return PartialCommand(
            base_forward=(pedals.p1 - pedals.p2) * lim.base_speed_max * TICK,
            base_heading=(pedals.p3 - pedals.p4) * lim.base_turn_max * TICK,
        )
    return PartialCommand(
        lift_delta=(pedals.p3 - pedals.p4) * lim.lift_speed_max * TICK,
        left_gripper=None if state.gripper_locked_left else pedals.p1 * lim.gripper_max,
        right_gripper=None if state.gripper_locked_right else pedals.p2 * lim.gripper_max,
    )


def retarget(state: TeleopState, hand: str, est: PoseEstimate | None,
             current_ee: Pose6D, now: float,
             limits: TeleopLimits | None = None,
             est_timestamp: float | None = None) -> tuple[TeleopState, Pose6D | None]:
    """Map an incoming handle pose estimate to an end-effector target.

    Relative (clutch) mapping: target = EE_ref * scale(handle_ref^-1 * handle).
    Translation is scaled, rotation passes 1:1. Estimates flagged ambiguous,
    with high reprojection RMS, or stale by more than two ticks are rejected
    and the previous target is held. The first accepted estimate after clutch
    engagement latches the reference pair (and therefore maps to zero motion).
    """
    lim = limits or TeleopLimits()
    engaged = state.clutch_engaged_left if hand == "left" else state.clutch_engaged_right
    if not engaged:
        return state, None
    ref = state.ref_left if hand == "left" else state.ref_right
    held = state.target_left if hand == "left" else state.target_right

    ok = (est is not None
          and not est.ambiguity_flag
          and est.rms_reprojection <= lim.rms_reject_px)
    if ok and est_timestamp is not None:
        ok = (now - est_timestamp) <= lim.stale_ticks * TICK
    if not ok:
        return state, held

    if ref is None:
        ref = HandReference(handle=est.pose, ee=current_ee)
        state = replace(state, **{f"ref_{hand}": ref})

    rel = ref.handle.inverse().compose(est.pose)
    scaled = Pose6D(rel.quaternion, rel.translation * lim.translation_scale)
    target = ref.ee.compose(scaled)
    state = replace(state, **{f"target_{hand}": target})
    return state, target


@dataclass(frozen=True)
class SimWorld:
    base: BasePose = field(default_factory=BasePose)
    left: ArmJoints = field(default_factory=lambda: ArmJoints(lift=0.6, shoulder=0.4, elbow=1.2))
    right: ArmJoints = field(default_factory=lambda: ArmJoints(lift=0.6, shoulder=-0.4, elbow=-1.2))
    head_pan: float = 0.0
    head_tilt: float = 0.0
    lift: float = 0.6
    time: float = 0.0


def world_state18(world: SimWorld) -> np.ndarray:
    """Current world state in the 18-slot vector (base slots are zero:
    displacement commands have no absolute state)."""
    s = np.zeros(18)
    s[L["lift"]] = world.lift
    s[L["left_shoulder"]] = world.left.shoulder
    s[L["left_elbow"]] = world.left.elbow
    s[L["left_wrist1"]] = world.left.wrist1
    s[L["left_wrist2"]] = world.left.wrist2
    s[L["left_wrist3"]] = world.left.wrist3
    s[L["left_gripper"]] = world.left.gripper
    s[L["right_shoulder"]] = world.right.shoulder
    s[L["right_elbow"]] = world.right.elbow
    s[L["right_wrist1"]] = world.right.wrist1
    s[L["right_wrist2"]] = world.right.wrist2
    s[L["right_wrist3"]] = world.right.wrist3
    s[L["right_gripper"]] = world.right.gripper
    s[L["head_pan"]] = world.head_pan
    s[L["head_tilt"]] = world.head_tilt
    return s


def ee_pose(world: SimWorld, hand: str, cfg: ArmConfig) -> Pose6D:
    joints = world.left if hand == "left" else world.right
    return arm_fk(replace(joints, lift=world.lift), cfg)


def assemble_command(world: SimWorld, targets: dict, partial: PartialCommand,
                     cfg_left: ArmConfig, cfg_right: ArmConfig,
                     limits: TeleopLimits | None = None,
                     mode: TeleopMode = TeleopMode.OPERATION) -> tuple[np.ndarray, list]:
    """Build the 18-dim command for this tick; absent inputs hold.

    The lift is shared: with one engaged hand its target z drives the lift,
    with both hands the mean does; pedal lift motion adds on top. In walking
    mode the lift and grippers hold regardless of inputs (mode isolation).
    Per-arm IK failures degrade to a hold for that arm, reported in the notes.
    """
    lim = limits or TeleopLimits()
    cmd = world_state18(world)
    notes = []

    lift_lo, lift_hi = cfg_left.lift_range
    if mode == TeleopMode.WALKING:
        lift_cmd = world.lift
    else:
        z_demands = [t.translation[2] for t in targets.values() if t is not None]
        lift_cmd = float(np.mean(z_demands)) if z_demands else world.lift
        lift_cmd = min(lift_hi, max(lift_lo, lift_cmd + partial.lift_delta))
    cmd[L["lift"]] = lift_cmd

    for hand, cfg in (("left", cfg_left), ("right", cfg_right)):
        target = targets.get(hand)
        if target is None:
            continue
        prev = world.left if hand == "left" else world.right
        flat = Pose6D(target.quaternion,
                      [target.translation[0], target.translation[1], lift_cmd])
        try:
            sol = arm_ik(flat, cfg, prev=replace(prev, lift=lift_cmd))
        except Unreachable as exc:
            notes.append(f"{hand}: hold ({exc})")
            continue
        cmd[L[f"{hand}_shoulder"]] = sol.shoulder
        cmd[L[f"{hand}_elbow"]] = sol.elbow
        cmd[L[f"{hand}_wrist1"]] = sol.wrist1
        cmd[L[f"{hand}_wrist2"]] = sol.wrist2
        cmd[L[f"{hand}_wrist3"]] = sol.wrist3

    if mode != TeleopMode.WALKING:
        if partial.left_gripper is not None:
            cmd[L["left_gripper"]] = min(lim.gripper_max, partial.left_gripper)
        if partial.right_gripper is not None:
            cmd[L["right_gripper"]] = min(lim.gripper_max, partial.right_gripper)

    cmd[L["base_forward"]] = partial.base_forward
    cmd[L["base_heading"]] = partial.base_heading
    return validate_command18(cmd), notes


def _toward(current: float, target: float, max_step: float) -> float:
    d = target - current
    if abs(d) <= max_step:
        return target
    return current + math.copysign(max_step, d)


def world_step(world: SimWorld, cmd: np.ndarray, dt: float = TICK,
               limits: TeleopLimits | None = None) -> SimWorld:
    """Advance the kinematic world one tick toward the command, rate-limited."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    lim = limits or TeleopLimits()
    cmd = validate_command18(cmd)

    lift = _toward(world.lift, float(cmd[L["lift"]]), lim.lift_speed * dt)

    def step_arm(j: ArmJoints, side: str) -> ArmJoints:
        a = lim.arm_joint_speed * dt
        return ArmJoints(
            lift=lift,
            shoulder=_toward(j.shoulder, float(cmd[L[f"{side}_shoulder"]]), a),
            elbow=_toward(j.elbow, float(cmd[L[f"{side}_elbow"]]), a),
            wrist1=_toward(j.wrist1, float(cmd[L[f"{side}_wrist1"]]), a),
            wrist2=_toward(j.wrist2, float(cmd[L[f"{side}_wrist2"]]), a),
            wrist3=_toward(j.wrist3, float(cmd[L[f"{side}_wrist3"]]), a),
            gripper=_toward(j.gripper, float(cmd[L[f"{side}_gripper"]]), lim.gripper_speed * dt),
        )

    ds = float(cmd[L["base_forward"]])
    dh = float(cmd[L["base_heading"]])
    ds = max(-lim.base_exec_speed * dt, min(lim.base_exec_speed * dt, ds))
    dh = max(-lim.base_exec_turn * dt, min(lim.base_exec_turn * dt, dh))
    base = base_apply_displacement(world.base, ds, dh) if (ds or dh) else world.base

    return SimWorld(
        base=base,
        left=step_arm(world.left, "left"),
        right=step_arm(world.right, "right"),
        head_pan=_toward(world.head_pan, float(cmd[L["head_pan"]]), lim.head_speed * dt),
        head_tilt=_toward(world.head_tilt, float(cmd[L["head_tilt"]]), lim.head_speed * dt),
        lift=lift,
        time=world.time + dt,
    )


@dataclass
class SessionLog:
    """Append-only per-tick record of (state, command, mode, pedals)."""

    records: list = field(default_factory=list)
    tick_hz: int = TELEOP_HZ

    def append(self, t: float, state: np.ndarray, cmd: np.ndarray,
               mode: TeleopMode, pedals: PedalState) -> None:
        if self.records and t <= self.records[-1]["t"]:
            raise ValueError("session time must be strictly increasing")
        self.records.append({
            "t": float(t),
            "state": [float(x) for x in state],
            "cmd": [float(x) for x in cmd],
            "mode": mode.value,
            "pedals": list(pedals.as_tuple()),
        })

    def __len__(self) -> int:
        return len(self.records)


def record_step(log: SessionLog, t: float, state: np.ndarray, cmd: np.ndarray,
                mode: TeleopMode, pedals: PedalState) -> None:
    log.append(t, state, cmd, mode, pedals)


def save_session(log: SessionLog, path) -> None:
    """Line-delimited records with a layout header and a trailing checksum."""
    header = json.dumps({"format": "pilotsim-session", "version": 1,
                         "tick_hz": log.tick_hz, "layout": L}, sort_keys=True)
    lines = [header] + [json.dumps(r, sort_keys=True) for r in log.records]
    body = ("\n".join(lines) + "\n").encode()
    digest = hashlib.sha256(body).hexdigest()
    with open(path, "wb") as f:
        f.write(body)
        f.write((json.dumps({"sha256": digest}) + "\n").encode())


def load_session(path) -> SessionLog:
    with open(path, "rb") as f:
        raw = f.read()
    cut = raw.rstrip(b"\n").rfind(b"\n")
    if cut < 0:
        raise CorruptLog("missing checksum line")
    body, tail = raw[:cut + 1], raw[cut + 1:]
    try:
        digest = json.loads(tail)["sha256"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorruptLog(f"bad checksum line: {exc}") from exc
    if hashlib.sha256(body).hexdigest() != digest:
        raise CorruptLog("checksum mismatch")
    lines = body.decode().splitlines()
    try:
        header = json.loads(lines[0])
        if header.get("format") != "pilotsim-session":
            raise CorruptLog("not a session log")
        log = SessionLog(tick_hz=int(header["tick_hz"]))
        for line in lines[1:]:
            rec = json.loads(line)
            rec["state"] = [float(x) for x in rec["state"]]
            rec["cmd"] = [float(x) for x in rec["cmd"]]
            log.records.append(rec)
    except (json.JSONDecodeError, KeyError, IndexError, ValueError) as exc:
        raise CorruptLog(f"malformed record: {exc}") from exc
    return log


def replay_session(log: SessionLog, world: SimWorld | None = None,
                   limits: TeleopLimits | None = None) -> tuple[SimWorld, float]:
    """Re-execute a log's commands; returns the final world and the maximum
    divergence between replayed and recorded state vectors."""
    w = world or SimWorld()
    worst = 0.0
    for rec in log.records:
        recorded = np.asarray(rec["state"])
        worst = max(worst, float(np.max(np.abs(world_state18(w) - recorded))))
        w = world_step(w, np.asarray(rec["cmd"]), 1.0 / log.tick_hz, limits)
    return w, worst


@dataclass
class TeleopSession:
    """Single-owner driver binding the state machine to a world at 30 Hz."""

    cfg_left: ArmConfig = field(default_factory=lambda: arm_config_from_config(side="left"))
    cfg_right: ArmConfig = field(default_factory=lambda: arm_config_from_config(side="right"))
    limits: TeleopLimits = field(default_factory=TeleopLimits)
    state: TeleopState = field(default_factory=TeleopState)
    world: SimWorld = field(default_factory=SimWorld)
    log: SessionLog = field(default_factory=SessionLog)
    tick_index: int = 0

    def tick(self, pedals: PedalState = PedalState(), keys: tuple = (),
             left_est: PoseEstimate | None = None,
             right_est: PoseEstimate | None = None) -> np.ndarray:
        """One 30 Hz teleop step: keys, retarget, assemble, execute, record."""
        now = self.tick_index * TICK
        for key in keys:
            self.state = handle_key(self.state, key)
        if self.state.arm_reset_pending:
            self.state = replace(self.state, arm_reset_pending=False)

        targets = {}
        for hand, est in (("left", left_est), ("right", right_est)):
            current = ee_pose(self.world, hand,
                              self.cfg_left if hand == "left" else self.cfg_right)
            self.state, target = retarget(self.state, hand, est, current, now, self.limits)
            targets[hand] = target

        partial = pedal_map(self.state, pedals, self.limits)
        cmd, _notes = assemble_command(self.world, targets, partial,
                                       self.cfg_left, self.cfg_right, self.limits,
                                       mode=self.state.mode)
        record_step(self.log, now, world_state18(self.world), cmd, self.state.mode, pedals)
        self.world = world_step(self.world, cmd, TICK, self.limits)
        self.tick_index += 1
        return cmd

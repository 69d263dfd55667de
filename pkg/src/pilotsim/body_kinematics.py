"""Whole-body kinematics: lift + planar two-link arms with spherical wrists,
differential-drive base, and the 18-slot command vector layout.

Body frame: x forward, y left, z up. Each arm mounts at a lateral offset from
the body centerline; the planar pair works in the x-y plane and the shared
lift provides z. The wrist is a roll-pitch-roll (x-y-x) triple after the
planar chain, which admits a closed-form orientation decomposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .se3 import Pose6D, matrix_to_quat, rot_x, rot_y, rot_z

TWO_PI = 2.0 * math.pi


class Unreachable(Exception):
    """Target outside the reachable annulus, lift range, or joint limits."""


class JointLimit(Exception):
    """Joint value outside its configured range."""


def wrap_angle(a: float) -> float:
    """Normalize to (-pi, pi]."""
    a = math.fmod(a, TWO_PI)
    if a > math.pi:
        a -= TWO_PI
    elif a <= -math.pi:
        a += TWO_PI
    return a


@dataclass(frozen=True)
class ArmConfig:
    l1: float = 0.375
    l2: float = 0.375
    lift_range: tuple = (0.0, 1.25)
    shoulder_offset: float = 0.20  # lateral mount offset, +left / -right
    shoulder_limits: tuple = (-2.6, 2.6)
    elbow_limits: tuple = (-2.9, 2.9)
    wrist1_limits: tuple = (-math.pi, math.pi)
    wrist2_limits: tuple = (-math.pi, math.pi)
    wrist3_limits: tuple = (-math.pi, math.pi)
    gripper_max: float = 0.12

    def __post_init__(self):
        if not (self.l1 > 0 and self.l2 > 0):
            raise ValueError("link lengths must be > 0")
        if not (self.lift_range[0] < self.lift_range[1]):
            raise ValueError("lift_range must be well-ordered")

    @property
    def max_reach(self) -> float:
        return self.l1 + self.l2

    @property
    def min_reach(self) -> float:
        return abs(self.l1 - self.l2)


@dataclass(frozen=True)
class ArmJoints:
    lift: float = 0.0
    shoulder: float = 0.0
    elbow: float = 0.0
    wrist1: float = 0.0
    wrist2: float = 0.0
    wrist3: float = 0.0
    gripper: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.lift, self.shoulder, self.elbow,
                         self.wrist1, self.wrist2, self.wrist3, self.gripper])


def check_limits(j: ArmJoints, cfg: ArmConfig) -> None:
    checks = [
        ("lift", j.lift, cfg.lift_range),
        ("shoulder", j.shoulder, cfg.shoulder_limits),
        ("elbow", j.elbow, cfg.elbow_limits),
        ("wrist1", j.wrist1, cfg.wrist1_limits),
        ("wrist2", j.wrist2, cfg.wrist2_limits),
        ("wrist3", j.wrist3, cfg.wrist3_limits),
        ("gripper", j.gripper, (0.0, cfg.gripper_max)),
    ]
    for name, val, (lo, hi) in checks:
        if not (lo - 1e-12 <= val <= hi + 1e-12):
            raise JointLimit(f"{name}={val:.6f} outside [{lo}, {hi}]")


def _within(val: float, lim: tuple) -> bool:
    return lim[0] - 1e-12 <= val <= lim[1] + 1e-12


def arm_fk(j: ArmJoints, cfg: ArmConfig) -> Pose6D:
    """End-effector pose in the body frame. Raises JointLimit when out of range."""
    check_limits(j, cfg)
    phi = j.shoulder + j.elbow
    x = cfg.l1 * math.cos(j.shoulder) + cfg.l2 * math.cos(phi)
    y = cfg.l1 * math.sin(j.shoulder) + cfg.l2 * math.sin(phi)
    pos = np.array([x, cfg.shoulder_offset + y, j.lift])
    rot = rot_z(phi) @ rot_x(j.wrist1) @ rot_y(j.wrist2) @ rot_x(j.wrist3)
    return Pose6D(matrix_to_quat(rot), pos)


def _wrist_from_matrix(m: np.ndarray, prev: ArmJoints | None) -> tuple[float, float, float]:
    """x-y-x Euler extraction of the residual wrist rotation.

    Degenerate when the middle angle is 0 or pi (only the sum/difference of
    the outer rolls is determined); the split then keeps the previous first
    roll. The middle-angle sign follows the previous solution when available.
    """
    c_b = min(1.0, max(-1.0, float(m[0, 0])))
    s_b = math.sqrt(max(0.0, 1.0 - c_b * c_b))
    if s_b < 1e-9:
        # wrist2 = 0 or pi: decomposition degenerate
        if c_b > 0.0:
            total = math.atan2(float(m[2, 1]), float(m[1, 1]))  # Rx(a+g)
            w2 = 0.0
            w1 = prev.wrist1 if prev is not None else total
            w3 = wrap_angle(total - w1)
        else:
            total = math.atan2(float(m[2, 1]), float(m[1, 1]))  # Rx(a-g) up to convention
            w2 = math.pi
            w1 = prev.wrist1 if prev is not None else total
            w3 = wrap_angle(w1 - total)
        return wrap_angle(w1), w2, w3

    sign = 1.0
    if prev is not None and prev.wrist2 < 0.0:
        sign = -1.0
    b = math.atan2(sign * s_b, c_b)
    a = math.atan2(float(m[1, 0]) * sign, -float(m[2, 0]) * sign)
    g = math.atan2(float(m[0, 1]) * sign, float(m[0, 2]) * sign)
    return a, b, g


def arm_ik(target: Pose6D, cfg: ArmConfig, prev: ArmJoints | None = None,
           gripper: float | None = None) -> ArmJoints:
    """Closed-form inverse kinematics for one arm.

    Lift takes the target z directly; the elbow comes from the law of
    cosines with the elbow-positive branch by default, or whichever branch
    lands closer to `prev` in (shoulder, elbow) space; the wrist absorbs the
    residual rotation. Raises Unreachable outside the annulus/lift range or
    when no branch satisfies the joint limits.
    """
    tx, ty, tz = target.translation
    if not (cfg.lift_range[0] - 1e-12 <= tz <= cfg.lift_range[1] + 1e-12):
        raise Unreachable(f"lift target {tz:.4f} outside {cfg.lift_range}")
    px = tx
    py = ty - cfg.shoulder_offset
    r2 = px * px + py * py
    r = math.sqrt(r2)
    if r > cfg.max_reach + 1e-9 or r < cfg.min_reach - 1e-9:
        raise Unreachable(f"planar distance {r:.4f} outside "
                          f"[{cfg.min_reach:.4f}, {cfg.max_reach:.4f}]")

    c_el = (r2 - cfg.l1 ** 2 - cfg.l2 ** 2) / (2.0 * cfg.l1 * cfg.l2)
    c_el = min(1.0, max(-1.0, c_el))
    el_mag = math.acos(c_el)

    candidates = []
    for el in (el_mag, -el_mag):
        sh = math.atan2(py, px) - math.atan2(cfg.l2 * math.sin(el),
                                             cfg.l1 + cfg.l2 * math.cos(el))
        sh = wrap_angle(sh)
        if _within(sh, cfg.shoulder_limits) and _within(el, cfg.elbow_limits):
            candidates.append((sh, el))
    if not candidates:
        raise Unreachable("no elbow branch satisfies the joint limits")

    if prev is not None and len(candidates) == 2:
        candidates.sort(key=lambda c: (c[0] - prev.shoulder) ** 2 + (c[1] - prev.elbow) ** 2)
    sh, el = candidates[0]

    residual = rot_z(sh + el).T @ target.rotation_matrix()
    w1, w2, w3 = _wrist_from_matrix(residual, prev)
    if not (_within(w1, cfg.wrist1_limits) and _within(w2, cfg.wrist2_limits)
            and _within(w3, cfg.wrist3_limits)):
        raise Unreachable("wrist solution outside joint limits")

    grip = gripper if gripper is not None else (prev.gripper if prev else 0.0)
    return ArmJoints(lift=tz, shoulder=sh, elbow=el,
                     wrist1=w1, wrist2=w2, wrist3=w3, gripper=grip)


@dataclass(frozen=True)
class BasePose:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0

    def __post_init__(self):
        if not all(map(math.isfinite, (self.x, self.y, self.heading))):
            raise ValueError("non-finite base pose")
        object.__setattr__(self, "heading", wrap_angle(self.heading))


def base_apply_displacement(p: BasePose, ds: float, dh: float) -> BasePose:
    """Advance along a circular arc of length ds with heading change dh.

    Exact arc integration; degenerates to a straight segment for tiny dh.
    """
    if abs(dh) < 1e-9:
        return BasePose(x=p.x + ds * math.cos(p.heading + 0.5 * dh),
                        y=p.y + ds * math.sin(p.heading + 0.5 * dh),
                        heading=p.heading + dh)
    radius = ds / dh
    return BasePose(
        x=p.x + radius * (math.sin(p.heading + dh) - math.sin(p.heading)),
        y=p.y - radius * (math.cos(p.heading + dh) - math.cos(p.heading)),
        heading=p.heading + dh,
    )


def base_step(p: BasePose, v_left: float, v_right: float,
              track_width: float, dt: float) -> BasePose:
    """Unicycle update from wheel speeds over one time step (exact arc)."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    v = 0.5 * (v_left + v_right)
    omega = (v_right - v_left) / track_width
    return base_apply_displacement(p, v * dt, omega * dt)


def wheel_encoder_read(wheel_angle: float, counts_per_rev: int = 64) -> int:
    """Quantize a wheel angle to coarse Hall-sensor counts (floor)."""
    return int(math.floor(wheel_angle / (TWO_PI / counts_per_rev)))


def displacement_between(a: BasePose, b: BasePose) -> tuple[float, float]:
    """Recover the (arc length, heading change) step taking pose a to pose b.

    Inverse of base_apply_displacement for arc-consistent pose pairs: the
    chord of a circular arc points along the mean heading with length
    s*sinc(dh/2).
    """
    dh = wrap_angle(b.heading - a.heading)
    dx = b.x - a.x
    dy = b.y - a.y
    mean = a.heading + 0.5 * dh
    chord = dx * math.cos(mean) + dy * math.sin(mean)
    half = 0.5 * dh
    sinc = math.sin(half) / half if abs(half) >= 1e-9 else 1.0
    return chord / sinc, dh


def command_repr_convert(base_traj: list[BasePose], mode: str,
                         dt: float = 1.0 / 30.0) -> list[tuple[float, float]]:
    """Convert a fixed-rate base trajectory into a command stream.

    position mode: per-step (forward displacement, heading displacement)
    pairs whose cumulative arc integration reproduces the trajectory.
    velocity mode: per-step (v, omega) finite differences of the same arcs.
    """
    if len(base_traj) < 2:
        raise ValueError("need at least 2 trajectory samples")
    if mode not in ("position", "velocity"):
        raise ValueError(f"unknown mode {mode!r}")
    out = []
    for a, b in zip(base_traj, base_traj[1:]):
        ds, dh = displacement_between(a, b)
        if mode == "position":
            out.append((ds, dh))
        else:
            out.append((ds / dt, dh / dt))
    return out


def integrate_position_stream(start: BasePose, stream: list[tuple[float, float]]) -> list[BasePose]:
    poses = [start]
    for ds, dh in stream:
        poses.append(base_apply_displacement(poses[-1], ds, dh))
    return poses


def quantized_odometry_trajectory(speed_profile: list[tuple[float, float]],
                                  track_width: float = 0.45,
                                  wheel_radius: float = 0.08,
                                  counts_per_rev: int = 64,
                                  dt: float = 1.0 / 30.0) -> list[BasePose]:
    """Base trajectory as seen through coarse wheel encoders.

    Integrates true wheel angles from a per-tick (v, omega) profile, floors
    them to encoder counts, and dead-reckons poses from the count deltas.
    This is the odometry a learning pipeline would log on the real base.
    """
    quantum = TWO_PI / counts_per_rev
    angle_l = angle_r = 0.0
    last_l = last_r = 0
    pose = BasePose()
    poses = [pose]
    for v, omega in speed_profile:
        v_l = v - 0.5 * omega * track_width
        v_r = v + 0.5 * omega * track_width
        angle_l += v_l * dt / wheel_radius
        angle_r += v_r * dt / wheel_radius
        c_l = wheel_encoder_read(angle_l, counts_per_rev)
        c_r = wheel_encoder_read(angle_r, counts_per_rev)
        d_l = (c_l - last_l) * quantum * wheel_radius
        d_r = (c_r - last_r) * quantum * wheel_radius
        last_l, last_r = c_l, c_r
        pose = base_apply_displacement(pose, 0.5 * (d_l + d_r), (d_r - d_l) / track_width)
        poses.append(pose)
    return poses


# Frozen 18-slot command/state layout (protocol constant; see the schema doc).
COMMAND18_LAYOUT = {
    "lift": 0,
    "left_shoulder": 1, "left_elbow": 2,
    "left_wrist1": 3, "left_wrist2": 4, "left_wrist3": 5,
    "left_gripper": 6,
    "right_shoulder": 7, "right_elbow": 8,
    "right_wrist1": 9, "right_wrist2": 10, "right_wrist3": 11,
    "right_gripper": 12,
    "head_pan": 13, "head_tilt": 14,
    "reserved": 15,
    "base_forward": 16, "base_heading": 17,
}
COMMAND18_SIZE = 18


def command18_zeros() -> np.ndarray:
    return np.zeros(COMMAND18_SIZE)


def validate_command18(cmd: np.ndarray) -> np.ndarray:
    arr = np.asarray(cmd, dtype=float)
    if arr.shape != (COMMAND18_SIZE,):
        raise ValueError(f"command must have exactly {COMMAND18_SIZE} entries")
    if not np.all(np.isfinite(arr)):
        raise ValueError("command entries must be finite")
    return arr


DEFAULT_BODY_CONFIG = {
    "body.l1": 0.375,
    "body.l2": 0.375,
    "body.lift_min": 0.0,
    "body.lift_max": 1.25,
    "body.shoulder_offset": 0.20,
    "body.track_width": 0.45,
    "body.wheel_radius": 0.08,
    "body.wheel_counts_per_rev": 64,
    "body.gripper_max": 0.12,
}


def arm_config_from_config(cfg: dict | None = None, side: str = "left") -> ArmConfig:
    c = dict(DEFAULT_BODY_CONFIG)
    if cfg:
        c.update({k: v for k, v in cfg.items() if k in DEFAULT_BODY_CONFIG})
    offset = float(c["body.shoulder_offset"])
    if side == "right":
        offset = -offset
    return ArmConfig(
        l1=float(c["body.l1"]),
        l2=float(c["body.l2"]),
        lift_range=(float(c["body.lift_min"]), float(c["body.lift_max"])),
        shoulder_offset=offset,
        gripper_max=float(c["body.gripper_max"]),
    )

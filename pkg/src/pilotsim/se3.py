"""Rigid-body transforms: unit quaternions, rotation matrices, and 6-DoF poses.

Conventions:
  - Quaternions are (w, x, y, z) with unit norm and w >= 0 (canonical sign).
  - A Pose6D maps points from its own frame into the parent frame:
    p_parent = R @ p_local + t.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Normalize to unit length and canonical sign (w >= 0)."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("cannot normalize zero/non-finite quaternion")
    q = q / n
    if q[0] < 0.0:
        q = -q
    return q


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Rotation matrix -> unit quaternion (Shepperd's method, numerically safe)."""
    m = np.asarray(m, dtype=float)
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(m)))
        if i == 0:
            s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            q = np.array([(m[2, 1] - m[1, 2]) / s,
                          0.25 * s,
                          (m[0, 1] + m[1, 0]) / s,
                          (m[0, 2] + m[2, 0]) / s])
        elif i == 1:
            s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
            q = np.array([(m[0, 2] - m[2, 0]) / s,
                          (m[0, 1] + m[1, 0]) / s,
                          0.25 * s,
                          (m[1, 2] + m[2, 1]) / s])
        else:
            s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
            q = np.array([(m[1, 0] - m[0, 1]) / s,
                          (m[0, 2] + m[2, 0]) / s,
                          (m[1, 2] + m[2, 1]) / s,
                          0.25 * s])
    return quat_normalize(q)


def rotvec_to_matrix(v: np.ndarray) -> np.ndarray:
    """Axis-angle (rotation vector) -> rotation matrix via Rodrigues' formula."""
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v)
    if angle < 1e-12:
        k = skew(v)
        return np.eye(3) + k + 0.5 * (k @ k)
    axis = v / angle
    k = skew(axis)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def matrix_to_rotvec(m: np.ndarray) -> np.ndarray:
    q = matrix_to_quat(m)
    w = min(1.0, max(-1.0, float(q[0])))
    angle = 2.0 * np.arccos(w)
    s = np.sqrt(max(0.0, 1.0 - w * w))
    if s < 1e-12:
        return 2.0 * q[1:4]
    return (angle / s) * q[1:4]


def skew(v: np.ndarray) -> np.ndarray:
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


def rotation_angle_between(ra: np.ndarray, rb: np.ndarray) -> float:
    """Geodesic angle (rad) between two rotation matrices.

    Quaternion form: atan2 keeps full precision for tiny angles, where the
    arccos-of-trace formula bottoms out near sqrt(machine eps).
    """
    q = matrix_to_quat(ra.T @ rb)
    return float(2.0 * np.arctan2(np.linalg.norm(q[1:]), abs(q[0])))


@dataclass(frozen=True)
class Pose6D:
    """Rigid transform: unit quaternion (w,x,y,z, w>=0) plus translation (m)."""

    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = quat_normalize(np.asarray(self.quaternion, dtype=float))
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("non-finite translation")
        object.__setattr__(self, "quaternion", q)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose6D":
        return Pose6D()

    @staticmethod
    def from_matrix(rot: np.ndarray, trans: np.ndarray) -> "Pose6D":
        return Pose6D(matrix_to_quat(rot), np.asarray(trans, dtype=float))

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.quaternion)

    def compose(self, other: "Pose6D") -> "Pose6D":
        """self * other: apply other first, then self."""
        q = quat_mul(self.quaternion, other.quaternion)
        t = self.rotation_matrix() @ other.translation + self.translation
        return Pose6D(q, t)

    def inverse(self) -> "Pose6D":
        qi = quat_conj(self.quaternion)
        return Pose6D(qi, -(quat_to_matrix(qi) @ self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N,3) array or single 3-vector into the parent frame."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation_matrix().T + self.translation

    def to_list(self) -> list:
        return [*map(float, self.quaternion), *map(float, self.translation)]

    @staticmethod
    def from_list(vals) -> "Pose6D":
        v = [float(x) for x in vals]
        if len(v) != 7:
            raise ValueError("pose list must have 7 entries (qw qx qy qz tx ty tz)")
        return Pose6D(np.array(v[:4]), np.array(v[4:]))


def pose_delta(a: Pose6D, b: Pose6D) -> tuple[float, float]:
    """(geodesic rotation angle rad, translation distance m) between poses."""
    ang = rotation_angle_between(a.rotation_matrix(), b.rotation_matrix())
    dist = float(np.linalg.norm(a.translation - b.translation))
    return ang, dist

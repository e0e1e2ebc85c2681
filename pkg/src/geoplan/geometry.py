"""Geometric primitives over point clouds and rigid transforms.

Conventions
-----------
* Point clouds are ``(N, 3)`` float arrays in meters.
* World axes: left is -x, right is +x, front is +y, back is -y, up is +z.
* Direction vectors returned by :func:`major_axis` and :func:`surface_normal`
  are sign-normalized so that their largest-magnitude component is positive.
* Euler angles are roll-pitch-yaw: ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DegeneratePointCloud, OutOfRange

__all__ = [
    "RigidTransform",
    "as_cloud",
    "centroid",
    "principal_axes",
    "major_axis",
    "surface_normal",
    "normalize_sign",
    "skew",
    "rodrigues",
    "rotation_log",
    "rot_x",
    "rot_y",
    "rot_z",
    "rotate_about_point",
    "euler_of",
    "euler_to_matrix",
    "interpolate_pose",
    "rotation_angle",
]

_EPS = 1e-12


def as_cloud(points) -> np.ndarray:
    pc = np.asarray(points, dtype=float)
    if pc.ndim == 1 and pc.shape[0] == 3:
        pc = pc[None, :]
    if pc.ndim != 2 or pc.shape[1] != 3 or pc.shape[0] < 1:
        raise DegeneratePointCloud(f"expected an (N, 3) cloud with N >= 1, got shape {pc.shape}")
    if not np.all(np.isfinite(pc)):
        raise DegeneratePointCloud("point cloud contains non-finite values")
    return pc


def centroid(pc) -> np.ndarray:
    return as_cloud(pc).mean(axis=0)


def normalize_sign(v: np.ndarray) -> np.ndarray:
    """Flip ``v`` so that its largest-magnitude component is non-negative.

    Ties resolve to the lowest index (``argmax`` semantics).
    """
    v = np.asarray(v, dtype=float)
    mags = np.abs(v)
    order = np.argsort(-mags, kind="stable")
    for idx in order:
        if v[idx] != 0.0:
            return -v if v[idx] < 0 else v.copy()
    return v.copy()


def principal_axes(pc, min_points: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of the sample covariance, eigenvalues descending.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvectors as columns.
    """
    pc = as_cloud(pc)
    if pc.shape[0] < min_points:
        raise DegeneratePointCloud(f"need at least {min_points} points, got {pc.shape[0]}")
    centered = pc - pc.mean(axis=0)
    cov = centered.T @ centered / (pc.shape[0] - 1)
    if not np.any(np.abs(cov) > _EPS * _EPS):
        raise DegeneratePointCloud("covariance is identically zero")
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]


def major_axis(pc) -> np.ndarray:
    """Unit direction of largest spread.

    Two points already define a line, so two-point clouds (the synthetic
    gripper direction segments) are accepted here.
    """
    _, vecs = principal_axes(pc, min_points=2)
    axis = vecs[:, 0]
    return normalize_sign(axis / np.linalg.norm(axis))


def surface_normal(pc) -> np.ndarray:
    vals, vecs = principal_axes(pc, min_points=3)
    if vals[1] <= _EPS * max(vals[0], _EPS):
        raise DegeneratePointCloud("cloud is colinear; the normal is undefined")
    n = vecs[:, 2]
    return normalize_sign(n / np.linalg.norm(n))


def skew(v) -> np.ndarray:
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rodrigues(axis, angle: float) -> np.ndarray:
    """``I + sin(a) K + (1 - cos(a)) K^2`` for unit ``axis``."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < _EPS:
        return np.eye(3)
    K = skew(axis / n)
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def exp_so3(rotvec) -> np.ndarray:
    rotvec = np.asarray(rotvec, dtype=float)
    angle = float(np.linalg.norm(rotvec))
    if angle < _EPS:
        return np.eye(3) + skew(rotvec)
    return rodrigues(rotvec / angle, angle)


def rotation_log(R) -> np.ndarray:
    """Rotation vector (axis * angle, angle in [0, pi]) of ``R``."""
    return Rotation.from_matrix(np.asarray(R, dtype=float)).as_rotvec()


def rotation_angle(R) -> float:
    c = (np.trace(R) - 1.0) / 2.0
    return float(math.acos(min(1.0, max(-1.0, c))))


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotate_about_point(pc, center, R) -> np.ndarray:
    """Map every point ``p`` to ``R (p - center) + center``, keeping order."""
    pc = np.asarray(pc, dtype=float)
    center = np.asarray(center, dtype=float)
    return (pc - center) @ np.asarray(R).T + center


def _wrap(a: float) -> float:
    a = math.atan2(math.sin(a), math.cos(a))
    return math.pi if a <= -math.pi else a


def euler_of(R) -> tuple[float, float, float]:
    """Return ``(roll, pitch, yaw)`` with ``R = Rz(yaw) Ry(pitch) Rx(roll)``.

    At gimbal lock (|pitch| = pi/2) roll is set to 0 and the remaining
    rotation is folded into yaw.
    """
    R = np.asarray(R, dtype=float)
    s = -R[2, 0]
    s = min(1.0, max(-1.0, s))
    pitch = math.asin(s)
    if abs(abs(s) - 1.0) < 1e-12:
        roll = 0.0
        yaw = math.atan2(-R[0, 1], R[1, 1])
    else:
        roll = math.atan2(R[2, 1], R[2, 2])
        yaw = math.atan2(R[1, 0], R[0, 0])
    return (_wrap(roll), pitch, _wrap(yaw))


def euler_to_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """A gripper or object pose: ``x -> rotation @ x + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_rpy(cls, translation, roll=0.0, pitch=0.0, yaw=0.0) -> "RigidTransform":
        return cls(euler_to_matrix(roll, pitch, yaw), translation)

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self * other``: apply ``other`` first."""
        return RigidTransform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def __eq__(self, other) -> bool:
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return bool(np.array_equal(self.rotation, other.rotation) and np.array_equal(self.translation, other.translation))

    def allclose(self, other: "RigidTransform", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, atol=atol)
            and np.allclose(self.translation, other.translation, atol=atol)
        )

    def __repr__(self) -> str:
        rpy = ", ".join(f"{a:.4f}" for a in euler_of(self.rotation))
        t = ", ".join(f"{x:.4f}" for x in self.translation)
        return f"RigidTransform(t=[{t}], rpy=[{rpy}])"


def interpolate_pose(a: RigidTransform, b: RigidTransform, s: float) -> RigidTransform:
    """Linear translation, shortest-arc spherical rotation interpolation."""
    if not (0.0 <= s <= 1.0):
        raise OutOfRange(f"interpolation fraction {s} not in [0, 1]")
    if s == 0.0:
        return a
    if s == 1.0:
        return b
    t = (1.0 - s) * a.translation + s * b.translation
    delta = rotation_log(b.rotation @ a.rotation.T)
    R = exp_so3(s * delta) @ a.rotation
    return RigidTransform(R, t)

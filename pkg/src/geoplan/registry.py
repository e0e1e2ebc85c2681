"""Time-indexed store of component point clouds.

Clouds are keyed by ``(object, part)``.  Timestamp ``-1`` reads the current
state; ``-2`` reads the most recent snapshot, which is either the one taken
at grasp time or the one taken at the start of the current stage visit,
whichever was recorded last.  Gripper clouds (``the gripper ... of the
robot``) are synthesized from the gripper pose instead of being stored.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .constraints import GeometricComponentRef, parse_ref
from .errors import DoubleGrasp, NoHistory, NotGrasping, UnknownComponent, UnknownObject
from .geometry import RigidTransform

ROBOT = "robot"
GRIPPER_SEGMENT_LENGTH = 0.10

Key = tuple[str, str]


class GripperAxis(str, enum.Enum):
    APPROACH = "Approach"
    BINORMAL = "Binormal"


# part token (without article) -> gripper axis column
_GRIPPER_PARTS = {
    "gripper approach": GripperAxis.APPROACH,
    "gripper": GripperAxis.APPROACH,
    "robot approach": GripperAxis.APPROACH,
    "approach": GripperAxis.APPROACH,
    "gripper binormal": GripperAxis.BINORMAL,
    "binormal": GripperAxis.BINORMAL,
}


def gripper_direction_cloud(pose: RigidTransform, which: GripperAxis) -> np.ndarray:
    """Two points 0.10 m apart through the gripper origin along tool z or tool x."""
    col = 2 if GripperAxis(which) is GripperAxis.APPROACH else 0
    axis = pose.rotation[:, col]
    half = 0.5 * GRIPPER_SEGMENT_LENGTH
    return np.stack([pose.translation - half * axis, pose.translation + half * axis])


@functools.lru_cache(maxsize=4096)
def make_key(obj: str, part: str) -> Key:
    return GeometricComponentRef("the area", part, obj).key


def as_key(ref) -> Key:
    if isinstance(ref, GeometricComponentRef):
        return ref.key
    if isinstance(ref, str):
        return parse_ref(ref).key
    obj, part = ref
    return make_key(obj, part)


def is_robot_key(key: Key) -> bool:
    return key[0] == ROBOT


class SnapshotLabel(str, enum.Enum):
    CURRENT = "Current"
    AT_GRASP = "AtGrasp"
    STAGE_START = "StageStart"


@dataclass(frozen=True)
class Snapshot:
    label: SnapshotLabel
    clouds: Mapping[Key, np.ndarray]
    gripper_pose: RigidTransform
    stage: int | None = None
    sequence: int = 0


@dataclass
class AttachmentState:
    grasped_object: str | None = None
    moving_refs: frozenset = field(default_factory=frozenset)
    gripper_pose: RigidTransform = field(default_factory=RigidTransform.identity)


def _frozen(pc) -> np.ndarray:
    a = np.array(pc, dtype=float)
    a.setflags(write=False)
    return a


class ComponentRegistry:
    """Mutable scene state as seen by cost functions.

    Single writer: the executor (or the scene simulator) mutates it between
    solver runs; cost evaluation only reads.
    """

    def __init__(self, gripper_pose: RigidTransform | None = None):
        self._clouds: dict[Key, np.ndarray] = {}
        self.attachment = AttachmentState(gripper_pose=gripper_pose or RigidTransform.identity())
        self._at_grasp: Snapshot | None = None
        self._stage_start: Snapshot | None = None
        self._sequence = 0

    # -- population -------------------------------------------------------
    def add(self, obj: str, part: str, cloud) -> None:
        key = make_key(obj, part)
        self._clouds[key] = _frozen(cloud)

    def set_cloud(self, key, cloud) -> None:
        key = as_key(key)
        if key not in self._clouds:
            raise UnknownComponent(key)
        self._clouds[key] = _frozen(cloud)

    @property
    def gripper_pose(self) -> RigidTransform:
        return self.attachment.gripper_pose

    def set_gripper_pose(self, pose: RigidTransform) -> None:
        """Teleport the gripper without dragging attached clouds."""
        self.attachment.gripper_pose = pose

    def keys(self) -> list[Key]:
        return list(self._clouds)

    def objects(self) -> list[str]:
        return sorted({k[0] for k in self._clouds})

    def parts_of(self, obj: str) -> list[Key]:
        return [k for k in self._clouds if k[0] == obj]

    def has(self, ref) -> bool:
        key = as_key(ref)
        return key in self._clouds or (is_robot_key(key) and key[1] in _GRIPPER_PARTS)

    @property
    def moving_keys(self) -> frozenset:
        return self.attachment.moving_refs

    # -- reads ------------------------------------------------------------
    def get_point_cloud(self, ref, timestamp: int = -1) -> np.ndarray:
        key = as_key(ref)
        if timestamp == -1:
            return self._lookup(key, self._clouds, self.gripper_pose)
        if timestamp == -2:
            snap = self.previous_snapshot()
            return self._lookup(key, snap.clouds, snap.gripper_pose)
        raise ValueError(f"timestamp must be -1 or -2, got {timestamp}")

    def _lookup(self, key: Key, clouds: Mapping[Key, np.ndarray], pose: RigidTransform) -> np.ndarray:
        if is_robot_key(key):
            axis = _GRIPPER_PARTS.get(key[1])
            if axis is None:
                raise UnknownComponent(key)
            return gripper_direction_cloud(pose, axis)
        try:
            return clouds[key]
        except KeyError:
            raise UnknownComponent(key) from None

    def previous_snapshot(self) -> Snapshot:
        snaps = [s for s in (self._at_grasp, self._stage_start) if s is not None]
        if not snaps:
            raise NoHistory("no snapshot has been recorded yet")
        return max(snaps, key=lambda s: s.sequence)

    def snapshot(self, label: SnapshotLabel = SnapshotLabel.CURRENT, stage: int | None = None) -> Snapshot:
        self._sequence += 1
        return Snapshot(label, dict(self._clouds), self.gripper_pose, stage, self._sequence)

    def gripper_direction_cloud(self, which: GripperAxis) -> np.ndarray:
        return gripper_direction_cloud(self.gripper_pose, which)

    # -- writes -----------------------------------------------------------
    def record_stage_start(self, stage: int) -> Snapshot:
        self._stage_start = self.snapshot(SnapshotLabel.STAGE_START, stage)
        return self._stage_start

    def apply_gripper_motion(self, pose: RigidTransform) -> None:
        """Move the gripper to ``pose``; attached clouds follow rigidly."""
        old = self.gripper_pose
        rel = pose.compose(old.inverse())
        for key in self.attachment.moving_refs:
            self._clouds[key] = _frozen(rel.apply(self._clouds[key]))
        self.attachment.gripper_pose = pose

    def set_grasp(self, obj: str) -> None:
        if self.attachment.grasped_object is not None:
            raise DoubleGrasp(f"already holding {self.attachment.grasped_object!r}")
        name = make_key(obj, "body")[0]
        keys = frozenset(self.parts_of(name))
        if not keys:
            raise UnknownObject(obj)
        self.attachment.grasped_object = name
        self.attachment.moving_refs = keys
        self._at_grasp = self.snapshot(SnapshotLabel.AT_GRASP)

    def clear_grasp(self) -> None:
        if self.attachment.grasped_object is None:
            raise NotGrasping("nothing is grasped")
        self.attachment.grasped_object = None
        self.attachment.moving_refs = frozenset()
        self._at_grasp = None

    def clone(self) -> "ComponentRegistry":
        other = ComponentRegistry(self.gripper_pose)
        other._clouds = dict(self._clouds)
        other.attachment = AttachmentState(
            self.attachment.grasped_object, self.attachment.moving_refs, self.attachment.gripper_pose
        )
        other._at_grasp = self._at_grasp
        other._stage_start = self._stage_start
        other._sequence = self._sequence
        return other

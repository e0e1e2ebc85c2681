"""Synthetic tabletop scenes built from primitive shapes.

A scene file is JSON with ``"format": "scene/v1"``::

    {
      "format": "scene/v1",
      "name": "open-door",
      "seed": 0,
      "gripper_home": {"translation": [x, y, z], "rpy_deg": [r, p, y]},
      "objects": [
        {"name": "door", "pose": {...},
         "parts": [{"name": "surface", "shape": "box", "size": [sx, sy, sz],
                    "pose": {...}, "points": 200}, ...],
         "joint": {"type": "revolute", "axis_part": "hinge", "driver_part": "handle",
                   "limits": [-120, 120]}}
      ],
      "success": {"open-door": {"type": "revolute_open", "object": "door", "min_angle_deg": 45}},
      "randomize": {"objects": ["door"], "translation": 0.05, "yaw_deg": 15},
      "workspace": {"min": [x, y, z], "max": [x, y, z]}
    }

Shapes are sampled in their local frame: ``box`` fills its volume,
``cylinder`` fills a volume along local z, ``plane`` covers a rectangle in
local xy and ``segment`` places evenly spaced points along local z.
Revolute limits are in degrees, prismatic limits in meters; a prismatic
joint also needs an object-frame ``axis``.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry as geo
from .errors import SpecError, UnknownTask
from .geometry import RigidTransform
from .registry import ComponentRegistry
from .solver import EventKind, Trajectory

FORMAT_TAG = "scene/v1"
MIN_POINTS = 20
SHAPES = ("box", "cylinder", "plane", "segment")


def _pose(d: dict | None) -> RigidTransform:
    if d is None:
        return RigidTransform.identity()
    try:
        t = np.asarray(d.get("translation", [0.0, 0.0, 0.0]), dtype=float).reshape(3)
        r, p, y = np.radians(np.asarray(d.get("rpy_deg", [0.0, 0.0, 0.0]), dtype=float).reshape(3))
    except (TypeError, ValueError, AttributeError) as exc:
        raise SpecError(f"bad pose {d!r}: {exc}") from None
    return RigidTransform.from_rpy(t, r, p, y)


@dataclass(frozen=True)
class PartSpec:
    name: str
    shape: str
    size: tuple[float, ...]
    pose: RigidTransform
    points: int = 200

    def sample_local(self, rng: np.random.Generator) -> np.ndarray:
        n = self.points
        if self.shape == "box":
            return (rng.random((n, 3)) - 0.5) * np.asarray(self.size)
        if self.shape == "cylinder":
            r, h = self.size
            rad = r * np.sqrt(rng.random(n))
            ang = rng.random(n) * 2 * math.pi
            z = (rng.random(n) - 0.5) * h
            return np.column_stack([rad * np.cos(ang), rad * np.sin(ang), z])
        if self.shape == "plane":
            sx, sy = self.size
            xy = (rng.random((n, 2)) - 0.5) * np.asarray([sx, sy])
            return np.column_stack([xy, np.zeros(n)])
        (length,) = self.size
        z = np.linspace(-0.5 * length, 0.5 * length, n)
        return np.column_stack([np.zeros(n), np.zeros(n), z])


_SIZE_ARITY = {"box": 3, "cylinder": 2, "plane": 2, "segment": 1}


@dataclass(frozen=True)
class JointSpec:
    type: str
    driver_part: str
    axis_part: str | None = None
    axis: tuple[float, float, float] | None = None
    limits: tuple[float, float] = (-math.inf, math.inf)


@dataclass
class SceneObject:
    name: str
    pose: RigidTransform
    parts: dict[str, PartSpec]
    joint: JointSpec | None = None


def _parse_part(d: dict) -> PartSpec:
    try:
        shape = d["shape"]
        if shape not in SHAPES:
            raise SpecError(f"unknown shape {shape!r}")
        size = tuple(float(x) for x in np.atleast_1d(d["size"]))
        if len(size) != _SIZE_ARITY[shape] or min(size) <= 0:
            raise SpecError(f"{shape} needs {_SIZE_ARITY[shape]} positive sizes, got {size}")
        points = int(d.get("points", 200))
        if points < MIN_POINTS:
            raise SpecError(f"part {d['name']!r} needs at least {MIN_POINTS} points")
        return PartSpec(str(d["name"]).lower(), shape, size, _pose(d.get("pose")), points)
    except KeyError as exc:
        raise SpecError(f"part is missing {exc}") from None


def _parse_object(d: dict) -> SceneObject:
    try:
        name = str(d["name"]).lower()
        parts_list = [_parse_part(p) for p in d["parts"]]
    except (KeyError, TypeError) as exc:
        raise SpecError(f"object is missing {exc}") from None
    parts = {p.name: p for p in parts_list}
    if len(parts) != len(parts_list):
        raise SpecError(f"duplicate part names in object {name!r}")
    joint = None
    if "joint" in d:
        j = d["joint"]
        jtype = j.get("type")
        if jtype not in ("revolute", "prismatic"):
            raise SpecError(f"unknown joint type {jtype!r}")
        limits = tuple(float(x) for x in j.get("limits", (-math.inf, math.inf)))
        if jtype == "revolute":
            if j.get("axis_part") not in parts:
                raise SpecError("revolute joint needs an axis_part naming one of the object's parts")
            limits = tuple(math.radians(x) for x in limits)
        elif "axis" not in j:
            raise SpecError("prismatic joint needs an axis")
        if j.get("driver_part") not in parts:
            raise SpecError("joint driver_part must name one of the object's parts")
        axis = tuple(float(x) for x in j["axis"]) if "axis" in j else None
        joint = JointSpec(jtype, j["driver_part"], j.get("axis_part"), axis, limits)
    return SceneObject(name, _pose(d.get("pose")), parts, joint)


@dataclass
class JointState:
    spec: JointSpec
    point: np.ndarray
    direction: np.ndarray
    reference: dict[tuple[str, str], np.ndarray]
    driver_ref: np.ndarray
    value: float = 0.0
    grasp_offset: RigidTransform | None = None

    def transform(self, value: float) -> RigidTransform:
        if self.spec.type == "revolute":
            R = geo.rodrigues(self.direction, value)
            return RigidTransform(R, self.point - R @ self.point)
        return RigidTransform(np.eye(3), value * self.direction)

    def project(self, implied_driver: np.ndarray) -> float:
        lo, hi = self.spec.limits
        if self.spec.type == "prismatic":
            s = float(np.dot(implied_driver - self.driver_ref, self.direction))
            return min(hi, max(lo, s))
        a = self.direction
        u = self.driver_ref - self.point
        v = implied_driver - self.point
        u = u - np.dot(u, a) * a
        v = v - np.dot(v, a) * a
        theta = math.atan2(float(np.dot(a, np.cross(u, v))), float(np.dot(u, v)))
        # keep the angle continuous with the current configuration
        theta += 2 * math.pi * round((self.value - theta) / (2 * math.pi))
        return min(hi, max(lo, theta))


@dataclass
class Scene:
    name: str
    objects: dict[str, SceneObject]
    registry: ComponentRegistry
    gripper_home: RigidTransform
    success: dict[str, dict] = field(default_factory=dict)
    randomize: dict = field(default_factory=dict)
    workspace: tuple[np.ndarray, np.ndarray] | None = None
    joints: dict[str, JointState] = field(default_factory=dict)
    history: list[dict[str, np.ndarray]] = field(default_factory=list)
    spec: dict = field(default_factory=dict, repr=False)

    # -- state -------------------------------------------------------------
    def object_centroid(self, name: str) -> np.ndarray:
        clouds = [self.registry.get_point_cloud(k) for k in self.registry.parts_of(name)]
        return np.vstack(clouds).mean(axis=0)

    def part_cloud(self, obj: str, part: str) -> np.ndarray:
        return self.registry.get_point_cloud((obj, part))

    def _record(self) -> None:
        entry = {name: self.object_centroid(name) for name in self.objects}
        entry["__gripper__"] = self.registry.gripper_pose.translation.copy()
        self.history.append(entry)

    def within_workspace(self) -> bool:
        if self.workspace is None:
            return True
        lo, hi = self.workspace
        return all(bool(np.all(self.object_centroid(n) >= lo) and np.all(self.object_centroid(n) <= hi))
                   for n in self.objects)

    # -- motion ------------------------------------------------------------
    def apply_trajectory(self, traj: Trajectory) -> None:
        events = dict(traj.events)
        for i, pose in enumerate(traj.waypoints):
            self._move_gripper(pose)
            event = events.get(i)
            if event is EventKind.GRASP:
                self.registry.set_grasp(traj.grasp_target)
                joint = self.joints.get(self.registry.attachment.grasped_object)
                if joint is not None:
                    joint.grasp_offset = joint.transform(joint.value).inverse().compose(self.registry.gripper_pose)
            elif event is EventKind.RELEASE:
                held = self.registry.attachment.grasped_object
                self.registry.clear_grasp()
                if held in self.joints:
                    self.joints[held].grasp_offset = None
            self._record()

    def _move_gripper(self, pose: RigidTransform) -> None:
        held = self.registry.attachment.grasped_object
        joint = self.joints.get(held) if held else None
        if joint is None or joint.grasp_offset is None:
            self.registry.apply_gripper_motion(pose)
            return
        implied = pose.compose(joint.grasp_offset.inverse()).apply(joint.driver_ref[None, :])[0]
        joint.value = joint.project(implied)
        J = joint.transform(joint.value)
        for key, ref in joint.reference.items():
            self.registry.set_cloud(key, J.apply(ref))
        self.registry.set_gripper_pose(J.compose(joint.grasp_offset))

    # -- success -----------------------------------------------------------
    def check_success(self, task: str | None = None) -> bool:
        task = task or self.name
        if task not in self.success:
            raise UnknownTask(task)
        params = self.success[task]
        kind = params.get("type")
        fn = _PREDICATES.get(kind)
        if fn is None:
            raise SpecError(f"unknown success predicate {kind!r}")
        return bool(fn(self, params))


def _revolute_open(scene: Scene, p: dict) -> bool:
    return abs(scene.joints[p["object"]].value) >= math.radians(p.get("min_angle_deg", 45.0)) - 1e-9


def _prismatic_open(scene: Scene, p: dict) -> bool:
    return scene.joints[p["object"]].value >= p.get("min_distance", 0.05) - 1e-9


def _reach(scene: Scene, p: dict) -> bool:
    target = scene.part_cloud(p["object"], p.get("part", "body")).mean(axis=0)
    return float(np.linalg.norm(scene.registry.gripper_pose.translation - target)) <= p.get("tolerance", 0.01)


def _height(part: PartSpec) -> float:
    return {"box": lambda: part.size[2], "cylinder": lambda: part.size[1]}.get(part.shape, lambda: 0.0)()


def _stacked(scene: Scene, p: dict) -> bool:
    top_part = scene.objects[p["object"]].parts[p.get("part", "body")]
    base_obj = scene.objects[p["target"]]
    base_part = base_obj.parts[p.get("target_part", "body")]
    c_top = scene.part_cloud(p["object"], top_part.name).mean(axis=0)
    c_base = scene.part_cloud(p["target"], base_part.name).mean(axis=0)
    half = 0.5 * np.asarray(base_part.size[:2])
    # footprint test in the base block's own frame (it may be yawed)
    R = base_obj.pose.compose(base_part.pose).rotation
    local = R.T @ (c_top - c_base)
    gap = local[2] - 0.5 * (_height(base_part) + _height(top_part))
    tol = p.get("tolerance", 0.01)
    return bool(np.all(np.abs(local[:2]) <= half) and -tol <= gap <= p.get("max_gap", 0.03))


def _cut(scene: Scene, p: dict) -> bool:
    blade = scene.part_cloud(p["object"], p.get("part", "blade"))
    target = scene.objects[p["target"]]
    tpart = target.parts[p.get("target_part", "body")]
    radius, length = tpart.size
    frame = target.pose.compose(tpart.pose)
    local = (blade - frame.translation) @ frame.rotation
    inside = (np.hypot(local[:, 0], local[:, 1]) <= radius) & (np.abs(local[:, 2]) <= 0.5 * length)
    axis = frame.rotation[:, 2]
    aligned = abs(float(np.dot(geo.surface_normal(blade), axis))) >= math.cos(math.radians(p.get("max_angle_deg", 15)))
    return bool(inside.any() and aligned)


def _above(scene: Scene, p: dict) -> bool:
    upper = scene.part_cloud(p["object"], p["part"]).mean(axis=0)
    lower = scene.part_cloud(p["target"], p["target_part"]).mean(axis=0)
    horizontal = float(np.linalg.norm(upper[:2] - lower[:2]))
    return horizontal <= p.get("tolerance", 0.02) and upper[2] > lower[2]


def _orbit(scene: Scene, p: dict) -> bool:
    """At least one full turn of the object centroid about the container axis, staying inside it."""
    container = scene.objects[p["target"]]
    cpart = container.parts[p.get("target_part", "body")]
    frame = container.pose.compose(cpart.pose)
    axis, center = frame.rotation[:, 2], frame.translation
    for entry in scene.history:
        v = entry[p["object"]] - center
        if np.linalg.norm(v - np.dot(v, axis) * axis) > cpart.size[0]:
            return False
    total = abs(orbit_angle(scene, p["object"], center, axis))
    return total >= math.radians(360.0 - p.get("tolerance_deg", 5.0))


_PREDICATES = {
    "revolute_open": _revolute_open,
    "prismatic_open": _prismatic_open,
    "reach": _reach,
    "stacked": _stacked,
    "cut": _cut,
    "above": _above,
    "orbit": _orbit,
}


def orbit_angle(scene: Scene, obj: str, center, axis=(0.0, 0.0, 1.0)) -> float:
    """Net signed angle (radians) swept by an object's centroid over the recorded history."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    ref = np.cross(axis, [1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.cross(axis, [0.0, 1.0, 0.0])
    ref /= np.linalg.norm(ref)
    other = np.cross(axis, ref)
    angles = []
    for entry in scene.history:
        v = entry[obj] - np.asarray(center, dtype=float)
        angles.append(math.atan2(float(np.dot(v, other)), float(np.dot(v, ref))))
    if len(angles) < 2:
        return 0.0
    unwrapped = np.unwrap(angles)
    return float(unwrapped[-1] - unwrapped[0])


# --------------------------------------------------------------------------
# construction

def load_spec(source) -> dict:
    if isinstance(source, dict):
        return copy.deepcopy(source)
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"cannot read scene {path}: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"scene {path} is not valid JSON: {exc}") from None


def apply_jitter(spec: dict, jitter: dict) -> dict:
    """Return a copy of ``spec`` with per-object ``{dx, dy, yaw_deg}`` offsets applied."""
    spec = copy.deepcopy(spec)
    for obj in spec.get("objects", []):
        j = jitter.get(obj.get("name"))
        if j is None:
            continue
        pose = obj.setdefault("pose", {})
        t = list(pose.get("translation", [0.0, 0.0, 0.0]))
        rpy = list(pose.get("rpy_deg", [0.0, 0.0, 0.0]))
        pose["translation"] = [t[0] + j["dx"], t[1] + j["dy"], t[2]]
        pose["rpy_deg"] = [rpy[0], rpy[1], rpy[2] + j["yaw_deg"]]
    spec["jitter"] = dict(jitter)
    return spec


def sample_jitter(spec: dict, rng: np.random.Generator) -> dict:
    """Draw a uniform xy offset and yaw for every object listed under ``randomize``."""
    rand = spec.get("randomize") or {}
    dt = float(rand.get("translation", 0.0))
    dyaw = float(rand.get("yaw_deg", 0.0))
    jitter = {}
    for obj in spec.get("objects", []):
        if obj.get("name") in rand.get("objects", []):
            dx, dy = rng.uniform(-dt, dt, size=2)
            jitter[obj["name"]] = {"dx": float(dx), "dy": float(dy), "yaw_deg": float(rng.uniform(-dyaw, dyaw))}
    return jitter


def jitter_spec(spec: dict, rng: np.random.Generator) -> dict:
    """Perturb the listed objects' poses; the applied offsets are kept under ``"jitter"``."""
    return apply_jitter(spec, sample_jitter(spec, rng))


def build_scene(source, jitter_rng: np.random.Generator | None = None) -> tuple[Scene, ComponentRegistry]:
    """Sample every part and return the scene with a populated registry."""
    spec = load_spec(source)
    if not isinstance(spec, dict) or spec.get("format") != FORMAT_TAG:
        raise SpecError(f"scene must be a JSON object with format {FORMAT_TAG!r}")
    if jitter_rng is not None:
        spec = jitter_spec(spec, jitter_rng)
    try:
        objects_list = [_parse_object(o) for o in spec["objects"]]
        name = str(spec["name"])
    except (KeyError, TypeError) as exc:
        raise SpecError(f"scene is missing {exc}") from None
    objects = {o.name: o for o in objects_list}
    if len(objects) != len(objects_list):
        raise SpecError("duplicate object names")

    home = _pose(spec.get("gripper_home"))
    registry = ComponentRegistry(home)
    rng = np.random.default_rng(int(spec.get("seed", 0)))
    for obj in objects_list:
        for part in obj.parts.values():
            frame = obj.pose.compose(part.pose)
            registry.add(obj.name, part.name, frame.apply(part.sample_local(rng)))

    joints = {}
    for obj in objects_list:
        if obj.joint is None:
            continue
        j = obj.joint
        reference = {k: registry.get_point_cloud(k) for k in registry.parts_of(obj.name)}
        driver = registry.get_point_cloud((obj.name, j.driver_part)).mean(axis=0)
        if j.type == "revolute":
            hinge = registry.get_point_cloud((obj.name, j.axis_part))
            point, direction = hinge.mean(axis=0), geo.major_axis(hinge)
        else:
            direction = obj.pose.rotation @ np.asarray(j.axis, dtype=float)
            direction = direction / np.linalg.norm(direction)
            point = driver
        joints[obj.name] = JointState(j, point, direction, reference, driver)

    workspace = None
    if "workspace" in spec:
        workspace = (np.asarray(spec["workspace"]["min"], float), np.asarray(spec["workspace"]["max"], float))
    scene = Scene(name, objects, registry, home, dict(spec.get("success", {})), dict(spec.get("randomize", {})),
                  workspace, joints, spec=spec)
    scene._record()
    return scene, registry


def data_dir() -> Path:
    return Path(__file__).resolve().parent / "data"


def scene_path(name: str) -> Path:
    path = data_dir() / "scenes" / f"{name}.json"
    if not path.exists():
        raise SpecError(f"no shipped scene named {name!r}")
    return path


def shipped_scenes() -> list[str]:
    return sorted(p.stem for p in (data_dir() / "scenes").glob("*.json"))


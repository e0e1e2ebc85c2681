"""Cost primitives over component point clouds and the constraint compiler.

Every primitive returns a non-negative float that is 0 when its relation is
satisfied.  Angular costs carry a fixed weight of 5 so they are comparable
with metric costs (meters) inside the solver objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from . import geometry as geo
from .constraints import Constraint, ConstraintKind, Direction, GeometricComponentRef, RelationKind, Stage
from .errors import CardinalityMismatch, DegeneratePointCloud, UncompilableRelation, UnknownComponent

ANGULAR_WEIGHT = 5.0
ORDERING_PENALTY = 1000.0

_AXIS_OF = {
    Direction.LEFT: (0, -1.0),
    Direction.RIGHT: (0, 1.0),
    Direction.FRONT: (1, 1.0),
    Direction.BACK: (1, -1.0),
    Direction.UP: (2, 1.0),
    Direction.DOWN: (2, -1.0),
}


# --------------------------------------------------------------------------
# primitives

def cost_parallel(dir_a, dir_b) -> float:
    return float((1.0 - abs(float(np.dot(dir_a, dir_b)))) * ANGULAR_WEIGHT)


def cost_perpendicular(dir_a, dir_b) -> float:
    return float(abs(float(np.dot(dir_a, dir_b))) * ANGULAR_WEIGHT)


def cost_directly_above_by(pc_upper, pc_lower, d: float | None = None) -> float:
    """Horizontal misalignment plus vertical gap error.

    Without ``d`` any positive gap is accepted.  An upper centroid below the
    lower one adds the gap magnitude and a penalty of 1000.
    """
    upper = geo.centroid(pc_upper)
    lower = geo.centroid(pc_lower)
    horizontal = float(np.linalg.norm(upper[:2] - lower[:2]))
    vertical = float(upper[2] - lower[2])
    if d is not None:
        cost = horizontal + abs(vertical - d)
    else:
        cost = horizontal + (abs(vertical) if vertical < 0 else 0.0)
    if vertical < 0:
        cost += ORDERING_PENALTY
    return cost


def cost_directly_below_by(pc_lower, pc_upper, d: float | None = None) -> float:
    return cost_directly_above_by(pc_upper, pc_lower, d)


def cost_offset_along(pc_a, pc_b, direction: Direction, d: float) -> float:
    """Cost that ``pc_b`` sits ``d`` meters from ``pc_a`` towards ``direction``."""
    axis, sign = _AXIS_OF[Direction(direction)]
    delta = geo.centroid(pc_b) - geo.centroid(pc_a)
    off_axis = sum(abs(float(delta[i])) for i in range(3) if i != axis)
    return abs(sign * float(delta[axis]) - d) + off_axis


def _check_correspondence(pc_now, pc_prev) -> tuple[np.ndarray, np.ndarray]:
    pc_now = geo.as_cloud(pc_now)
    pc_prev = geo.as_cloud(pc_prev)
    if pc_now.shape != pc_prev.shape:
        raise CardinalityMismatch(f"{pc_now.shape[0]} points now vs {pc_prev.shape[0]} before")
    return pc_now, pc_prev


def cost_rotate_about_axis(pc_now, pc_prev, axis_cloud_prev, angle: float, axis=None) -> float:
    """Per-point distance to ``pc_prev`` rotated by ``angle`` about the axis line.

    The axis passes through the centroid of ``axis_cloud_prev``; its direction
    is the cloud's major axis unless given explicitly.
    """
    pc_now, pc_prev = _check_correspondence(pc_now, pc_prev)
    direction = geo.major_axis(axis_cloud_prev) if axis is None else axis
    R = geo.rodrigues(direction, angle)
    target = geo.rotate_about_point(pc_prev, geo.centroid(axis_cloud_prev), R)
    return float(np.linalg.norm(pc_now - target, axis=1).sum())


def cost_orbit_about_axis(pc_now, pc_prev, axis_cloud_prev, angle: float, axis=None) -> float:
    """Like :func:`cost_rotate_about_axis` but the cloud keeps its orientation."""
    pc_now, pc_prev = _check_correspondence(pc_now, pc_prev)
    direction = geo.major_axis(axis_cloud_prev) if axis is None else axis
    R = geo.rodrigues(direction, angle)
    prev_center = pc_prev.mean(axis=0)
    orbit_center = geo.rotate_about_point(prev_center[None, :], geo.centroid(axis_cloud_prev), R)[0]
    target = pc_prev - prev_center + orbit_center
    return float(np.linalg.norm(pc_now - target, axis=1).sum())


def cost_distance_equals(pc_a, pc_b, d: float) -> float:
    return abs(float(np.linalg.norm(geo.centroid(pc_a) - geo.centroid(pc_b))) - d)


def cost_distance_unchanged(pc_now, pc_prev, ref_cloud) -> float:
    ref = geo.centroid(ref_cloud)
    now = np.linalg.norm(geo.centroid(pc_now) - ref)
    before = np.linalg.norm(geo.centroid(pc_prev) - ref)
    return abs(float(now - before))


def cost_move_toward(pc_now, pc_prev, target_cloud, d: float, away: bool = False) -> float:
    prev = geo.centroid(pc_prev)
    heading = geo.centroid(target_cloud) - prev
    n = np.linalg.norm(heading)
    if n < 1e-12:
        raise DegeneratePointCloud("moving point coincides with its reference; direction undefined")
    goal = prev + (-d if away else d) * heading / n
    return float(np.linalg.norm(geo.centroid(pc_now) - goal))


def cost_colinear(pc_point, pc_object, d: float | None = None, axis=None) -> float:
    """Distance of the point from ``center + d * axis`` of the object.

    With ``d`` omitted the offset along the axis is free, so the cost is the
    distance from the point to the axis line.
    """
    center = geo.centroid(pc_object)
    direction = geo.major_axis(pc_object) if axis is None else np.asarray(axis, dtype=float)
    delta = geo.centroid(pc_point) - center
    if d is None:
        return float(np.linalg.norm(delta - np.dot(delta, direction) * direction))
    return float(np.linalg.norm(delta - d * direction))


def cost_reach(pc_a, pc_b) -> float:
    return float(np.linalg.norm(geo.centroid(pc_a) - geo.centroid(pc_b)))


# --------------------------------------------------------------------------
# compilation

LINE_GEOMETRY = frozenset({"axis", "heading", "heading direction", "binormal", "direction",
                           "edge", "left edge", "right edge", "top edge", "bottom edge"})
NORMAL_GEOMETRY = frozenset({"normal"})
PLANE_GEOMETRY = frozenset({"plane", "surface", "face", "area"})
POINT_GEOMETRY = frozenset({"center", "centre", "center point", "point", "left point", "right point", "tip point",
                            "tip", "position"})
KNOWN_GEOMETRY = LINE_GEOMETRY | NORMAL_GEOMETRY | PLANE_GEOMETRY | POINT_GEOMETRY


class CloudSource(Protocol):
    def get_point_cloud(self, ref, timestamp: int = -1) -> np.ndarray: ...


_STATIC_CACHE: dict[tuple[int, Callable], tuple[np.ndarray, np.ndarray]] = {}
_STATIC_CACHE_LIMIT = 4096


def _extract(extractor: Callable[[np.ndarray], np.ndarray], pc: np.ndarray) -> np.ndarray:
    """Apply ``extractor``, memoizing results for read-only (registry-owned) clouds.

    The cache holds a reference to each cloud, so an ``id`` cannot be reused
    while its entry is alive.
    """
    if not isinstance(pc, np.ndarray) or pc.flags.writeable:
        return extractor(pc)
    key = (id(pc), extractor)
    hit = _STATIC_CACHE.get(key)
    if hit is not None and hit[0] is pc:
        return hit[1]
    value = extractor(pc)
    if len(_STATIC_CACHE) >= _STATIC_CACHE_LIMIT:
        _STATIC_CACHE.clear()
    _STATIC_CACHE[key] = (pc, value)
    return value


def _direction_of(ref: GeometricComponentRef) -> tuple[Callable[[np.ndarray], np.ndarray], bool]:
    """Return ``(extractor, is_plane)`` for a direction-bearing geometry."""
    g = ref.geometry_word
    if g in LINE_GEOMETRY:
        return geo.major_axis, False
    if g in NORMAL_GEOMETRY:
        return geo.surface_normal, False
    if g in PLANE_GEOMETRY:
        return geo.surface_normal, True
    raise UncompilableRelation(f"geometry {ref.geometry!r} has no direction")


def _check_geometry(ref: GeometricComponentRef) -> None:
    if ref.geometry_word not in KNOWN_GEOMETRY:
        raise UncompilableRelation(f"unknown geometry token {ref.geometry!r}")


@dataclass(frozen=True)
class CostFunction:
    """A compiled constraint: fetches its clouds and returns a cost >= 0."""

    kind_tag: RelationKind
    refs: tuple[tuple[GeometricComponentRef, int], ...]
    fn: Callable[..., float] = field(repr=False)
    constraint: Constraint | None = field(default=None, repr=False, compare=False)

    @property
    def name(self) -> str:
        if self.constraint is not None and self.constraint.relation is not None:
            return self.constraint.relation.raw_text or self.kind_tag.value
        return self.kind_tag.value

    def evaluate(self, source: CloudSource) -> float:
        clouds = [source.get_point_cloud(ref, ts) for ref, ts in self.refs]
        return float(self.fn(*clouds))

    __call__ = evaluate


@dataclass(frozen=True)
class CostSet:
    subgoal: tuple[CostFunction, ...] = ()
    path: tuple[CostFunction, ...] = ()


def compile_constraint(constraint: Constraint, registry=None) -> CostFunction:
    """Bind a sub-goal or path constraint to the matching primitive.

    ``registry`` (optional) is only consulted to check the referenced
    components exist.
    """
    if constraint.kind not in (ConstraintKind.SUBGOAL, ConstraintKind.PATH):
        raise UncompilableRelation(f"{constraint.kind.value} constraints do not compile to costs")
    rel = constraint.relation
    a, b = rel.operands
    for ref in (a, b):
        _check_geometry(ref)
        if registry is not None and not registry.has(ref):
            raise UnknownComponent(ref.key)
    k = rel.kind
    d = rel.magnitude

    if k in (RelationKind.PARALLEL, RelationKind.PERPENDICULAR):
        ext_a, plane_a = _direction_of(a)
        ext_b, plane_b = _direction_of(b)
        mixed = plane_a != plane_b
        # a line against a plane compares with the plane's normal, which flips the relation
        use_parallel = (k is RelationKind.PARALLEL) != mixed
        prim = cost_parallel if use_parallel else cost_perpendicular

        def fn(pa, pb):
            return prim(_extract(ext_a, pa), _extract(ext_b, pb))

        refs = ((a, -1), (b, -1))
    elif k is RelationKind.DIRECTLY_ABOVE_BY:
        refs = ((a, -1), (b, -1))

        def fn(pa, pb):
            return cost_directly_above_by(pa, pb, d)
    elif k is RelationKind.DIRECTLY_BELOW_BY:
        refs = ((a, -1), (b, -1))

        def fn(pa, pb):
            return cost_directly_below_by(pa, pb, d)
    elif k is RelationKind.OFFSET_ALONG_AXIS_BY:
        refs = ((a, -1), (b, -1))
        direction = rel.direction

        def fn(pa, pb):
            return cost_offset_along(pb, pa, direction, d)
    elif k is RelationKind.DISTANCE_EQUALS:
        refs = ((a, -1), (b, -1))

        def fn(pa, pb):
            return cost_distance_equals(pa, pb, d)
    elif k is RelationKind.DISTANCE_UNCHANGED:
        refs = ((a, -1), (a, -2), (b, -2))
        fn = cost_distance_unchanged
    elif k in (RelationKind.ROTATE_AROUND_AXIS_BY, RelationKind.ORBIT_AROUND_AXIS_BY):
        ext_b, _ = _direction_of(b) if b.geometry_word not in POINT_GEOMETRY else (geo.major_axis, False)
        prim = cost_rotate_about_axis if k is RelationKind.ROTATE_AROUND_AXIS_BY else cost_orbit_about_axis
        refs = ((a, -1), (a, -2), (b, -2))

        def fn(now, prev, axis_cloud):
            return prim(now, prev, axis_cloud, d, axis=_extract(ext_b, axis_cloud))
    elif k in (RelationKind.MOVE_TOWARD_BY, RelationKind.MOVE_AWAY_BY):
        away = k is RelationKind.MOVE_AWAY_BY
        refs = ((a, -1), (a, -2), (b, -2))

        def fn(now, prev, target):
            return cost_move_toward(now, prev, target, d, away=away)
    elif k is RelationKind.COLINEAR:
        # the operand carrying a direction is the line, the other is the point
        if a.geometry_word in POINT_GEOMETRY and b.geometry_word not in POINT_GEOMETRY:
            point, line = a, b
        elif b.geometry_word in POINT_GEOMETRY and a.geometry_word not in POINT_GEOMETRY:
            point, line = b, a
        else:
            point, line = a, b
        ext_line = _direction_of(line)[0] if line.geometry_word not in POINT_GEOMETRY else geo.major_axis
        refs = ((point, -1), (line, -1))

        def fn(pp, pl):
            return cost_colinear(pp, pl, d, axis=_extract(ext_line, pl))
    elif k is RelationKind.REACH:
        refs = ((a, -1), (b, -1))
        fn = cost_reach
    else:  # pragma: no cover - exhaustive over RelationKind
        raise UncompilableRelation(f"no primitive for {k}")
    return CostFunction(k, refs, fn, constraint)


def compile_stage(stage: Stage, registry=None) -> CostSet:
    sub = tuple(compile_constraint(c, registry) for c in stage.of_kind(ConstraintKind.SUBGOAL))
    path = tuple(compile_constraint(c, registry) for c in stage.of_kind(ConstraintKind.PATH))
    return CostSet(sub, path)


def evaluate_all(costs: Sequence[CostFunction], source: CloudSource) -> list[float]:
    return [c.evaluate(source) for c in costs]

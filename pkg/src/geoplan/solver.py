"""Gripper-pose optimization for stage sub-goals and path control points.

The decision variable is a 6-vector ``[dt, w]``: a translation offset from
the anchor position and a rotation vector applied on the left of the anchor
orientation, so ``R = exp(w) R0`` and ``t = t0 + dt``.  The objective is the
mean of the stage costs plus ``alpha * |t - t0|`` and ``beta * |euler(R R0^T)|_1``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import geometry as geo
from .constraints import ConstraintKind, Stage
from .costs import CostFunction, CostSet, compile_stage
from .errors import NoConvergence
from .geometry import RigidTransform
from .registry import _GRIPPER_PARTS, ComponentRegistry, as_key, gripper_direction_cloud, is_robot_key


@dataclass(frozen=True)
class SolverConfig:
    alpha: float = 0.02
    beta: float = 0.075
    max_iterations: int = 100
    ftol: float = 1e-9
    convergence_tol: float = 1e-2
    fd_step: float = 1e-4
    control_point_spacing: float = 0.05
    control_point_bounds: tuple[int, int] = (3, 20)
    rotation_step_deg: float = 15.0
    restarts: int = 4
    restart_translation: float = 0.05
    restart_rotation: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.convergence_tol <= 0 or self.fd_step <= 0 or self.control_point_spacing <= 0:
            raise ValueError("tolerances and steps must be positive")
        lo, hi = self.control_point_bounds
        if not 0 <= lo <= hi:
            raise ValueError("control point bounds must satisfy 0 <= lo <= hi")


class EventKind(str, enum.Enum):
    GRASP = "Grasp"
    RELEASE = "Release"


@dataclass
class Trajectory:
    waypoints: list[RigidTransform]
    events: list[tuple[int, EventKind]] = field(default_factory=list)
    stage_index: int | None = None
    grasp_target: str | None = None
    residuals: list[float] = field(default_factory=list)

    def __post_init__(self):
        for idx, _ in self.events:
            if not 0 <= idx < len(self.waypoints):
                raise ValueError(f"event index {idx} outside {len(self.waypoints)} waypoints")

    def __len__(self) -> int:
        return len(self.waypoints)


class PosedView:
    """Registry view with the gripper at ``pose``.

    Clouds attached to the gripper (grasped object parts and the synthetic
    gripper segments) are moved by ``pose * base^-1`` where ``base`` is the
    gripper pose the registry currently holds.  Everything else, and every
    ``-2`` lookup, reads straight through.
    """

    def __init__(self, registry: ComponentRegistry, pose: RigidTransform):
        self.registry = registry
        self.pose = pose
        self._rel = pose.compose(registry.gripper_pose.inverse())
        self._cache: dict = {}

    def get_point_cloud(self, ref, timestamp: int = -1) -> np.ndarray:
        if timestamp != -1:
            return self.registry.get_point_cloud(ref, timestamp)
        key = as_key(ref)
        if key in self._cache:
            return self._cache[key]
        if is_robot_key(key) and key[1] in _GRIPPER_PARTS:
            pc = gripper_direction_cloud(self.pose, _GRIPPER_PARTS[key[1]])
        elif key in self.registry.moving_keys:
            pc = self._rel.apply(self.registry.get_point_cloud(key))
        else:
            pc = self.registry.get_point_cloud(key)
        self._cache[key] = pc
        return pc


def _pose_of(x: np.ndarray, anchor: RigidTransform) -> RigidTransform:
    return RigidTransform(geo.exp_so3(x[3:]) @ anchor.rotation, anchor.translation + x[:3])


def cost_terms(costs, registry, pose: RigidTransform) -> list[float]:
    view = PosedView(registry, pose)
    return [c.evaluate(view) for c in costs]


def mean_cost(costs, registry, pose: RigidTransform) -> float:
    """The data term of the objective; also the residual compared against the tolerance."""
    terms = cost_terms(costs, registry, pose)
    return sum(terms) / len(terms) if terms else 0.0


def objective(costs, registry, pose: RigidTransform, anchor: RigidTransform, cfg: SolverConfig) -> float:
    mean = mean_cost(costs, registry, pose)
    reg_t = float(np.linalg.norm(pose.translation - anchor.translation))
    reg_r = sum(abs(a) for a in geo.euler_of(pose.rotation @ anchor.rotation.T))
    return mean + cfg.alpha * reg_t + cfg.beta * reg_r


def _central_diff(fun, x: np.ndarray, h: float) -> np.ndarray:
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    return g


def _optimize(costs, registry, anchor: RigidTransform, cfg: SolverConfig, free: np.ndarray,
              x_start: np.ndarray | None = None) -> tuple[RigidTransform, float, float]:
    """Minimize the objective; return ``(pose, objective, residual)`` of the best iterate."""
    costs = tuple(costs)
    base = np.zeros(6) if x_start is None else np.asarray(x_start, dtype=float)
    best = {"f": math.inf, "x": None}

    def full(z):
        x = np.zeros(6)
        x[free] = z
        return x

    def fun(z):
        x = full(z)
        f = objective(costs, registry, _pose_of(x, anchor), anchor, cfg)
        if f < best["f"]:
            best["f"], best["x"] = f, x.copy()
        return f

    def residual_of(x):
        return mean_cost(costs, registry, _pose_of(x, anchor))

    fun(np.zeros(int(free.sum())))
    if not costs:
        return anchor, best["f"], 0.0

    def run(z0):
        minimize(fun, z0, method="SLSQP", jac=lambda z: _central_diff(fun, z, cfg.fd_step),
                 options={"maxiter": cfg.max_iterations, "ftol": cfg.ftol})
        # the costs are non-smooth (abs, norms, penalties); a simplex pass recovers stalls
        if residual_of(best["x"]) > cfg.convergence_tol:
            minimize(fun, best["x"][free], method="Nelder-Mead",
                     options={"maxiter": 80 * free.sum(), "xatol": 1e-9, "fatol": 1e-12})

    run(base[free])
    rng = np.random.default_rng(cfg.seed)
    scale = np.array([cfg.restart_translation] * 3 + [cfg.restart_rotation] * 3)
    for _ in range(cfg.restarts):
        if residual_of(best["x"]) <= cfg.convergence_tol:
            break
        run(best["x"][free] + (rng.standard_normal(6) * scale)[free])
    x = best["x"]
    return _pose_of(x, anchor), best["f"], residual_of(x)


def solve_subgoal(costs: CostSet | list[CostFunction], registry: ComponentRegistry, pose0: RigidTransform,
                  cfg: SolverConfig = SolverConfig(), *, freeze_translation: bool = False) -> RigidTransform:
    """Gripper pose minimizing the regularized mean sub-goal cost near ``pose0``.

    An empty cost list returns ``pose0``.  Raises :class:`NoConvergence` when
    the mean sub-goal cost at the best iterate exceeds the tolerance.
    """
    subgoal = costs.subgoal if isinstance(costs, CostSet) else tuple(costs)
    if not subgoal:
        return pose0
    free = np.array([not freeze_translation] * 3 + [True] * 3)
    pose, _, residual = _optimize(subgoal, registry, pose0, cfg, free)
    if residual > cfg.convergence_tol:
        raise NoConvergence(f"sub-goal residual {residual:.4g} exceeds {cfg.convergence_tol}", pose, residual)
    return pose


def control_point_count(pose0: RigidTransform, goal: RigidTransform, cfg: SolverConfig) -> int:
    dist = float(np.linalg.norm(goal.translation - pose0.translation))
    angle = geo.rotation_angle(goal.rotation @ pose0.rotation.T)
    k = math.ceil(dist / cfg.control_point_spacing - 1e-9) + math.ceil(math.degrees(angle) / cfg.rotation_step_deg - 1e-9)
    lo, hi = cfg.control_point_bounds
    return int(min(hi, max(lo, k)))


def plan_path(pose0: RigidTransform, pose_goal: RigidTransform, costs: CostSet | list[CostFunction],
              registry: ComponentRegistry, cfg: SolverConfig = SolverConfig()) -> Trajectory:
    """Interpolate control points between the endpoints and refine each against path costs."""
    path = costs.path if isinstance(costs, CostSet) else tuple(costs)
    k = control_point_count(pose0, pose_goal, cfg)
    waypoints = [pose0]
    free = np.ones(6, dtype=bool)
    for i in range(1, k + 1):
        anchor = geo.interpolate_pose(pose0, pose_goal, i / (k + 1))
        if path:
            anchor, _, residual = _optimize(path, registry, anchor, cfg, free)
            if residual > cfg.convergence_tol:
                raise NoConvergence(f"control point {i} path residual {residual:.4g}", anchor, residual, i)
        waypoints.append(anchor)
    waypoints.append(pose_goal)
    return Trajectory(waypoints)


def apply_to_registry(traj: Trajectory, registry: ComponentRegistry) -> None:
    """Kinematic playback without joints: attached clouds follow the gripper."""
    events = dict(traj.events)
    for i, pose in enumerate(traj.waypoints):
        registry.apply_gripper_motion(pose)
        if events.get(i) is EventKind.GRASP:
            registry.set_grasp(traj.grasp_target)
        elif events.get(i) is EventKind.RELEASE:
            registry.clear_grasp()


def execute_stage(stage: Stage, registry: ComponentRegistry, scene=None,
                  cfg: SolverConfig = SolverConfig()) -> Trajectory:
    """Plan one stage visit and play it back on ``scene`` (or the bare registry)."""
    registry.record_stage_start(stage.index)
    costs = compile_stage(stage, registry)
    grasps = stage.of_kind(ConstraintKind.GRASP)
    releases = stage.of_kind(ConstraintKind.RELEASE)
    pose0 = registry.gripper_pose

    # an empty grasp only closes the fingers; nothing becomes attached
    grasps = [g for g in grasps if g.components]
    if grasps:
        ref = grasps[0].components[0]
        target = RigidTransform(pose0.rotation, registry.get_point_cloud(ref).mean(axis=0))
        goal = solve_subgoal(costs, registry, target, cfg, freeze_translation=True)
        traj = plan_path(pose0, goal, costs, registry, cfg)
        traj.events.append((len(traj) - 1, EventKind.GRASP))
        traj.grasp_target = ref.key[0]
    elif costs.subgoal or costs.path:
        goal = solve_subgoal(costs, registry, pose0, cfg)
        traj = plan_path(pose0, goal, costs, registry, cfg)
    else:
        traj = Trajectory([pose0])
    if releases:
        traj.events.append((len(traj) - 1, EventKind.RELEASE))
    traj.stage_index = stage.index
    traj.residuals = cost_terms(costs.subgoal, registry, traj.waypoints[-1])

    if scene is not None:
        scene.apply_trajectory(traj)
    else:
        apply_to_registry(traj, registry)
    return traj

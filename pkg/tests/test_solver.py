import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoplan import geometry as geo
from geoplan.constraints import ConstraintKind, RelationKind, Stage, parse_constraint, parse_plan
from geoplan.costs import CostFunction, CostSet, compile_constraint, compile_stage
from geoplan.errors import NoConvergence
from geoplan.geometry import RigidTransform
from geoplan.planner import fixture_text
from geoplan.registry import ComponentRegistry
from geoplan.scene import build_scene, scene_path
from geoplan.solver import (EventKind, PosedView, SolverConfig, Trajectory, control_point_count, cost_terms,
                            execute_stage, objective, plan_path, solve_subgoal)
from scenarios import (arc_radius_errors, cup_registry, door_rotation_solve, random_pose, reach_solve,
                       rotation_axis_angle, zero_cost)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(alpha=-1)
    with pytest.raises(ValueError):
        SolverConfig(convergence_tol=0)
    with pytest.raises(ValueError):
        SolverConfig(control_point_bounds=(5, 2))


def test_empty_costs_return_anchor():
    pose0 = RigidTransform.from_rpy([0.1, 0.2, 0.3], 0.1, 0.2, 0.3)
    assert solve_subgoal(CostSet(), cup_registry(pose0), pose0) is pose0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_zero_costs_anchor_at_initial_pose(seed):
    pose0 = random_pose(np.random.default_rng(seed))
    pose = solve_subgoal([zero_cost()], cup_registry(pose0), pose0)
    assert np.allclose(pose.translation, pose0.translation, atol=1e-6)
    assert geo.rotation_angle(pose.rotation @ pose0.rotation.T) <= 1e-6


def test_reach_converges_to_target():
    pose, _ = reach_solve([0.1, 0.2, 0.3], RigidTransform.from_rpy([0, 0, 0.5], math.pi))
    assert np.linalg.norm(pose.translation - [0.1, 0.2, 0.3]) <= 1e-3


def test_door_rotation_recovered():
    R, hinge, _ = door_rotation_solve()
    axis, angle = rotation_axis_angle(R)
    assert math.degrees(angle) == pytest.approx(60, abs=1)
    assert abs(axis @ hinge) >= 0.999


def test_unsatisfiable_costs_raise_with_best_pose():
    pose0 = RigidTransform.identity()
    reg = cup_registry(pose0)
    impossible = CostFunction(RelationKind.REACH, ((("cup", "body"), -1),), lambda pc: 1.0)
    with pytest.raises(NoConvergence) as err:
        solve_subgoal([impossible], reg, pose0, SolverConfig(restarts=1))
    assert err.value.residual == pytest.approx(1.0)
    assert err.value.pose is not None


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_objective_never_worse_than_anchor(seed):
    rng = np.random.default_rng(seed)
    pose0 = random_pose(rng)
    reg = ComponentRegistry(pose0)
    reg.add("ball", "body", rng.normal(scale=0.01, size=(20, 3)) + rng.uniform(-0.3, 0.3, 3))
    c = parse_constraint('<"sub-goal constraints", "the center of the gripper approach of the robot", "the center of '
                         'the body of the ball", "the center of the gripper approach of the robot is directly above '
                         'the center of the body of the ball by 10 cm">')
    costs = [compile_constraint(c, reg)]
    cfg = SolverConfig(restarts=0)
    try:
        pose = solve_subgoal(costs, reg, pose0, cfg)
    except NoConvergence as exc:
        pose = exc.pose
    assert objective(costs, reg, pose, pose0, cfg) <= objective(costs, reg, pose0, pose0, cfg) + 1e-12


def test_posed_view_matches_registry_motion():
    scene, reg = build_scene(scene_path("cut-carrot"))
    reg.set_grasp("kitchen knife")
    rng = np.random.default_rng(3)
    pose = RigidTransform(geo.exp_so3(rng.normal(size=3)), rng.normal(size=3))
    view = PosedView(reg, pose)
    predicted = {k: view.get_point_cloud(k).copy() for k in reg.moving_keys}
    carrot = view.get_point_cloud(("carrot", "body"))
    reg.apply_gripper_motion(pose)
    for k, pc in predicted.items():
        assert np.allclose(reg.get_point_cloud(k), pc, atol=1e-9)
    assert reg.get_point_cloud(("carrot", "body")) is carrot


def test_control_point_count_rules():
    a = RigidTransform.identity()
    cfg = SolverConfig()
    assert control_point_count(a, RigidTransform(np.eye(3), [0.04, 0, 0]), cfg) == 3
    assert control_point_count(a, RigidTransform(np.eye(3), [0.5, 0, 0]), cfg) == 10
    assert control_point_count(a, RigidTransform(geo.rot_z(math.radians(60)), [0.5, 0, 0]), cfg) == 14
    assert control_point_count(a, RigidTransform(np.eye(3), [5, 0, 0]), cfg) == 20


def test_plan_path_without_path_costs_is_interpolation():
    a = RigidTransform.identity()
    b = RigidTransform(geo.rot_z(0.4), [0.2, 0, 0])
    traj = plan_path(a, b, CostSet(), cup_registry(a))
    k = len(traj) - 2
    assert traj.waypoints[0] is a and traj.waypoints[-1] is b
    for i, pose in enumerate(traj.waypoints[1:-1], start=1):
        assert pose.allclose(geo.interpolate_pose(a, b, i / (k + 1)))


def test_door_path_bends_onto_arc():
    errors, traj, degrees = arc_radius_errors()
    assert len(errors) >= 3
    assert max(errors) <= 1e-2
    assert degrees == pytest.approx(60, abs=1)


def test_trajectory_rejects_bad_event_index():
    with pytest.raises(ValueError):
        Trajectory([RigidTransform.identity()], [(3, EventKind.GRASP)])


def test_release_only_stage():
    scene, reg = build_scene(scene_path("pick-place"))
    reg.set_grasp("red block")
    stage = Stage(1, "let go", (parse_constraint('<"release">'),))
    traj = execute_stage(stage, reg, scene)
    assert len(traj) == 1 and traj.events == [(0, EventKind.RELEASE)]
    assert reg.attachment.grasped_object is None


def test_grasp_stage_aligns_approach_with_table_normal():
    scene, reg = build_scene(scene_path("pick-place"))
    plan = parse_plan(fixture_text("pick-place"))
    traj = execute_stage(plan.stage(1), reg, scene)
    assert traj.events[-1] == (len(traj) - 1, EventKind.GRASP)
    assert reg.attachment.grasped_object == "red block"
    approach = reg.gripper_pose.rotation[:, 2]
    table_normal = geo.surface_normal(reg.get_point_cloud(("table", "surface")))
    assert math.degrees(math.acos(min(1.0, abs(approach @ table_normal)))) <= 1.0


def test_hang_above_stage_satisfies_all_costs():
    scene, reg = build_scene(scene_path("cut-carrot"))
    plan = parse_plan(fixture_text("cut-carrot"))
    execute_stage(plan.stage(1), reg, scene)
    traj = execute_stage(plan.stage(2), reg, scene)
    assert len(plan.stage(2).of_kind(ConstraintKind.SUBGOAL)) == 3
    assert max(traj.residuals) <= 1e-2
    costs = compile_stage(plan.stage(2), reg)
    assert max(cost_terms(costs.subgoal, reg, reg.gripper_pose)) <= 1e-2


def test_solver_is_deterministic():
    def run():
        scene, reg = build_scene(scene_path("open-drawer"), np.random.default_rng(4))
        plan = parse_plan(fixture_text("open-drawer"))
        return [execute_stage(s, reg, scene) for s in plan.stages]

    a, b = run(), run()
    for ta, tb in zip(a, b):
        assert len(ta) == len(tb)
        assert all(pa == pb for pa, pb in zip(ta.waypoints, tb.waypoints))

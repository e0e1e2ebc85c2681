"""Constraint-based manipulation planning over geometric components of point clouds."""

from .constraints import (Constraint, ConstraintKind, GeometricComponentRef, Stage, TaskPlan, parse_plan,
                          parse_ref, serialize_plan)
from .costs import CostFunction, CostSet, compile_constraint, compile_stage
from .errors import GeoPlanError
from .flow import EpisodeResult, FlowState, PredicateOracle, ScriptedOracle, next_stage, run_episode
from .geometry import RigidTransform, centroid, major_axis, rodrigues, surface_normal
from .planner import FixtureBackend, HTTPBackend, PromptBundle, generate_plan, scene_summary
from .registry import ComponentRegistry
from .scene import Scene, build_scene, scene_path, shipped_scenes
from .segmentation import find_edges, parse_component, render
from .solver import SolverConfig, Trajectory, execute_stage, plan_path, solve_subgoal

__version__ = "0.1.0"

__all__ = [
    "ComponentRegistry", "Constraint", "ConstraintKind", "CostFunction", "CostSet", "EpisodeResult",
    "FixtureBackend", "FlowState", "GeoPlanError", "GeometricComponentRef", "HTTPBackend", "PredicateOracle",
    "PromptBundle", "RigidTransform", "Scene", "ScriptedOracle", "SolverConfig", "Stage", "TaskPlan",
    "Trajectory", "build_scene", "centroid", "compile_constraint", "compile_stage", "execute_stage",
    "find_edges", "generate_plan", "major_axis", "next_stage", "parse_component", "parse_plan", "parse_ref",
    "plan_path", "render", "rodrigues", "run_episode", "scene_path", "scene_summary", "serialize_plan",
    "shipped_scenes", "solve_subgoal", "surface_normal",
]

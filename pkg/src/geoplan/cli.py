"""Command-line entry point: run episodes and export trajectories, cost traces and plot tables.

Exit codes: 0 ok, 1 other library error, 2 parse/spec/missing input,
3 solver failure, 4 planner backend failure, 5 step budget exhausted.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constraints import ConstraintKind, TaskPlan, parse_plan
from .costs import compile_stage
from .errors import (BackendUnavailable, GeoPlanError, NoConvergence, OracleFailure, ParseError, SpecError,
                     UnknownTask, UnparseablePlan, ValidationError)
from .flow import EpisodeResult, PredicateOracle, ScriptedOracle, run_episode, write_episode_log
from .geometry import RigidTransform
from .planner import FixtureBackend, HTTPBackend, PromptBundle, generate_plan, scene_summary
from .scene import apply_jitter, build_scene, load_spec, sample_jitter, scene_path
from .solver import EventKind, SolverConfig, Trajectory

EXIT_OK, EXIT_ERROR, EXIT_PARSE, EXIT_SOLVER, EXIT_BACKEND, EXIT_BUDGET = 0, 1, 2, 3, 4, 5

TRAJECTORY_FILE = "trajectory.jsonl"
EPISODE_LOG_FILE = "episode_log.jsonl"
CENTROID_FILE = "centroids.jsonl"
REPORT_FILE = "report.json"
RECORDS_FILE = "records.jsonl"
TRACE_FILE = "cost_trace.jsonl"

WAYPOINT_COLUMNS = ["index", "stage", "x", "y", "z"]
STAGE_COST_COLUMNS = ["step", "stage", "name", "mean_cost", "max_cost", "seconds"]
CENTROID_COLUMNS = ["index", "object", "x", "y", "z"]

_PLANNER_KEYS = {"endpoint", "model", "timeout", "prompt_dir"}


class BudgetExhausted(GeoPlanError):
    pass


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, BudgetExhausted):
        return EXIT_BUDGET
    if isinstance(exc, BackendUnavailable):
        return EXIT_BACKEND
    if isinstance(exc, NoConvergence):
        return EXIT_SOLVER
    if isinstance(exc, (ParseError, SpecError, ValidationError, UnparseablePlan, UnknownTask,
                        FileNotFoundError, json.JSONDecodeError)):
        return EXIT_PARSE
    return EXIT_ERROR


@dataclass
class RunReport:
    task: str
    success: bool | None
    residuals: list[list[float]]
    solve_seconds: list[float]
    trajectory_path: str
    episode_log_path: str
    centroid_path: str = ""
    visited: list[int] = field(default_factory=list)
    timed_out: bool = False

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def load(cls, path) -> "RunReport":
        return cls(**json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- config


def read_config(path) -> tuple[SolverConfig, dict]:
    """Parse a ``key = value`` file; solver fields go to :class:`SolverConfig`, the rest are planner options."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string("[geoplan]\n" + text)
    except configparser.Error as exc:
        raise SpecError(f"config {path}: {exc}") from exc
    return config_from_mapping(dict(parser["geoplan"]))


def config_from_mapping(values: dict) -> tuple[SolverConfig, dict]:
    fields = {f.name: f for f in dataclasses.fields(SolverConfig)}
    defaults = SolverConfig()
    solver, planner = {}, {}
    for key, raw in values.items():
        if key in _PLANNER_KEYS:
            planner[key] = raw
            continue
        if key not in fields:
            raise SpecError(f"unknown config key {key!r}")
        current = getattr(defaults, key)
        try:
            if isinstance(current, tuple):
                solver[key] = tuple(int(v) for v in str(raw).replace(",", " ").split())
            else:
                solver[key] = type(current)(raw)
        except ValueError as exc:
            raise SpecError(f"config key {key!r}: {exc}") from exc
    try:
        return dataclasses.replace(defaults, **solver), planner
    except ValueError as exc:
        raise SpecError(str(exc)) from exc


# ---------------------------------------------------------------- inputs


def resolve_scene(scene: str) -> Path:
    path = Path(scene)
    if path.exists():
        return path
    try:
        return scene_path(scene)
    except (SpecError, UnknownTask, FileNotFoundError):
        raise FileNotFoundError(f"scene {scene!r} is neither a file nor a shipped scene") from None


def _scene_name(scene: str) -> str:
    return Path(scene).stem if scene.endswith(".json") else scene


def load_plan(args, registry, scene) -> TaskPlan:
    if args.plan:
        path = Path(args.plan)
        if not path.exists():
            raise FileNotFoundError(f"plan file {path} not found")
        return parse_plan(path.read_text()).validate()
    task = getattr(args, "task", None) or scene.name
    planner = getattr(args, "planner_options", {})
    endpoint = args.backend or (None if args.fixture else planner.get("endpoint"))
    if endpoint:
        backend = HTTPBackend(endpoint, model=planner.get("model", "default"),
                              timeout=float(planner.get("timeout", 60.0)))
        bundle = PromptBundle.load(planner.get("prompt_dir"))
        return generate_plan(backend, task, scene_summary(registry, scene), bundle)
    return generate_plan(FixtureBackend(args.fixture or scene.name), task, scene_summary(registry, scene))


def make_oracle(answers: str | None, scene):
    if answers:
        return ScriptedOracle(a for a in answers.split(",") if a.strip())
    return PredicateOracle(lambda question, observation: scene.check_success())


# ---------------------------------------------------------------- serialization


def trajectory_records(trajectories: list[Trajectory]) -> list[dict]:
    """One record per waypoint: index, stage, translation, row-major rotation, event flag."""
    rows, t = [], 0
    for traj in trajectories:
        events = dict(traj.events)
        for i, pose in enumerate(traj.waypoints):
            event = events.get(i)
            rows.append({
                "t": t,
                "stage": traj.stage_index,
                "translation": [float(v) for v in pose.translation],
                "rotation": [float(v) for v in pose.rotation.reshape(-1)],
                "event": event.value if event is not None else None,
                "target": traj.grasp_target if event is EventKind.GRASP else None,
            })
            t += 1
    return rows


def pose_of_record(row: dict) -> RigidTransform:
    return RigidTransform(np.asarray(row["rotation"], dtype=float).reshape(3, 3),
                          np.asarray(row["translation"], dtype=float))


def write_jsonl(rows, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    return path


def read_jsonl(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


# ---------------------------------------------------------------- commands


def _episode(scene_file: Path, plan_args, cfg: SolverConfig, step_budget: int, answers, jitter=None,
             task=None):
    spec = load_spec(scene_file)
    if jitter:
        spec = apply_jitter(spec, jitter)
    scene, registry = build_scene(spec)
    plan = load_plan(plan_args, registry, scene)
    result = run_episode(plan, registry, scene, cfg, make_oracle(answers, scene), step_budget, task)
    return scene, plan, result


def cmd_run(args) -> RunReport:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene_file = resolve_scene(args.scene)
    jitter = None
    if args.randomize:
        jitter = sample_jitter(load_spec(scene_file), np.random.default_rng(args.seed))
    scene, plan, result = _episode(scene_file, args, args.solver_config, args.step_budget, args.answers, jitter,
                                   args.task)
    traj_path = write_jsonl(trajectory_records(result.trajectories), out / TRAJECTORY_FILE)
    log_path = write_episode_log(result, out / EPISODE_LOG_FILE)
    centroid_path = write_jsonl(({k: [float(v) for v in xyz] for k, xyz in snap.items()} for snap in scene.history),
                                out / CENTROID_FILE)
    report = RunReport(
        task=args.task or scene.name,
        success=result.success,
        residuals=result.residuals,
        solve_seconds=[r["seconds"] for r in result.log if "seconds" in r],
        trajectory_path=str(traj_path),
        episode_log_path=str(log_path),
        centroid_path=str(centroid_path),
        visited=result.visited,
        timed_out=result.timed_out,
    )
    (out / REPORT_FILE).write_text(json.dumps(report.to_json(), indent=2))
    if result.timed_out:
        raise BudgetExhausted(f"step budget {args.step_budget} exhausted after stages {result.visited}")
    return report


def _dataset_episode(job: tuple) -> dict:
    index, scene_file, plan_args, cfg, step_budget, answers, seed = job
    spec = load_spec(scene_file)
    jitter = sample_jitter(spec, np.random.default_rng([seed, index]))
    record = {"episode": index, "scene": str(scene_file), "jitter": jitter, "success": False, "error": None,
              "initial": {}, "waypoints": [], "events": []}
    try:
        scene, registry = build_scene(apply_jitter(spec, jitter))
        record["initial"] = {o: [float(v) for v in scene.object_centroid(o)] for o in scene.objects}
        if not scene.within_workspace():
            record["error"] = "initial pose outside workspace"
            return record
        plan = load_plan(plan_args, registry, scene)
        result = run_episode(plan, registry, scene, cfg, make_oracle(answers, scene), step_budget)
    except (NoConvergence, OracleFailure) as exc:
        record["error"] = f"{type(exc).__name__}: {exc}"
        return record
    rows = trajectory_records(result.trajectories)
    record["waypoints"] = [{k: r[k] for k in ("t", "stage", "translation", "rotation")} for r in rows]
    record["events"] = [{"t": r["t"], "kind": r["event"], "target": r["target"]} for r in rows if r["event"]]
    record["residuals"] = result.residuals
    record["timed_out"] = result.timed_out
    record["success"] = bool(result.success) and not result.timed_out
    if result.timed_out:
        record["error"] = "step budget exhausted"
    return record


def cmd_export_dataset(args) -> Path:
    """Write ``records.jsonl`` (one randomized episode per line, failures included) and a summary."""
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene_file = resolve_scene(args.scene)
    load_spec(scene_file)
    plan_args = argparse.Namespace(plan=args.plan, fixture=args.fixture or _scene_name(args.scene),
                                   backend=args.backend, task=args.task,
                                   planner_options=getattr(args, "planner_options", {}))
    jobs = [(i, scene_file, plan_args, args.solver_config, args.step_budget, args.answers, args.seed)
            for i in range(args.count)]
    path = out / RECORDS_FILE
    successes = 0
    with path.open("w") as fh:
        if args.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                records = pool.map(_dataset_episode, jobs)
                for rec in records:
                    fh.write(json.dumps(rec) + "\n")
                    successes += rec["success"]
        else:
            for job in jobs:
                rec = _dataset_episode(job)
                fh.write(json.dumps(rec) + "\n")
                successes += rec["success"]
    summary = {"scene": str(scene_file), "count": args.count, "successes": successes, "seed": args.seed}
    (out / "dataset.json").write_text(json.dumps(summary, indent=2))
    return path


def replay_record(record: dict):
    """Rebuild the record's jittered scene and play its waypoints and events back."""
    scene, registry = build_scene(apply_jitter(load_spec(record["scene"]), record["jitter"]))
    events = {e["t"]: e for e in record["events"]}
    for row in record["waypoints"]:
        e = events.get(row["t"])
        traj = Trajectory([pose_of_record(row)])
        if e is not None:
            traj.events.append((0, EventKind(e["kind"])))
            traj.grasp_target = e["target"]
        scene.apply_trajectory(traj)
    return scene, registry


def final_subgoal_stage(plan: TaskPlan):
    stages = [s for s in plan.stages if s.of_kind(ConstraintKind.SUBGOAL)]
    return stages[-1] if stages else None


def trace_costs(trajectories: list[Trajectory], plan: TaskPlan, scene, registry) -> list[dict]:
    """Replay ``trajectories`` on a fresh scene and evaluate every stage cost at every waypoint."""
    rows, t = [], 0
    for visit, traj in enumerate(trajectories):
        stage = plan.stage(traj.stage_index)
        registry.record_stage_start(stage.index)
        costs = compile_stage(stage, registry)
        events = dict(traj.events)
        for i, pose in enumerate(traj.waypoints):
            step = Trajectory([pose], grasp_target=traj.grasp_target)
            if i in events:
                step.events.append((0, events[i]))
            scene.apply_trajectory(step)
            sub = {c.name: float(c.evaluate(registry)) for c in costs.subgoal}
            path = {c.name: float(c.evaluate(registry)) for c in costs.path}
            total = sum(sub.values())
            rows.append({"t": t, "visit": visit, "stage": stage.index, "waypoint": i, "subgoal": sub, "path": path,
                         "subgoal_total": total, "reward": -total})
            t += 1
    return rows


def cmd_trace_costs(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene_file = resolve_scene(args.scene)
    _, plan, result = _episode(scene_file, args, args.solver_config, args.step_budget, args.answers, task=args.task)
    scene, registry = build_scene(load_spec(scene_file))
    rows = trace_costs(result.trajectories, plan, scene, registry)
    path = write_jsonl(rows, out / TRACE_FILE)
    if result.timed_out:
        raise BudgetExhausted(f"step budget {args.step_budget} exhausted")
    return path


def _write_csv(path: Path, columns: list[str], rows) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)
    return path


def cmd_plot_data(args) -> list[Path]:
    """Turn a run report into ``waypoints.csv``, ``stage_costs.csv`` and ``centroids.csv``."""
    report = RunReport.load(args.report)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traj = read_jsonl(report.trajectory_path) if Path(report.trajectory_path).exists() else []
    log = read_jsonl(report.episode_log_path) if Path(report.episode_log_path).exists() else []
    cents = read_jsonl(report.centroid_path) if report.centroid_path and Path(report.centroid_path).exists() else []
    wp = [[r["t"], r["stage"], *r["translation"]] for r in traj]
    costs = [[r["step"], r["stage"], r["name"],
              float(np.mean(r["residuals"])) if r["residuals"] else 0.0,
              max(r["residuals"], default=0.0), r.get("seconds", "")]
             for r in log if "step" in r]
    cent = [[i, name, *xyz] for i, snap in enumerate(cents) for name, xyz in sorted(snap.items())]
    return [_write_csv(out / "waypoints.csv", WAYPOINT_COLUMNS, wp),
            _write_csv(out / "stage_costs.csv", STAGE_COST_COLUMNS, costs),
            _write_csv(out / "centroids.csv", CENTROID_COLUMNS, cent)]


# ---------------------------------------------------------------- argparse


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scene", required=True, help="scene JSON file or shipped scene name")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--plan", help="plan file")
    src.add_argument("--fixture", help="shipped plan fixture name (defaults to the scene name)")
    src.add_argument("--backend", help="chat-completion endpoint URL")
    p.add_argument("--task", help="task description sent to the planner and used for the success check")
    p.add_argument("--config", help="key=value file overriding solver settings")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step-budget", type=int, default=100)
    p.add_argument("--out-dir", default="geoplan-out")
    p.add_argument("--answers", help="comma-separated yes/no answers for condition stages")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geoplan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute one episode")
    _add_common(run)
    run.add_argument("--randomize", action="store_true", help="jitter the scene's listed objects using --seed")
    export = sub.add_parser("export-dataset", help="randomized episodes as imitation records")
    _add_common(export)
    export.add_argument("--count", type=int, default=10)
    export.add_argument("--workers", type=int, default=1)
    trace = sub.add_parser("trace-costs", help="per-waypoint cost time series")
    _add_common(trace)
    plot = sub.add_parser("plot-data", help="CSV tables from a run report")
    plot.add_argument("--report", required=True)
    plot.add_argument("--out-dir", default="geoplan-plot")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if hasattr(args, "scene"):
            cfg, planner = read_config(args.config) if args.config else (SolverConfig(), {})
            args.solver_config = dataclasses.replace(cfg, seed=args.seed) if args.seed is not None else cfg
            args.planner_options = planner
        if args.command == "run":
            started = time.perf_counter()
            report = cmd_run(args)
            print(f"{report.task}: success={report.success} stages={report.visited} "
                  f"time={time.perf_counter() - started:.2f}s -> {args.out_dir}")
        elif args.command == "export-dataset":
            path = cmd_export_dataset(args)
            print(f"wrote {path}")
        elif args.command == "trace-costs":
            print(f"wrote {cmd_trace_costs(args)}")
        else:
            for path in cmd_plot_data(args):
                print(f"wrote {path}")
    except (GeoPlanError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"geoplan: error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

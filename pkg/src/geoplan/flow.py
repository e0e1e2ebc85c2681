"""Stage sequencing: default advance, repeat counters and oracle branches."""

from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Protocol

from .constraints import Stage, TaskPlan
from .errors import OracleFailure
from .registry import ComponentRegistry
from .solver import SolverConfig, Trajectory, execute_stage

TERMINATE = -1


class Answer(str, enum.Enum):
    YES = "Yes"
    NO = "No"


class ConditionOracle(Protocol):
    def query(self, question: str, observation: Any = None) -> Answer: ...


def _as_answer(value) -> Answer:
    if isinstance(value, Answer):
        return value
    if isinstance(value, bool):
        return Answer.YES if value else Answer.NO
    text = str(value).strip().lower()
    if text in ("yes", "y", "true"):
        return Answer.YES
    if text in ("no", "n", "false"):
        return Answer.NO
    raise OracleFailure(f"oracle answer {value!r} is neither yes nor no")


class ScriptedOracle:
    """Replays a fixed answer sequence; running out is an :class:`OracleFailure`."""

    def __init__(self, answers: Iterable):
        self.answers = [_as_answer(a) for a in answers]
        self.questions: list[str] = []

    def query(self, question: str, observation: Any = None) -> Answer:
        if len(self.questions) >= len(self.answers):
            raise OracleFailure(f"scripted oracle exhausted after {len(self.answers)} answers")
        self.questions.append(question)
        return self.answers[len(self.questions) - 1]


class PredicateOracle:
    """Answers by evaluating ``predicate(question, observation)``."""

    def __init__(self, predicate: Callable[[str, Any], bool]):
        self.predicate = predicate

    def query(self, question: str, observation: Any = None) -> Answer:
        try:
            return _as_answer(bool(self.predicate(question, observation)))
        except OracleFailure:
            raise
        except Exception as exc:
            raise OracleFailure(f"predicate failed on {question!r}: {exc}") from exc


@dataclass
class FlowState:
    current_stage: int = 1
    counters: dict[int, int] = field(default_factory=dict)
    episode_log: list[dict] = field(default_factory=list)


def next_stage(state: FlowState, stage: Stage, oracle: ConditionOracle | None, n_stages: int,
               observation: Any = None) -> int:
    """Index of the stage to run after ``stage``, or :data:`TERMINATE`.

    A repeat-N stage runs N visits in total: the counter increments per
    visit, the stage repeats while the counter is below N, then the counter
    resets and the plan advances.
    """
    i = stage.index
    flow = stage.flow
    if flow is None:
        target = i + 1
    elif flow.repeat is not None:
        count = state.counters.get(i, 0) + 1
        if count < flow.repeat:
            state.counters[i] = count
            target = i
        else:
            state.counters[i] = 0
            target = i + 1
    else:
        if oracle is None:
            raise OracleFailure(f"stage {i} needs an oracle for {flow.condition!r}")
        answer = _as_answer(oracle.query(flow.condition, observation))
        if answer is Answer.YES:
            target = flow.on_yes if flow.on_yes is not None else i + 1
        else:
            target = flow.on_no if flow.on_no is not None else i
    return target if 1 <= target <= n_stages else TERMINATE


@dataclass
class EpisodeResult:
    trajectories: list[Trajectory]
    residuals: list[list[float]]
    success: bool | None
    timed_out: bool
    log: list[dict]
    visited: list[int]

    @property
    def waypoint_count(self) -> int:
        return sum(len(t) for t in self.trajectories)


def run_episode(plan: TaskPlan, registry: ComponentRegistry, scene=None, cfg: SolverConfig = SolverConfig(),
                oracle: ConditionOracle | None = None, step_budget: int = 100, task: str | None = None) -> EpisodeResult:
    """Execute stages from stage 1 until termination or ``step_budget`` visits.

    Solver errors propagate.  Running out of budget is reported through
    ``timed_out`` rather than raised.
    """
    plan.validate()
    state = FlowState()
    trajectories: list[Trajectory] = []
    residuals: list[list[float]] = []
    visited: list[int] = []
    n = len(plan.stages)
    current = 1
    while current != TERMINATE and len(visited) < step_budget:
        stage = plan.stage(current)
        state.current_stage = current
        started = time.perf_counter()
        traj = execute_stage(stage, registry, scene, cfg)
        elapsed = time.perf_counter() - started
        trajectories.append(traj)
        residuals.append(list(traj.residuals))
        visited.append(current)
        nxt = next_stage(state, stage, oracle, n, observation=scene)
        state.episode_log.append({
            "step": len(visited),
            "stage": current,
            "name": stage.name,
            "residuals": list(traj.residuals),
            "waypoints": len(traj),
            "seconds": round(elapsed, 6),
            "counter": state.counters.get(current, 0),
            "transition": "terminate" if nxt == TERMINATE else nxt,
        })
        current = nxt
    timed_out = current != TERMINATE
    for s in plan.stages:
        if s.index not in visited:
            state.episode_log.append({"stage": s.index, "name": s.name, "transition": "never visited"})
    success = None
    if scene is not None and not timed_out:
        key = task or scene.name
        success = scene.check_success(key) if key in scene.success else None
    return EpisodeResult(trajectories, residuals, success, timed_out, state.episode_log, visited)


def write_episode_log(result: EpisodeResult, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        for record in result.log:
            fh.write(json.dumps(record) + "\n")
    return path

"""Plan generation backends, prompt bundle loading and scene summaries."""

from __future__ import annotations

import hashlib
import json
import os
import socket
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .constraints import TaskPlan, parse_plan
from .errors import BackendUnavailable, GeoPlanError, UnknownTask, UnparseablePlan, ValidationError

PROMPT_FILES = ("scheme", "examples", "knowledge")
DEFAULT_CREDENTIAL_ENV = "GEOPLAN_API_KEY"


def data_dir() -> Path:
    return Path(__file__).resolve().parent / "data"


@dataclass(frozen=True)
class PromptBundle:
    scheme: str
    examples: str
    knowledge: str
    checksums: dict

    @classmethod
    def load(cls, directory=None) -> "PromptBundle":
        """Read the three prompt files and verify them against ``manifest.json``."""
        directory = Path(directory) if directory is not None else data_dir() / "prompts"
        manifest = json.loads((directory / "manifest.json").read_text())
        texts, sums = {}, {}
        for name in PROMPT_FILES:
            fname = f"{name}.txt"
            raw = (directory / fname).read_bytes()
            digest = hashlib.sha256(raw).hexdigest()
            if manifest["files"].get(fname) != digest:
                raise ValidationError(f"prompt file {fname} does not match its checksum")
            text = raw.decode()
            if not text.strip():
                raise ValidationError(f"prompt file {fname} is empty")
            texts[name], sums[fname] = text, digest
        return cls(checksums=sums, **texts)

    def system_text(self) -> str:
        return "\n\n".join([self.scheme, self.knowledge, self.examples])


class PlannerBackend(Protocol):
    def generate(self, task: str, scene_summary: str, bundle: PromptBundle | None,
                 feedback: str | None = None) -> str: ...


def fixture_names() -> list[str]:
    return sorted(p.stem for p in (data_dir() / "plans").glob("*.plan"))


def fixture_text(name: str) -> str:
    path = data_dir() / "plans" / f"{name}.plan"
    if not path.exists():
        raise UnknownTask(name)
    return path.read_text()


class FixtureBackend:
    """Offline backend returning a shipped plan file regardless of the prompt."""

    def __init__(self, name: str):
        self.text = fixture_text(name)
        self.name = name

    def generate(self, task, scene_summary, bundle=None, feedback=None) -> str:
        return self.text


class ScriptedBackend:
    """Returns canned responses in order; useful for exercising the retry path."""

    def __init__(self, responses: Sequence[str]):
        self.responses = list(responses)
        self.requests: list[tuple[str, str | None]] = []

    def generate(self, task, scene_summary, bundle=None, feedback=None) -> str:
        if len(self.requests) >= len(self.responses):
            raise BackendUnavailable("scripted backend has no more responses")
        self.requests.append((task, feedback))
        return self.responses[len(self.requests) - 1]


class HTTPBackend:
    """Chat-completion style endpoint: POST ``{model, messages, temperature}``.

    The credential is read from the environment variable named by
    ``credential_env`` and sent as a bearer token when present.
    """

    def __init__(self, endpoint: str, model: str = "default", timeout: float = 60.0,
                 credential_env: str = DEFAULT_CREDENTIAL_ENV):
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self.credential_env = credential_env

    def build_request(self, task, scene_summary, bundle, feedback=None) -> dict:
        user = f"Task: {task}\n\nScene:\n{scene_summary}"
        if feedback:
            user += f"\n\nYour previous answer could not be parsed: {feedback}\nReply with the plan only."
        messages = []
        if bundle is not None:
            messages.append({"role": "system", "content": bundle.system_text()})
        messages.append({"role": "user", "content": user})
        return {"model": self.model, "messages": messages, "temperature": 0}

    def generate(self, task, scene_summary, bundle=None, feedback=None) -> str:
        body = json.dumps(self.build_request(task, scene_summary, bundle, feedback)).encode()
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.credential_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        req = urllib.request.Request(self.endpoint, data=body, headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode())
        except (urllib.error.URLError, socket.timeout, ConnectionError, ValueError) as exc:
            raise BackendUnavailable(f"planner endpoint {self.endpoint} failed: {exc}") from exc
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise BackendUnavailable("planner endpoint returned an unexpected response shape") from None


def _parse_checked(text: str) -> TaskPlan:
    return parse_plan(text).validate()


def generate_plan(backend: PlannerBackend, task: str, scene_summary: str,
                  bundle: PromptBundle | None = None) -> TaskPlan:
    """Ask the backend for a plan; retry once with the parse error attached."""
    text = backend.generate(task, scene_summary, bundle, None)
    try:
        return _parse_checked(text)
    except (GeoPlanError, ValueError) as first:
        retry = backend.generate(task, scene_summary, bundle, str(first))
        try:
            return _parse_checked(retry)
        except (GeoPlanError, ValueError) as second:
            raise UnparseablePlan(f"plan rejected twice: {second}", retry) from second


def scene_summary(registry, scene=None) -> str:
    """Deterministic listing of objects, their parts and centroids (cm)."""
    objects = registry.objects()
    if not objects:
        return "no objects"
    lines = []
    for obj in objects:
        keys = sorted(registry.parts_of(obj))
        center = np.vstack([registry.get_point_cloud(k) for k in keys]).mean(axis=0)
        coords = ", ".join(f"{round(100 * c):d}" for c in center)
        parts = ", ".join(k[1] for k in keys)
        lines.append(f"- {obj}: parts ({parts}); center ({coords}) cm")
    t = registry.gripper_pose.translation
    lines.append("- gripper at (" + ", ".join(f"{round(100 * c):d}" for c in t) + ") cm")
    return "\n".join(lines)

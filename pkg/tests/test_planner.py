import json
import shutil
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from geoplan.constraints import parse_plan, serialize_plan
from geoplan.errors import BackendUnavailable, UnknownTask, UnparseablePlan, ValidationError
from geoplan.geometry import RigidTransform
from geoplan.planner import (FixtureBackend, HTTPBackend, PromptBundle, ScriptedBackend, data_dir, fixture_names,
                             fixture_text, generate_plan, scene_summary)
from geoplan.registry import ComponentRegistry
from geoplan.scene import build_scene, scene_path

PROSE = "Sure! First pick up the knife, then cut the carrot."


def test_prompt_bundle_loads_and_checks(tmp_path):
    bundle = PromptBundle.load()
    assert all(text.strip() for text in (bundle.scheme, bundle.examples, bundle.knowledge))
    assert set(bundle.checksums) == {"scheme.txt", "examples.txt", "knowledge.txt"}
    copy = tmp_path / "prompts"
    shutil.copytree(data_dir() / "prompts", copy)
    (copy / "knowledge.txt").write_text("tampered")
    with pytest.raises(ValidationError):
        PromptBundle.load(copy)


def test_fixture_backend_returns_plan_verbatim():
    plan = generate_plan(FixtureBackend("cut-carrot"), "cut the carrot", "")
    assert plan == parse_plan(fixture_text("cut-carrot"))
    assert FixtureBackend("cut-carrot").generate("x", "y") == fixture_text("cut-carrot")
    with pytest.raises(UnknownTask):
        FixtureBackend("juggle")


def test_every_fixture_validates():
    for name in fixture_names():
        plan = parse_plan(fixture_text(name)).validate()
        assert parse_plan(serialize_plan(plan)) == plan


def test_retry_once_with_feedback():
    backend = ScriptedBackend([PROSE, fixture_text("press-button")])
    plan = generate_plan(backend, "press the button", "")
    assert len(plan.stages) >= 1
    assert backend.requests[0][1] is None
    assert backend.requests[1][1]


def test_two_failures_raise_with_raw_text():
    backend = ScriptedBackend([PROSE, PROSE + " again"])
    with pytest.raises(UnparseablePlan) as err:
        generate_plan(backend, "cut", "")
    assert err.value.raw_text == PROSE + " again"


def test_invalid_flow_target_counts_as_failure():
    bad = fixture_text("pour-loop").replace("go to stage 4 if satisfied", "go to stage 9 if satisfied")
    with pytest.raises(UnparseablePlan):
        generate_plan(ScriptedBackend([bad, bad]), "pour", "")


def test_unreachable_endpoint():
    backend = HTTPBackend("http://127.0.0.1:9/v1/chat", timeout=2.0)
    with pytest.raises(BackendUnavailable):
        generate_plan(backend, "cut", "")


def test_build_request_shape():
    bundle = PromptBundle.load()
    req = HTTPBackend("http://x", model="m").build_request("cut", "- carrot", bundle, feedback="bad tuple")
    assert req["model"] == "m" and req["temperature"] == 0
    assert [m["role"] for m in req["messages"]] == ["system", "user"]
    assert bundle.scheme in req["messages"][0]["content"]
    assert "bad tuple" in req["messages"][1]["content"]


class _Handler(BaseHTTPRequestHandler):
    seen: list = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        _Handler.seen.append((body, self.headers.get("Authorization")))
        out = json.dumps({"choices": [{"message": {"content": fixture_text("press-button")}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(out)

    def log_message(self, *args):
        pass


def test_http_backend_round_trip(monkeypatch):
    server = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        monkeypatch.setenv("GEOPLAN_API_KEY", "secret")
        backend = HTTPBackend(f"http://127.0.0.1:{server.server_port}/", model="m", timeout=5)
        plan = generate_plan(backend, "press the button", "- button", PromptBundle.load())
    finally:
        server.shutdown()
    assert plan == parse_plan(fixture_text("press-button"))
    body, auth = _Handler.seen[-1]
    assert auth == "Bearer secret"
    assert body["model"] == "m"


def test_scene_summary():
    assert scene_summary(ComponentRegistry(RigidTransform.identity())) == "no objects"
    scene, reg = build_scene(scene_path("cut-carrot"))
    text = scene_summary(reg, scene)
    assert "- kitchen knife: parts (blade, handle)" in text
    assert "- carrot: parts (body)" in text
    assert "- table: parts (surface)" in text
    _, reg2 = build_scene(scene_path("cut-carrot"))
    assert scene_summary(reg2) == text

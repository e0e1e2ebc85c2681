"""Constraint tuples, stages and task plans, plus the plan text format.

Plan file grammar (UTF-8, one item per line, ``#`` starts a comment line)::

    task: "put red block on top of the blue block"
    - "grasp red block" (stage 1)
      - <"grasp", "the body of the red block">
      - <"sub-goal constraints", "<ref>", "<ref>", "<relation text>">
    - "release" (stage 2)
      - <"release">

A component reference reads ``<geometry> of <part> of <object>``.  With a
single ``of`` the phrase is either ``<geometry> of <object>`` (the part is
then ``the body``) when the first word group is a known geometry, or
``<part> of <object>`` with geometry ``the area`` otherwise.

Relation text is classified by keyword rules; the accepted phrasings are::

    A is parallel to B                    A is perpendicular to B
    A is directly above B [by X cm]       A is directly below B [by X cm]
    A is to the left/right of B by X cm   A is in front of / behind B by X cm
    A is above / below B by X cm          A is colinear with B [by X cm]
    A reaches B                           A moves toward B by X cm
    A moves away from B by X cm           A rotates around B by X degrees
    A orbits around B by X degrees
    the distance between A and B is X cm
    the distance between A and B remains unchanged

``is`` may be replaced by ``remains``; ``around X`` means the same as
``by X``.  Anything else is a :class:`ParseError`.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field

from .errors import ParseError, ValidationError

__all__ = [
    "GeometricComponentRef",
    "RelationKind",
    "Direction",
    "RelationSpec",
    "ConstraintKind",
    "FlowSpec",
    "Constraint",
    "Stage",
    "TaskPlan",
    "parse_ref",
    "parse_relation",
    "parse_constraint",
    "parse_plan",
    "serialize_plan",
    "serialize_constraint",
    "render_relation",
]

GEOMETRY_WORDS = frozenset(
    {
        "center", "centre", "center point", "axis", "plane", "normal", "heading", "heading direction",
        "area", "edge", "left edge", "right edge", "top edge", "bottom edge", "point", "left point",
        "right point", "tip point", "binormal", "direction",
    }
)
IMPLIED_GEOMETRY = "the area"
IMPLIED_PART = "the body"


def _clean(s: str) -> str:
    return re.sub(r"\s+", " ", s.strip().strip("`'").strip()).lower()


def _strip_article(s: str) -> str:
    return s[4:] if s.startswith("the ") else s


@dataclass(frozen=True)
class GeometricComponentRef:
    geometry: str
    part: str
    object: str

    def __post_init__(self):
        for name in ("geometry", "part", "object"):
            value = _clean(getattr(self, name))
            if not value:
                raise ValueError(f"empty {name} token")
            object.__setattr__(self, name, value)

    @property
    def key(self) -> tuple[str, str]:
        """Registry key: ``(object, part)`` without leading articles."""
        return (_strip_article(self.object), _strip_article(self.part))

    @property
    def geometry_word(self) -> str:
        return _strip_article(self.geometry)

    def text(self) -> str:
        return f"{self.geometry} of {self.part} of {self.object}"

    def __str__(self) -> str:
        return self.text()


def parse_ref(phrase: str, implied_geometry: str = IMPLIED_GEOMETRY, offset: int = 0) -> GeometricComponentRef:
    text = _clean(phrase)
    segments = [s.strip() for s in re.split(r"\s+of\s+", text)]
    if len(segments) < 2 or not all(segments):
        raise ParseError(f"component {phrase!r} needs '<geometry> of <part> of <object>'", offset)
    if len(segments) == 2:
        first, obj = segments
        if _strip_article(first) in GEOMETRY_WORDS:
            return GeometricComponentRef(first, IMPLIED_PART, obj)
        return GeometricComponentRef(implied_geometry, first, obj)
    return GeometricComponentRef(segments[0], " of ".join(segments[1:-1]), segments[-1])


class RelationKind(str, enum.Enum):
    PARALLEL = "Parallel"
    PERPENDICULAR = "Perpendicular"
    DIRECTLY_ABOVE_BY = "DirectlyAboveBy"
    DIRECTLY_BELOW_BY = "DirectlyBelowBy"
    OFFSET_ALONG_AXIS_BY = "OffsetAlongAxisBy"
    DISTANCE_EQUALS = "DistanceEquals"
    DISTANCE_UNCHANGED = "DistanceUnchanged"
    ROTATE_AROUND_AXIS_BY = "RotateAroundAxisBy"
    ORBIT_AROUND_AXIS_BY = "OrbitAroundAxisBy"
    MOVE_TOWARD_BY = "MoveTowardBy"
    MOVE_AWAY_BY = "MoveAwayBy"
    COLINEAR = "Colinear"
    REACH = "Reach"


class Direction(str, enum.Enum):
    LEFT = "Left"
    RIGHT = "Right"
    FRONT = "Front"
    BACK = "Back"
    UP = "Up"
    DOWN = "Down"


_ANGULAR = {RelationKind.ROTATE_AROUND_AXIS_BY, RelationKind.ORBIT_AROUND_AXIS_BY}
_NEEDS_MAGNITUDE = {
    RelationKind.OFFSET_ALONG_AXIS_BY,
    RelationKind.DISTANCE_EQUALS,
    RelationKind.ROTATE_AROUND_AXIS_BY,
    RelationKind.ORBIT_AROUND_AXIS_BY,
    RelationKind.MOVE_TOWARD_BY,
    RelationKind.MOVE_AWAY_BY,
}


@dataclass(frozen=True)
class RelationSpec:
    """A classified relation between two operand components.

    ``magnitude`` is in meters, or radians for rotate/orbit (which may be
    negative for clockwise motion).
    """

    kind: RelationKind
    operands: tuple[GeometricComponentRef, GeometricComponentRef]
    magnitude: float | None = None
    direction: Direction | None = None
    raw_text: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind in _NEEDS_MAGNITUDE and self.magnitude is None:
            raise ValueError(f"{self.kind.value} requires a magnitude")
        if self.magnitude is not None and self.magnitude < 0 and self.kind not in _ANGULAR:
            raise ValueError(f"{self.kind.value} magnitude must be non-negative")
        if (self.kind is RelationKind.OFFSET_ALONG_AXIS_BY) != (self.direction is not None):
            raise ValueError("direction is required for, and only for, OffsetAlongAxisBy")


class ConstraintKind(str, enum.Enum):
    SUBGOAL = "SubGoal"
    PATH = "Path"
    GRASP = "Grasp"
    RELEASE = "Release"
    FLOW = "Flow"


@dataclass(frozen=True)
class FlowSpec:
    """Stage transition rule.

    Either ``repeat`` is set (repeat the stage that many times in total), or
    ``condition`` is asked of an oracle; ``on_yes``/``on_no`` are 1-based
    target stages (``None`` means "next stage" and "this stage" respectively).
    """

    condition: str
    repeat: int | None = None
    on_yes: int | None = None
    on_no: int | None = None

    @property
    def targets(self) -> tuple[int, ...]:
        return tuple(t for t in (self.on_yes, self.on_no) if t is not None)


_TYPE_WORDS = {
    ConstraintKind.SUBGOAL: "sub-goal constraints",
    ConstraintKind.PATH: "path constraints",
    ConstraintKind.GRASP: "grasp",
    ConstraintKind.RELEASE: "release",
    ConstraintKind.FLOW: "flow constraints",
}


@dataclass(frozen=True)
class Constraint:
    kind: ConstraintKind
    components: tuple[GeometricComponentRef, ...] = ()
    relation: RelationSpec | None = None
    flow: FlowSpec | None = None
    note: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if self.kind in (ConstraintKind.SUBGOAL, ConstraintKind.PATH):
            if not self.components or self.relation is None:
                raise ValueError("sub-goal/path constraints need components and a relation")
        elif self.kind is ConstraintKind.GRASP:
            if len(self.components) > 1 or self.relation is not None:
                raise ValueError("grasp takes at most one component and no relation")
        elif self.kind is ConstraintKind.RELEASE:
            if self.components or self.relation is not None:
                raise ValueError("release takes no components")
        elif self.kind is ConstraintKind.FLOW and self.flow is None:
            raise ValueError("flow constraints carry a flow spec")


@dataclass(frozen=True)
class Stage:
    index: int
    name: str
    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if not self.name:
            object.__setattr__(self, "name", f"stage {self.index}")

    def of_kind(self, kind: ConstraintKind) -> list[Constraint]:
        return [c for c in self.constraints if c.kind is kind]

    @property
    def flow(self) -> FlowSpec | None:
        flows = self.of_kind(ConstraintKind.FLOW)
        return flows[0].flow if flows else None


@dataclass(frozen=True)
class TaskPlan:
    task_description: str
    stages: tuple[Stage, ...]

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))

    def stage(self, index: int) -> Stage:
        for s in self.stages:
            if s.index == index:
                return s
        raise KeyError(index)

    def validate(self) -> "TaskPlan":
        if not self.stages:
            raise ValidationError("a plan needs at least one stage")
        indices = [s.index for s in self.stages]
        if len(set(indices)) != len(indices):
            raise ValidationError(f"duplicate stage indices in {indices}")
        if sorted(indices) != list(range(1, len(indices) + 1)):
            raise ValidationError(f"stage indices must be contiguous from 1, got {indices}")
        for s in self.stages:
            flows = s.of_kind(ConstraintKind.FLOW)
            if len(flows) > 1:
                raise ValidationError(f"stage {s.index} has {len(flows)} flow constraints; only one is allowed")
            for f in flows:
                for target in f.flow.targets:
                    if target not in indices:
                        raise ValidationError(f"stage {s.index} flow targets missing stage {target}")
        return self


# --------------------------------------------------------------------------
# relation text

_NUM = r"[-+]?\d+(?:\.\d+)?"
_UNIT_SCALE = {
    "cm": 0.01, "centimeter": 0.01, "centimeters": 0.01, "centimetre": 0.01, "centimetres": 0.01,
    "mm": 0.001, "millimeter": 0.001, "millimeters": 0.001,
    "m": 1.0, "meter": 1.0, "meters": 1.0, "metre": 1.0, "metres": 1.0,
}
_ANGLE_UNITS = {"degree", "degrees", "degress", "deg", "°"}
_MAG_RE = re.compile(
    rf"\s*(?:,\s*)?(?:(?:by|of)\s+)?(?:(?:around|about|approximately|roughly)\s+)?"
    rf"(?P<value>{_NUM})\s*(?P<unit>centimeters?|centimetres?|cm|millimeters?|mm|meters?|metres?|m|degrees?|degress|deg|°)"
    rf"(?P<rest>(?:\s+(?:counter-?clockwise|clockwise)(?:ly)?)?)\s*(?:in total)?\s*$"
)

_SIDE = {
    "to the left of": Direction.LEFT,
    "left of": Direction.LEFT,
    "to the right of": Direction.RIGHT,
    "right of": Direction.RIGHT,
    "in front of": Direction.FRONT,
    "behind": Direction.BACK,
    "above": Direction.UP,
    "below": Direction.DOWN,
}

_BE = r"(?:is|are|remains|remain|stays|should be|is kept)"


def _split_magnitude(text: str):
    m = _MAG_RE.search(text)
    if not m:
        return text, None, None
    value = float(m.group("value"))
    unit = m.group("unit")
    rest = m.group("rest").strip()
    if unit in _ANGLE_UNITS:
        mag = math.radians(value)
        if rest.startswith("clockwise"):
            mag = -abs(mag)
        return text[: m.start()].rstrip(" ,"), mag, "angle"
    return text[: m.start()].rstrip(" ,"), value * _UNIT_SCALE[unit], "length"


def _operands(a: str, b: str, offset: int) -> tuple[GeometricComponentRef, GeometricComponentRef]:
    return parse_ref(a, offset=offset), parse_ref(b, offset=offset)


def parse_relation(text: str, offset: int = 0) -> RelationSpec:
    """Classify a relation description; raises :class:`ParseError`."""
    raw = text
    t = _clean(text).rstrip(".")
    body, mag, unit = _split_magnitude(t)

    def need(kind: RelationKind, what: str):
        if mag is None:
            raise ParseError(f"{kind.value} relation needs a magnitude", offset)
        if (what == "angle") != (unit == "angle"):
            raise ParseError(f"{kind.value} relation needs {'an angle' if what == 'angle' else 'a distance'}", offset)
        return mag

    m = re.fullmatch(rf"the distance between (.+?) and (.+?) {_BE} unchanged", body)
    if m:
        return RelationSpec(RelationKind.DISTANCE_UNCHANGED, _operands(*m.groups(), offset), raw_text=raw)
    m = re.fullmatch(rf"the distance between (.+?) and (.+?)(?: {_BE})?(?: equal to| equals)?", body)
    if m:
        d = need(RelationKind.DISTANCE_EQUALS, "length")
        return RelationSpec(RelationKind.DISTANCE_EQUALS, _operands(*m.groups(), offset), d, raw_text=raw)
    for kind, verbs, prep in ((RelationKind.ROTATE_AROUND_AXIS_BY, "rotates?|rotated|turns?", "(?:around|about) "),
                              (RelationKind.ORBIT_AROUND_AXIS_BY, "orbits?|orbited", "(?:around |about )?")):
        m = re.fullmatch(rf"(.+?) (?:{verbs}) (counter-?clockwise |clockwise )?{prep}(.+)", body)
        if m:
            a, sense, b = m.groups()
            ang = need(kind, "angle")
            if sense == "clockwise ":
                ang = -abs(ang)
            return RelationSpec(kind, _operands(a, b, offset), ang, raw_text=raw)
    m = re.fullmatch(rf"(.+?) (?:{_BE} )?directly (above|below) (.+)", body)
    if m:
        a, side, b = m.groups()
        if mag is not None and unit != "length":
            raise ParseError("vertical offset needs a distance", offset)
        kind = RelationKind.DIRECTLY_ABOVE_BY if side == "above" else RelationKind.DIRECTLY_BELOW_BY
        return RelationSpec(kind, _operands(a, b, offset), mag, raw_text=raw)
    m = re.fullmatch(r"(.+?) (?:moves?|moved|moving) (backwards?|away from|against|towards?|to)(?: from)? (.+)", body)
    if m:
        a, verb, b = m.groups()
        kind = RelationKind.MOVE_TOWARD_BY if verb in ("toward", "towards", "to") else RelationKind.MOVE_AWAY_BY
        d = need(kind, "length")
        return RelationSpec(kind, _operands(a, b, offset), d, raw_text=raw)
    m = re.fullmatch(rf"(.+?) (?:{_BE} )?(?:colinear|collinear) with (.+)", body)
    if m:
        if mag is not None and unit != "length":
            raise ParseError("colinear offset needs a distance", offset)
        return RelationSpec(RelationKind.COLINEAR, _operands(*m.groups(), offset), mag, raw_text=raw)
    m = re.fullmatch(r"(.+?) (?:reaches|reach|touches|arrives at) (.+)", body)
    if m:
        return RelationSpec(RelationKind.REACH, _operands(*m.groups(), offset), raw_text=raw)
    m = re.fullmatch(rf"(.+?) (?:{_BE} )?(parallel|perpendicular) (?:to|with) (.+)", body)
    if m:
        a, which, b = m.groups()
        if mag is not None:
            raise ParseError(f"{which} relation takes no magnitude", offset)
        kind = RelationKind.PARALLEL if which == "parallel" else RelationKind.PERPENDICULAR
        return RelationSpec(kind, _operands(a, b, offset), raw_text=raw)
    side_alt = "|".join(re.escape(k) for k in sorted(_SIDE, key=len, reverse=True))
    m = re.fullmatch(rf"(.+?) (?:{_BE} )?(?:directly )?({side_alt}) (.+)", body)
    if m:
        a, side, b = m.groups()
        d = need(RelationKind.OFFSET_ALONG_AXIS_BY, "length")
        return RelationSpec(
            RelationKind.OFFSET_ALONG_AXIS_BY, _operands(a, b, offset), d, direction=_SIDE[side], raw_text=raw
        )
    raise ParseError(f"unrecognized relation {text!r}", offset)


def _fmt(x: float) -> str:
    s = f"{x:.12g}"
    return "0" if s == "-0" else s


def render_relation(rel: RelationSpec) -> str:
    a, b = (r.text() for r in rel.operands)
    cm = None if rel.magnitude is None else _fmt(rel.magnitude * 100.0)
    by_cm = f" by {cm} centimeters" if cm is not None else ""
    k = rel.kind
    if k is RelationKind.PARALLEL:
        return f"{a} is parallel to {b}"
    if k is RelationKind.PERPENDICULAR:
        return f"{a} is perpendicular to {b}"
    if k is RelationKind.DIRECTLY_ABOVE_BY:
        return f"{a} is directly above {b}{by_cm}"
    if k is RelationKind.DIRECTLY_BELOW_BY:
        return f"{a} is directly below {b}{by_cm}"
    if k is RelationKind.OFFSET_ALONG_AXIS_BY:
        phrase = {
            Direction.LEFT: "to the left of", Direction.RIGHT: "to the right of",
            Direction.FRONT: "in front of", Direction.BACK: "behind",
            Direction.UP: "above", Direction.DOWN: "below",
        }[rel.direction]
        return f"{a} is {phrase} {b}{by_cm}"
    if k is RelationKind.DISTANCE_EQUALS:
        return f"the distance between {a} and {b} is {cm} centimeters"
    if k is RelationKind.DISTANCE_UNCHANGED:
        return f"the distance between {a} and {b} remains unchanged"
    if k is RelationKind.ROTATE_AROUND_AXIS_BY:
        return f"{a} rotates around {b} by {_fmt(math.degrees(rel.magnitude))} degrees"
    if k is RelationKind.ORBIT_AROUND_AXIS_BY:
        return f"{a} orbits around {b} by {_fmt(math.degrees(rel.magnitude))} degrees"
    if k is RelationKind.MOVE_TOWARD_BY:
        return f"{a} moves toward {b}{by_cm}"
    if k is RelationKind.MOVE_AWAY_BY:
        return f"{a} moves away from {b}{by_cm}"
    if k is RelationKind.COLINEAR:
        return f"{a} is colinear with {b}{by_cm}"
    if k is RelationKind.REACH:
        return f"{a} reaches {b}"
    raise AssertionError(k)


# --------------------------------------------------------------------------
# tuples

_STRING_RE = re.compile(r'"((?:[^"\\]|\\.)*)"')


def _lex_tuple(line: str) -> tuple[list[tuple[str, int]], str, int]:
    """Split ``<"a", "b", ...> trailing`` into ``[(element, offset)]``."""
    start = line.find("<")
    if start < 0:
        raise ParseError("expected '<' opening a constraint tuple", 0, line)
    pos = start + 1
    items: list[tuple[str, int]] = []
    while True:
        while pos < len(line) and line[pos] in " \t,":
            pos += 1
        if pos >= len(line):
            raise ParseError("unterminated tuple, expected '>'", pos, line)
        if line[pos] == ">":
            pos += 1
            break
        m = _STRING_RE.match(line, pos)
        if not m:
            raise ParseError("expected a double-quoted element", pos, line)
        items.append((m.group(1), m.start()))
        pos = m.end()
        while pos < len(line) and line[pos] in " \t":
            pos += 1
        if pos < len(line) and line[pos] not in ",>":
            raise ParseError("expected ',' or '>' after element", pos, line)
    return items, line[pos:].strip(), pos


def _constraint_type(word: str, offset: int) -> ConstraintKind:
    w = _clean(word).replace("_", "-")
    if re.fullmatch(r"sub-?\s?goals?( cons?t?r?aints?)?", w):
        return ConstraintKind.SUBGOAL
    if re.fullmatch(r"path( cons?t?r?aints?)?", w):
        return ConstraintKind.PATH
    if re.fullmatch(r"flow( cons?t?r?aints?)?", w):
        return ConstraintKind.FLOW
    if w == "grasp":
        return ConstraintKind.GRASP
    if w == "release":
        return ConstraintKind.RELEASE
    raise ParseError(f"unknown constraint type {word!r}", offset)


_TARGET_RE = re.compile(
    r"go\s*to stage (\d+) if (not )?satisfied\s*[;,]?\s*(?:and\s+)?go\s*to stage (\d+) if (not )?satisfied"
)


def _parse_flow(cond: str, trailing: str, offset: int) -> FlowSpec:
    c = _clean(cond)
    m = re.search(r"repeat (?:this stage )?(?:for )?(\d+) times", c)
    if m:
        n = int(m.group(1))
        if n < 1:
            raise ParseError("repeat count must be positive", offset)
        return FlowSpec(condition=cond.strip(), repeat=n)
    on_yes = on_no = None
    m = _TARGET_RE.search(_clean(trailing))
    if m:
        first, neg1, second, neg2 = m.groups()
        if bool(neg1) == bool(neg2):
            raise ParseError("flow targets must give one 'satisfied' and one 'not satisfied' branch", offset)
        on_yes, on_no = (int(first), int(second)) if not neg1 else (int(second), int(first))
    return FlowSpec(condition=cond.strip(), on_yes=on_yes, on_no=on_no)


def parse_constraint(line: str) -> Constraint:
    items, trailing, _ = _lex_tuple(line)
    if not items:
        raise ParseError("empty constraint tuple", line.find("<") + 1, line)
    kind = _constraint_type(items[0][0], items[0][1])
    note = trailing.strip()
    if note.startswith("(") and note.endswith(")"):
        note = note[1:-1].strip()
    if kind is ConstraintKind.RELEASE:
        if len(items) != 1:
            raise ParseError("release takes no arguments", items[1][1], line)
        return Constraint(kind, note=note)
    if kind is ConstraintKind.GRASP:
        if len(items) > 2:
            raise ParseError("grasp takes at most one component", items[2][1], line)
        if len(items) == 1 or not items[1][0].strip():
            return Constraint(kind, note=note)
        return Constraint(kind, (parse_ref(items[1][0], offset=items[1][1]),), note=note)
    if kind is ConstraintKind.FLOW:
        if len(items) != 2:
            raise ParseError("flow constraint takes exactly one condition", items[0][1], line)
        flow = _parse_flow(items[1][0], trailing, items[1][1])
        return Constraint(kind, flow=flow, note="" if (flow.on_yes or flow.on_no) else note)
    if len(items) < 3:
        raise ParseError("constraint needs at least one component and a relation", items[-1][1], line)
    comps = tuple(parse_ref(text, offset=off) for text, off in items[1:-1])
    rel_text, rel_off = items[-1]
    relation = parse_relation(rel_text, rel_off)
    return Constraint(kind, comps, relation, note=note)


def serialize_constraint(c: Constraint) -> str:
    word = _TYPE_WORDS[c.kind]
    if c.kind is ConstraintKind.RELEASE:
        return f'<"{word}">'
    if c.kind is ConstraintKind.GRASP:
        return f'<"{word}", "{c.components[0].text()}">' if c.components else f'<"{word}", "">'
    if c.kind is ConstraintKind.FLOW:
        f = c.flow
        if f.repeat is not None:
            cond = f.condition if re.search(r"repeat .*\d+ times", _clean(f.condition)) else f"repeat this stage {f.repeat} times"
            return f'<"{word}", "{cond}">'
        out = f'<"{word}", "{f.condition}">'
        if f.on_yes is not None or f.on_no is not None:
            out += f" (go to stage {f.on_yes} if satisfied; go to stage {f.on_no} if not satisfied)"
        return out
    parts = [word, *(r.text() for r in c.components), render_relation(c.relation)]
    return "<" + ", ".join(f'"{p}"' for p in parts) + ">"


# --------------------------------------------------------------------------
# plans

_HEADER_RE = re.compile(r'^-?\s*"(?P<name>[^"]*)"\s*(?:stage)?\s*:?\s*(?:\(\s*stage\s*(?P<idx>\d+)\s*\))?\s*:?\s*$')
_TASK_RE = re.compile(r'^task\s*:\s*"?(?P<task>.*?)"?\s*$', re.IGNORECASE)


def parse_plan(text: str) -> TaskPlan:
    """Parse a plan file; raises :class:`ParseError` or :class:`ValidationError`."""
    task = ""
    stages: list[tuple[int | None, str, list[Constraint]]] = []
    base = 0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        line_base = base + (len(raw.encode()) - len(raw.lstrip().encode()))
        base += len(raw.encode()) + 1
        if not line or line.startswith("#"):
            continue
        m = _TASK_RE.match(line)
        if m:
            task = m.group("task").strip()
            continue
        body = line[1:].strip() if line.startswith("-") else line
        if body.startswith("<"):
            if not stages:
                raise ParseError(f"line {line_no}: constraint before any stage header", line_base)
            try:
                stages[-1][2].append(parse_constraint(body))
            except ParseError as exc:
                shift = len(line.encode()) - len(body.encode())
                raise ParseError(f"line {line_no}: {exc.reason}", line_base + shift + exc.offset, raw) from None
            except ValueError as exc:
                raise ParseError(f"line {line_no}: {exc}", line_base, raw) from None
            continue
        m = _HEADER_RE.match(line)
        if m:
            idx = int(m.group("idx")) if m.group("idx") else None
            stages.append((idx, m.group("name").strip(), []))
            continue
        raise ParseError(f"line {line_no}: expected a stage header or a constraint tuple", line_base, raw)
    built = []
    for pos, (idx, name, cons) in enumerate(stages, start=1):
        index = idx if idx is not None else pos
        built.append(Stage(index, name, tuple(cons)))
    return TaskPlan(task, tuple(built)).validate()


def serialize_plan(plan: TaskPlan) -> str:
    lines = []
    if plan.task_description:
        lines.append(f'task: "{plan.task_description}"')
    for s in plan.stages:
        lines.append(f'- "{s.name or f"stage {s.index}"}" (stage {s.index})')
        for c in s.constraints:
            lines.append(f"  - {serialize_constraint(c)}")
    return "\n".join(lines) + "\n"

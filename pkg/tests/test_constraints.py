import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoplan.constraints import (ConstraintKind, Direction, GeometricComponentRef, RelationKind, parse_constraint,
                                 parse_plan, parse_ref, parse_relation, serialize_constraint, serialize_plan)
from geoplan.costs import compile_constraint
from geoplan.errors import ParseError, ValidationError
from geoplan.planner import fixture_names, fixture_text

BLOCK = ('<"sub-goal constraints", "the center of the red block", "the center of the blue block", '
         '"the center of the red block is directly above the center of the blue block around 20 centimeters">')


def test_grasp_tuple_implies_area_geometry():
    c = parse_constraint('<"grasp", "the handle of the teapot">')
    assert c.kind is ConstraintKind.GRASP
    assert c.components == (GeometricComponentRef("the area", "the handle", "the teapot"),)
    assert c.relation is None


def test_release_tuple():
    c = parse_constraint('<"release">')
    assert c.kind is ConstraintKind.RELEASE and c.components == ()


def test_directly_above_tuple():
    c = parse_constraint(BLOCK)
    assert c.kind is ConstraintKind.SUBGOAL
    assert c.relation.kind is RelationKind.DIRECTLY_ABOVE_BY
    assert c.relation.magnitude == pytest.approx(0.20)
    assert c.components[0].key == ("red block", "body")


def test_single_of_is_parse_error():
    with pytest.raises(ParseError) as err:
        parse_constraint('<"sub-goal constraints", "the knife", "the knife is above the table">')
    assert err.value.offset > 0
    assert "of" in err.value.reason


def test_unknown_type_and_missing_magnitude():
    with pytest.raises(ParseError, match="unknown constraint type"):
        parse_constraint('<"wish", "the area of the handle of the cup">')
    with pytest.raises(ParseError, match="magnitude"):
        parse_relation("the area of the door of the fridge rotates around the axis of the hinge of the fridge")


def test_units_convert():
    rel = parse_relation("the center of the body of the cup is to the left of the center of the body of the plate by 10 cm")
    assert rel.kind is RelationKind.OFFSET_ALONG_AXIS_BY and rel.direction is Direction.LEFT
    assert rel.magnitude == pytest.approx(0.10)
    rot = parse_relation("the plane of the surface of the door rotates around the axis of the hinge of the door by 60 degrees")
    assert rot.magnitude == pytest.approx(math.radians(60))
    cw = parse_relation("the area of the handle of the pot rotates clockwise around the axis of the body of the pot by 30 degrees")
    assert cw.magnitude == pytest.approx(-math.radians(30))


def test_parse_ref_gripper_and_articles():
    ref = parse_ref("the heading direction of the gripper approach of the robot")
    assert ref.geometry == "the heading direction" and ref.key == ("robot", "gripper approach")
    two = parse_ref("the center of the red block")
    assert two.key == ("red block", "body")


def test_block_plan_three_stages():
    text = '\n'.join([
        '- "grasp red block" (stage 1)',
        '  - <"grasp", "the body of the red block">',
        '- "drop the red block on top of blue block" (stage 2)',
        f'  - {BLOCK}',
        '- "release the red block" (stage 3)',
        '  - <"release">',
    ])
    plan = parse_plan(text)
    assert [s.index for s in plan.stages] == [1, 2, 3]
    assert [s.constraints[0].kind for s in plan.stages] == [ConstraintKind.GRASP, ConstraintKind.SUBGOAL,
                                                            ConstraintKind.RELEASE]


def test_single_release_plan_is_valid():
    plan = parse_plan('- "let go" (stage 1)\n  - <"release">\n')
    assert len(plan.stages) == 1


def test_dangling_flow_target_and_duplicate_index():
    with pytest.raises(ValidationError):
        parse_plan('- "a" (stage 1)\n  - <"flow constraints", "done"> (go to stage 99 if satisfied; '
                   'go to stage 1 if not satisfied)\n')
    with pytest.raises(ValidationError):
        parse_plan('- "a" (stage 1)\n  - <"release">\n- "b" (stage 1)\n  - <"release">\n')


def test_two_flows_in_one_stage_rejected():
    with pytest.raises(ValidationError, match="only one"):
        parse_plan('- "a" (stage 1)\n  - <"flow constraints", "repeat this stage 2 times">\n'
                   '  - <"flow constraints", "repeat this stage 3 times">\n')


def test_parse_error_offset_points_into_line():
    text = '- "a" (stage 1)\n  - <"grasp", "the handle">\n'
    with pytest.raises(ParseError) as err:
        parse_plan(text)
    assert text.encode()[err.value.offset:].startswith(b'"the handle"')


def test_condition_flow_targets():
    c = parse_constraint('<"flow constraints", "the cup is filled with water"> '
                         '(go to stage 4 if satisfied; go to stage 3 if not satisfied)')
    assert (c.flow.on_yes, c.flow.on_no) == (4, 3)
    rep = parse_constraint('<"flow constraints", "repeat this stage for 12 times">')
    assert rep.flow.repeat == 12


def test_serialize_synthesizes_stage_name_and_canonical_units():
    plan = parse_plan('- "" (stage 1)\n  - ' + BLOCK + '\n')
    text = serialize_plan(plan)
    assert '"stage 1"' in text
    assert "by 20 centimeters" in text


@pytest.mark.parametrize("name", fixture_names())
def test_fixture_round_trip(name):
    plan = parse_plan(fixture_text(name))
    assert parse_plan(serialize_plan(plan)) == plan


@pytest.mark.parametrize("name", fixture_names())
def test_fixture_relations_compile(name):
    for stage in parse_plan(fixture_text(name)).stages:
        for c in stage.constraints:
            if c.kind in (ConstraintKind.SUBGOAL, ConstraintKind.PATH):
                assert compile_constraint(c).kind_tag is c.relation.kind


def test_whitespace_independent():
    plan = parse_plan(fixture_text("pick-place"))
    noisy = "\n\n".join("   " + line + "   " for line in fixture_text("pick-place").splitlines())
    assert parse_plan(noisy) == plan


# ---------------------------------------------------------------- generated plans

_REFS = ["the center of the body of the cup", "the axis of the handle of the pot", "the plane of the surface of the table",
         "the heading direction of the gripper approach of the robot", "the normal of the blade of the knife"]
_TEMPLATES = [
    "{a} is parallel to {b}", "{a} is perpendicular to {b}", "{a} is directly above {b} by {n} centimeters",
    "{a} is directly below {b}", "{a} is to the left of {b} by {n} cm", "{a} is behind {b} by {n} centimeters",
    "the distance between {a} and {b} is {n} centimeters", "the distance between {a} and {b} remains unchanged",
    "{a} rotates around {b} by {n} degrees", "{a} orbits around {b} by -{n} degrees", "{a} moves toward {b} by {n} cm",
    "{a} moves away from {b} by {n} centimeters", "{a} is colinear with {b}", "{a} is colinear with {b} by {n} cm",
    "{a} reaches {b}",
]


@st.composite
def plan_texts(draw):
    n_stages = draw(st.integers(1, 4))
    lines = ['task: "generated"']
    for i in range(1, n_stages + 1):
        lines.append(f'- "stage {i} name" (stage {i})')
        for _ in range(draw(st.integers(1, 3))):
            a, b = draw(st.sampled_from(_REFS)), draw(st.sampled_from(_REFS))
            rel = draw(st.sampled_from(_TEMPLATES)).format(a=a, b=b, n=draw(st.integers(0, 90)))
            word = draw(st.sampled_from(["sub-goal constraints", "path constraints"]))
            lines.append(f'  - <"{word}", "{a}", "{b}", "{rel}">')
        if draw(st.booleans()):
            lines.append(f'  - <"grasp", "{draw(st.sampled_from(_REFS))}">')
        flow = draw(st.sampled_from(["none", "repeat", "cond"]))
        if flow == "repeat":
            lines.append(f'  - <"flow constraints", "repeat this stage {draw(st.integers(1, 20))} times">')
        elif flow == "cond":
            y, n = draw(st.integers(1, n_stages)), draw(st.integers(1, n_stages))
            lines.append(f'  - <"flow constraints", "the task is done"> (go to stage {y} if satisfied; '
                         f'go to stage {n} if not satisfied)')
    return "\n".join(lines)


@settings(max_examples=150, deadline=None)
@given(plan_texts())
def test_round_trip_property(text):
    plan = parse_plan(text)
    assert parse_plan(serialize_plan(plan)) == plan
    for stage in plan.stages:
        for c in stage.constraints:
            assert parse_constraint(serialize_constraint(c)) == c

"""Seeded random inputs pairing each cost primitive with its oracle."""

import numpy as np

import oracles
from geoplan import costs
from geoplan.constraints import Direction


def _cloud(rng, n=None, spread=None):
    n = n or int(rng.integers(5, 40))
    spread = np.asarray(spread if spread is not None else rng.uniform(0.01, 0.3, size=3))
    return rng.normal(size=(n, 3)) * spread + rng.uniform(-1, 1, size=3)


def _unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def _line(rng):
    # elongated along a random direction so the principal axis is well separated
    d = _unit(rng)
    return rng.uniform(-1, 1, size=(30, 1)) * d + rng.normal(scale=0.01, size=(30, 3)) + rng.uniform(-1, 1, size=3)


def _parallel(rng):
    a, b = _unit(rng), _unit(rng)
    return costs.cost_parallel(a, b), oracles.parallel(a, b)


def _perpendicular(rng):
    a, b = _unit(rng), _unit(rng)
    return costs.cost_perpendicular(a, b), oracles.perpendicular(a, b)


def _above(rng):
    up, low = _cloud(rng), _cloud(rng)
    d = None if rng.random() < 0.3 else rng.uniform(0, 0.3)
    return costs.cost_directly_above_by(up, low, d), oracles.above_by(up, low, d)


def _below(rng):
    low, up = _cloud(rng), _cloud(rng)
    d = None if rng.random() < 0.3 else rng.uniform(0, 0.3)
    return costs.cost_directly_below_by(low, up, d), oracles.above_by(up, low, d)


def _offset(rng):
    a, b = _cloud(rng), _cloud(rng)
    side = rng.choice(list(oracles.SIDES))
    d = rng.uniform(0, 0.3)
    return costs.cost_offset_along(a, b, Direction(side), d), oracles.offset(a, b, side, d)


def _rotate(rng):
    prev, axis_cloud = _cloud(rng, 25), _line(rng)
    now = prev + rng.normal(scale=0.05, size=prev.shape)
    angle = rng.uniform(-np.pi, np.pi)
    return costs.cost_rotate_about_axis(now, prev, axis_cloud, angle), oracles.rotate(now, prev, axis_cloud, angle)


def _orbit(rng):
    prev, axis_cloud = _cloud(rng, 25), _line(rng)
    now = prev + rng.normal(scale=0.05, size=prev.shape)
    angle = rng.uniform(-np.pi, np.pi)
    return costs.cost_orbit_about_axis(now, prev, axis_cloud, angle), oracles.orbit(now, prev, axis_cloud, angle)


def _distance_equals(rng):
    a, b = _cloud(rng), _cloud(rng)
    d = rng.uniform(0, 1)
    return costs.cost_distance_equals(a, b, d), oracles.distance_equals(a, b, d)


def _distance_unchanged(rng):
    now, prev, ref = _cloud(rng), _cloud(rng), _cloud(rng)
    return costs.cost_distance_unchanged(now, prev, ref), oracles.distance_unchanged(now, prev, ref)


def _move(rng):
    now, prev, target = _cloud(rng), _cloud(rng), _cloud(rng)
    d, away = rng.uniform(0, 0.5), bool(rng.random() < 0.5)
    return costs.cost_move_toward(now, prev, target, d, away), oracles.move_toward(now, prev, target, d, away)


def _colinear(rng):
    point, line = _cloud(rng), _line(rng)
    if rng.random() < 0.5:
        return costs.cost_colinear(point, line), oracles.line_distance(point, line)
    d = rng.uniform(-0.5, 0.5)
    return costs.cost_colinear(point, line, d), oracles.colinear(point, line, d)


def _reach(rng):
    a, b = _cloud(rng), _cloud(rng)
    return costs.cost_reach(a, b), oracles.reach(a, b)


PRIMITIVES = {
    "parallel": _parallel,
    "perpendicular": _perpendicular,
    "directly_above_by": _above,
    "directly_below_by": _below,
    "offset_along": _offset,
    "rotate_about_axis": _rotate,
    "orbit_about_axis": _orbit,
    "distance_equals": _distance_equals,
    "distance_unchanged": _distance_unchanged,
    "move_toward": _move,
    "colinear": _colinear,
    "reach": _reach,
}


def max_oracle_gap(name, n=100, seed=0):
    """Largest |primitive - oracle| and smallest primitive value over ``n`` seeded inputs."""
    rng = np.random.default_rng([seed, sorted(PRIMITIVES).index(name)])
    gaps, lows = [], []
    for _ in range(n):
        got, want = PRIMITIVES[name](rng)
        gaps.append(abs(got - want))
        lows.append(got)
    return max(gaps), min(lows)

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dhocbf.dynamics import (
    ControlInput,
    EgoState,
    ObstacleProfile,
    ObstacleState,
    obstacle_state_at,
    obstacles_in_range,
    step_ego,
)
from dhocbf.errors import ValidationError
from dhocbf.geometry import ShapeSpec

finite = st.floats(-50, 50, allow_nan=False)


def _point_obs(x, y, oid="o"):
    return ObstacleState((x, y), (0.0, 0.0), ShapeSpec.point(), 0.0, oid)


def test_step_zero_control_drift():
    s = step_ego(EgoState(0, 0, 1, 0), ControlInput(0, 0), 0.1)
    assert (s.x, s.y, s.vx, s.vy) == pytest.approx((0.1, 0, 1, 0), abs=1e-15)


def test_step_from_rest():
    s = step_ego(EgoState(0, 0, 0, 0), ControlInput(2, 0), 1.0)
    assert (s.x, s.y, s.vx, s.vy) == (1.0, 0.0, 2.0, 0.0)


@pytest.mark.parametrize("dt", [0.0, -0.1, math.inf, math.nan])
def test_step_rejects_bad_dt(dt):
    with pytest.raises(ValidationError):
        step_ego(EgoState(1, 2, -1, 3), ControlInput(0, 0), dt)


def test_non_finite_values_rejected():
    with pytest.raises(ValidationError):
        EgoState(math.nan, 0, 0, 0)
    with pytest.raises(ValidationError):
        ControlInput(0, math.inf)


@settings(max_examples=200, deadline=None)
@given(finite, finite, finite, finite, st.floats(-3, 3), st.floats(-3, 3), st.floats(1e-3, 1.0))
def test_two_half_steps_equal_one_step(x, y, vx, vy, ux, uy, dt):
    s = EgoState(x, y, vx, vy)
    u = ControlInput(ux, uy)
    one = step_ego(s, u, dt)
    two = step_ego(step_ego(s, u, dt / 2), u, dt / 2)
    for a, b in zip((one.x, one.y, one.vx, one.vy), (two.x, two.y, two.vx, two.vy)):
        assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


def test_obstacle_switch_profile():
    p = ObstacleProfile("o", ShapeSpec.point(), (5, 0), [(0, (0, 0)), (2, (-1, 0))])
    o1 = obstacle_state_at(p, 1.0)
    assert o1.position == (5.0, 0.0) and o1.velocity == (0.0, 0.0)
    o3 = obstacle_state_at(p, 3.0)
    assert o3.position == (4.0, 0.0) and o3.velocity == (-1.0, 0.0)


def test_obstacle_constant_velocity():
    p = ObstacleProfile("o", ShapeSpec.point(), (0, 0), [(0, (2, 0))])
    assert obstacle_state_at(p, 2.5).position == (5.0, 0.0)


def test_obstacle_position_continuous_at_boundaries():
    p = ObstacleProfile("o", ShapeSpec.point(), (1, 1), [(0, (1, 2)), (1.5, (-3, 0.5)), (4, (0, -1))])
    for tb in (1.5, 4.0):
        lo = obstacle_state_at(p, tb - 1e-9).position
        hi = obstacle_state_at(p, tb).position
        assert math.dist(lo, hi) < 1e-8


def test_obstacle_heading_held_when_stopped():
    p = ObstacleProfile("o", ShapeSpec.rectangle(2, 4), (0, 0), [(0, (0, 1)), (1, (0, 0))], heading=0.3)
    assert obstacle_state_at(p, 0.5).heading == pytest.approx(math.pi / 2)
    assert obstacle_state_at(p, 2.0).heading == pytest.approx(math.pi / 2)
    still = ObstacleProfile("s", ShapeSpec.rectangle(2, 4), (0, 0), [(0, (0, 0))], heading=0.3)
    assert obstacle_state_at(still, 5.0).heading == 0.3


@pytest.mark.parametrize(
    "segments",
    [[], [(1.0, (0, 0))], [(0, (0, 0)), (0, (1, 0))], [(0, (0, 0)), (2, (1, 0)), (1, (0, 0))]],
)
def test_profile_segment_validation(segments):
    with pytest.raises(ValidationError):
        ObstacleProfile("o", ShapeSpec.point(), (0, 0), segments)


def test_negative_time_rejected():
    p = ObstacleProfile("o", ShapeSpec.point(), (0, 0), [(0, (1, 0))])
    with pytest.raises(ValidationError):
        obstacle_state_at(p, -0.1)


def test_in_range_cut():
    ego = EgoState(0, 0, 0, 0)
    near, far = _point_obs(3, 0, "a"), _point_obs(20, 0, "b")
    assert obstacles_in_range(ego, [near, far], 8.0) == [near]
    assert obstacles_in_range(ego, [], 8.0) == []


def test_in_range_boundary_inclusive():
    ego = EgoState(0, 0, 0, 0)
    o = _point_obs(8.0, 0.0)
    assert obstacles_in_range(ego, [o], 8.0) == [o]


def test_in_range_uses_surface_distance():
    ego = EgoState(0, 0, 0, 0)
    o = ObstacleState((9.5, 0), (0, 0), ShapeSpec.circle(2.0), 0.0, "c")
    assert obstacles_in_range(ego, [o], 8.0) == [o]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(finite, finite), max_size=8), st.floats(0.1, 30), st.floats(0.1, 30))
def test_in_range_subset_and_monotone(points, r1, r2):
    ego = EgoState(0, 0, 0, 0)
    obs = [_point_obs(x, y, str(i)) for i, (x, y) in enumerate(points)]
    lo, hi = sorted((r1, r2))
    small = obstacles_in_range(ego, obs, lo)
    big = obstacles_in_range(ego, obs, hi)
    assert all(o in obs for o in big)
    assert all(o in big for o in small)
    assert [o.id for o in big] == [o.id for o in obs if o in big]

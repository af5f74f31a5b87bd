"""World generation, occupancy rendering, measurements, frames."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cil.world import (
    World,
    WorldConfig,
    measurements,
    render_occupancy,
    robot_to_world_frame,
    spawn_episode,
    states_robot_to_world,
    states_world_to_robot,
    world_to_robot_frame,
)


def test_same_seed_same_world():
    a, b = spawn_episode(42), spawn_episode(42)
    np.testing.assert_array_equal(a.obstacles, b.obstacles)
    np.testing.assert_array_equal(a.start, b.start)
    np.testing.assert_array_equal(a.goal, b.goal)


def test_zero_obstacle_config_valid():
    w = spawn_episode(0, WorldConfig(n_obstacles=(0, 0)))
    assert len(w.obstacles) == 0
    assert not w.in_collision(w.start[:2])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_spawn_margins(seed):
    w = spawn_episode(seed)
    cfg = w.config
    margin = cfg.robot_radius + cfg.spawn_clearance
    assert w.clearance(w.start[:2]) > margin
    assert w.clearance(w.goal) > margin
    assert np.hypot(*(w.start[:2] - w.goal)) >= cfg.min_start_goal_distance
    assert np.all(w.obstacles[:, 2] >= 0.1)
    assert np.all(w.obstacles[:, 2] <= 3.0)


def test_render_empty_world_all_zero():
    w = World(obstacles=np.zeros((0, 3)), start=np.array([5.0, 5.0, 0.0]),
              goal=np.array([20.0, 20.0]), config=WorldConfig())
    img = render_occupancy(w, w.start)
    assert img.shape == (64, 64)
    assert img.sum() == 0


def test_render_obstacle_ahead_disk_position():
    # obstacle 2 m ahead, r = 0.5, 5 px/m -> disk ~10 px above the anchor
    w = World(obstacles=np.array([[17.0, 15.0, 0.5]]),
              start=np.array([15.0, 15.0, 0.0]),
              goal=np.array([25.0, 15.0]), config=WorldConfig())
    img = render_occupancy(w, w.start)
    ys, xs = np.nonzero(img)
    assert len(ys) > 0
    anchor = np.array([32, 32])
    # heading points toward decreasing row index (image up)
    assert np.all(anchor[0] - ys >= 7)
    assert np.all(anchor[0] - ys <= 13)
    assert np.all(np.abs(xs - anchor[1]) <= 3)


def test_render_rotation_invariance():
    cfg = WorldConfig()
    w1 = World(obstacles=np.array([[18.0, 15.0, 0.8]]),
               start=np.array([15.0, 15.0, 0.0]),
               goal=np.array([25.0, 15.0]), config=cfg)
    w2 = World(obstacles=np.array([[15.0, 18.0, 0.8]]),
               start=np.array([15.0, 15.0, np.pi / 2]),
               goal=np.array([15.0, 25.0]), config=cfg)
    np.testing.assert_array_equal(render_occupancy(w1, w1.start),
                                  render_occupancy(w2, w2.start))


def test_measurements_at_goal_and_left():
    cfg = WorldConfig()
    w = World(obstacles=np.zeros((0, 3)), start=np.array([5.0, 5.0, 0.0]),
              goal=np.array([5.0, 8.0]), config=cfg)
    m = measurements(w, np.array([5.0, 8.0, 0.0]), np.zeros(2))
    assert m[2] == pytest.approx(0.0)
    m = measurements(w, np.array([5.0, 5.0, 0.0]), np.zeros(2))
    assert m[2] == pytest.approx(3.0)
    assert m[3] == pytest.approx(np.pi / 2)
    assert m[0] == m[1] == 0.0


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-3, 3),
       st.floats(-10, 10), st.floats(-10, 10), st.floats(-3, 3))
def test_frame_roundtrip(x, y, phi, px, py, pphi):
    pose = np.array([px, py, pphi])
    point = np.array([x, y])
    back = robot_to_world_frame(world_to_robot_frame(point, pose), pose)
    np.testing.assert_allclose(back, point, atol=1e-9)
    state = np.array([x, y, phi])
    sback = states_robot_to_world(states_world_to_robot(state, pose), pose)
    assert np.cos(sback[2]) == pytest.approx(np.cos(phi), abs=1e-9)
    assert np.sin(sback[2]) == pytest.approx(np.sin(phi), abs=1e-9)


def test_states_frame_roundtrip_batch():
    rng = np.random.default_rng(0)
    states = rng.normal(size=(6, 3))
    pose = np.array([1.0, -2.0, 0.7])
    back = states_robot_to_world(states_world_to_robot(states, pose), pose)
    np.testing.assert_allclose(back[:, :2], states[:, :2], atol=1e-9)


def test_world_roundtrip_json():
    w = spawn_episode(3)
    back = World.from_json(w.to_json(), w.config)
    np.testing.assert_array_equal(back.obstacles, w.obstacles)
    np.testing.assert_array_equal(back.start, w.start)


def test_infeasible_config_raises():
    # obstacles so dense that valid spawns are impossible
    cfg = WorldConfig(size=8.0, n_obstacles=(60, 60),
                      obstacle_radius=(2.0, 3.0), max_rejections=50)
    with pytest.raises(RuntimeError):
        spawn_episode(0, cfg)

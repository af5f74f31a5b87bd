"""Random 2D worlds, robot-centric rendering and observation vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import wrap_angle


@dataclass
class WorldConfig:
    size: float = 30.0
    n_obstacles: tuple = (4, 12)
    obstacle_radius: tuple = (0.1, 3.0)
    robot_radius: float = 1.0
    goal_radius: float = 0.5
    spawn_clearance: float = 0.3   # extra margin at start and goal
    min_start_goal_distance: float = 5.0
    dt: float = 0.3
    timeout: float = 60.0
    max_rejections: int = 1000


@dataclass
class World:
    obstacles: np.ndarray  # (N, 3): cx, cy, r
    start: np.ndarray      # (3,): x, y, phi
    goal: np.ndarray       # (2,)
    config: WorldConfig = field(default_factory=WorldConfig)

    def clearance(self, point):
        """Distance from a point to the closest obstacle surface."""
        if len(self.obstacles) == 0:
            return np.inf
        d = np.hypot(self.obstacles[:, 0] - point[0],
                     self.obstacles[:, 1] - point[1])
        return float(np.min(d - self.obstacles[:, 2]))

    def in_collision(self, point, radius=None):
        r = self.config.robot_radius if radius is None else radius
        return self.clearance(point) <= r

    def at_goal(self, point):
        return np.hypot(point[0] - self.goal[0],
                        point[1] - self.goal[1]) <= self.config.goal_radius

    def to_json(self):
        return {"obstacles": self.obstacles.tolist(),
                "start": self.start.tolist(), "goal": self.goal.tolist()}

    @classmethod
    def from_json(cls, d, config=None):
        return cls(obstacles=np.asarray(d["obstacles"], dtype=np.float64)
                   .reshape(-1, 3),
                   start=np.asarray(d["start"], dtype=np.float64),
                   goal=np.asarray(d["goal"], dtype=np.float64),
                   config=config or WorldConfig())


def spawn_episode(seed, config=None) -> World:
    """Deterministically sample a valid world from a seed."""
    config = config or WorldConfig()
    rng = np.random.default_rng(seed)
    margin = config.robot_radius + config.spawn_clearance
    for _ in range(config.max_rejections):
        n = int(rng.integers(config.n_obstacles[0],
                             config.n_obstacles[1] + 1))
        radii = rng.uniform(*config.obstacle_radius, size=n)
        centers = rng.uniform(0.0, config.size, size=(n, 2))
        obstacles = np.column_stack([centers, radii])
        world = World(obstacles=obstacles, start=np.zeros(3),
                      goal=np.zeros(2), config=config)
        start = np.append(rng.uniform(0.0, config.size, size=2),
                          rng.uniform(-np.pi, np.pi))
        goal = rng.uniform(0.0, config.size, size=2)
        if world.clearance(start[:2]) <= margin:
            continue
        if world.clearance(goal) <= margin:
            continue
        if np.hypot(*(goal - start[:2])) < config.min_start_goal_distance:
            continue
        world.start, world.goal = start, goal
        return world
    raise RuntimeError("could not sample a valid world in %d attempts"
                       % config.max_rejections)


def render_occupancy(world, pose, image_size=64, resolution=5.0, anchor=None):
    """Binary robot-centric occupancy image.

    The robot sits at the anchor pixel (default: image center) with its
    heading pointing along the image up-axis.  A pixel is 1 iff its center
    lies inside any obstacle.
    """
    pose = np.asarray(pose, dtype=np.float64)
    if anchor is None:
        anchor = (image_size // 2, image_size // 2)  # (row, col)
    rows, cols = np.meshgrid(np.arange(image_size), np.arange(image_size),
                             indexing="ij")
    up = (anchor[0] - rows) / resolution
    right = (cols - anchor[1]) / resolution
    c, s = np.cos(pose[2]), np.sin(pose[2])
    # up-axis is the heading, right-axis the heading rotated by -90 degrees
    px = pose[0] + up * c + right * s
    py = pose[1] + up * s - right * c
    image = np.zeros((image_size, image_size), dtype=np.uint8)
    for cx, cy, r in world.obstacles:
        image |= ((px - cx) ** 2 + (py - cy) ** 2 <= r * r)
    return image


def measurements(world, state, current_control):
    """(v, omega, goal distance, goal bearing in the robot frame)."""
    state = np.asarray(state, dtype=np.float64)
    current_control = np.asarray(current_control, dtype=np.float64)
    dx, dy = world.goal[0] - state[0], world.goal[1] - state[1]
    d_goal = np.hypot(dx, dy)
    theta = float(wrap_angle(np.arctan2(dy, dx) - state[2])) \
        if d_goal > 0 else 0.0
    return np.array([current_control[0], current_control[1], d_goal, theta])


def world_to_robot_frame(points, pose):
    """Transform world points (.., 2) into the robot frame of ``pose``."""
    points = np.asarray(points, dtype=np.float64)
    c, s = np.cos(pose[2]), np.sin(pose[2])
    rel = points - np.asarray(pose[:2])
    return np.stack([rel[..., 0] * c + rel[..., 1] * s,
                     -rel[..., 0] * s + rel[..., 1] * c], axis=-1)


def robot_to_world_frame(points, pose):
    points = np.asarray(points, dtype=np.float64)
    c, s = np.cos(pose[2]), np.sin(pose[2])
    return np.stack([pose[0] + points[..., 0] * c - points[..., 1] * s,
                     pose[1] + points[..., 0] * s + points[..., 1] * c],
                    axis=-1)


def states_world_to_robot(states, pose):
    """Full (.., 3) unicycle states into the robot frame."""
    states = np.asarray(states, dtype=np.float64)
    xy = world_to_robot_frame(states[..., :2], pose)
    phi = wrap_angle(states[..., 2] - pose[2])
    return np.concatenate([xy, phi[..., None]], axis=-1)


def states_robot_to_world(states, pose):
    states = np.asarray(states, dtype=np.float64)
    xy = robot_to_world_frame(states[..., :2], pose)
    phi = wrap_angle(states[..., 2] + pose[2])
    return np.concatenate([xy, phi[..., None]], axis=-1)

"""Dynamic Window Approach expert used to generate demonstrations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constraints import (ACC_BOUNDS, OMEGA_BOUNDS, OMEGA_DOT_BOUNDS,
                          V_BOUNDS)
from .dynamics import wrap_angle


@dataclass
class DwaConfig:
    v_samples: int = 11
    omega_samples: int = 21
    rollout_horizon: float = 3.0   # s
    w_heading: float = 1.0
    w_clearance: float = 0.2
    w_velocity: float = 0.5
    w_lookthrough: float = 0.5
    clearance_saturation: float = 2.0  # m
    lookthrough_time: float = 3.0      # s
    v_bounds: tuple = V_BOUNDS
    omega_bounds: tuple = OMEGA_BOUNDS
    acc_bounds: tuple = ACC_BOUNDS
    omega_dot_bounds: tuple = OMEGA_DOT_BOUNDS

    def __post_init__(self):
        if self.v_samples < 2 or self.omega_samples < 2:
            raise ValueError("sample grid must be at least 2x2")
        for w in (self.w_heading, self.w_clearance, self.w_velocity,
                  self.w_lookthrough):
            if w <= 0:
                raise ValueError("scoring weights must be positive")


def _candidate_grid(current_control, config, dt):
    v0, om0 = current_control
    v_lo = max(config.v_bounds[0], v0 + config.acc_bounds[0] * dt)
    v_hi = min(config.v_bounds[1], v0 + config.acc_bounds[1] * dt)
    om_lo = max(config.omega_bounds[0], om0 + config.omega_dot_bounds[0] * dt)
    om_hi = min(config.omega_bounds[1], om0 + config.omega_dot_bounds[1] * dt)
    vs = np.linspace(v_lo, v_hi, config.v_samples)
    oms = np.linspace(om_lo, om_hi, config.omega_samples)
    grid = np.stack(np.meshgrid(vs, oms, indexing="ij"), axis=-1)
    return grid.reshape(-1, 2)


def _escape_rotation(world, state, current_control, config, dt):
    """Rotate in place toward the side with more free space.

    Used when the robot is stationary and every forward sample collides:
    standing still would be a permanent local minimum, so turning is the
    only way to make future forward arcs admissible again.
    """
    sign = 1.0
    if len(world.obstacles):
        rel = world.obstacles[:, :2] - state[:2]
        ang = wrap_angle(np.arctan2(rel[:, 1], rel[:, 0]) - state[2])
        d = (np.hypot(rel[:, 0], rel[:, 1]) - world.obstacles[:, 2]
             - world.config.robot_radius)
        left = d[ang >= 0].min() if np.any(ang >= 0) else np.inf
        right = d[ang < 0].min() if np.any(ang < 0) else np.inf
        sign = 1.0 if left >= right else -1.0
    om0 = current_control[1]
    om_hi = min(config.omega_bounds[1], om0 + config.omega_dot_bounds[1] * dt)
    om_lo = max(config.omega_bounds[0], om0 + config.omega_dot_bounds[0] * dt)
    return np.array([0.0, om_hi if sign > 0 else om_lo])


def dwa_plan(world, state, current_control, config=None, dt=0.3):
    """Pick the best admissible (v, omega) for one control interval.

    Simulates every window sample for the rollout horizon and drops samples
    that collide.  A sample whose straight full-speed continuation beyond
    the horizon is also collision free (the "look-through") is admissible
    at any speed; otherwise it must keep enough end clearance to brake to
    a stop.  Survivors are scored by goal heading, clearance, speed and
    the look-through bonus.  When nothing survives the robot brakes along
    the best-clearance arc, and when already stopped it rotates in place
    toward the freer side.
    """
    config = config or DwaConfig()
    state = np.asarray(state, dtype=np.float64)
    cand = _candidate_grid(current_control, config, dt)
    n_steps = max(1, int(round(config.rollout_horizon / dt)))
    obs = world.obstacles

    x = np.full(len(cand), state[0])
    y = np.full(len(cand), state[1])
    phi = np.full(len(cand), state[2])
    v, om = cand[:, 0], cand[:, 1]
    r_robot = world.config.robot_radius
    min_clear = np.full(len(cand), np.inf)
    for _ in range(n_steps):
        x = x + v * np.cos(phi) * dt
        y = y + v * np.sin(phi) * dt
        phi = wrap_angle(phi + om * dt)
        if len(obs):
            d = (np.hypot(x[:, None] - obs[None, :, 0],
                          y[:, None] - obs[None, :, 1])
                 - obs[None, :, 2] - r_robot)
            min_clear = np.minimum(min_clear, d.min(axis=1))

    # look-through: continue straight at full speed past the rollout end;
    # a free continuation distinguishes a passable gap from a dead end.
    # Collisions past the goal do not count.
    ext_free = np.ones(len(cand), dtype=bool)
    if len(obs) and config.lookthrough_time > 0:
        xe, ye = x.copy(), y.copy()
        reached = np.hypot(world.goal[0] - xe, world.goal[1] - ye) < 1.0
        vmax = config.v_bounds[1]
        for _ in range(int(round(config.lookthrough_time / dt))):
            xe = xe + vmax * np.cos(phi) * dt
            ye = ye + vmax * np.sin(phi) * dt
            d = (np.hypot(xe[:, None] - obs[None, :, 0],
                          ye[:, None] - obs[None, :, 1])
                 - obs[None, :, 2] - r_robot)
            ext_free &= reached | (d.min(axis=1) > 0.0)
            reached |= np.hypot(world.goal[0] - xe, world.goal[1] - ye) < 1.0

    if len(obs):
        end_clear = (np.hypot(x[:, None] - obs[None, :, 0],
                              y[:, None] - obs[None, :, 1])
                     - obs[None, :, 2] - r_robot).min(axis=1)
    else:
        end_clear = np.full(len(cand), np.inf)
    stop_dist = v * v / (2.0 * config.acc_bounds[1])
    ok = (min_clear > 0.0) & (v > 1e-9) & (ext_free | (end_clear > stop_dist))

    if not np.any(ok):
        v0 = current_control[0]
        if abs(v0) > 1e-9:
            if v0 > 0:
                v_stop = max(v0 + config.acc_bounds[0] * dt, 0.0)
            else:
                v_stop = min(v0 + config.acc_bounds[1] * dt, 0.0)
            brake = np.abs(v - v_stop) < 1e-9
            if np.any(brake):
                idx = np.where(brake)[0]
                order = np.lexsort((np.abs(om[idx]), -min_clear[idx]))
                return cand[idx[order[0]]].copy()
            return np.array([v_stop, 0.0])
        return _escape_rotation(world, state, current_control, config, dt)

    bearing = np.abs(wrap_angle(
        np.arctan2(world.goal[1] - y, world.goal[0] - x) - phi))
    heading_score = 1.0 - bearing / np.pi
    sat = config.clearance_saturation
    clearance_score = np.minimum(min_clear, sat) / sat
    velocity_score = v / config.v_bounds[1]
    score = np.where(ok,
                     config.w_heading * heading_score
                     + config.w_clearance * clearance_score
                     + config.w_velocity * velocity_score
                     + config.w_lookthrough * ext_free.astype(float),
                     -np.inf)
    # ties: smaller |omega| wins, then smaller grid index
    order = np.lexsort((np.arange(len(cand)), np.abs(om), -score))
    return cand[order[0]].copy()

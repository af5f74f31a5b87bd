"""Closed-loop rollout harness and the metric suite."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constraints import (ACC_BOUNDS, OMEGA_BOUNDS, OMEGA_DOT_BOUNDS,
                          V_BOUNDS, ConstraintSet, select_obstacles)
from .dynamics import flatness_controls, unicycle_step
from .world import measurements, render_occupancy

KCV_TOLERANCE = 1e-4


@dataclass
class Observation:
    """Everything a planner sees at one control interval."""
    image: np.ndarray
    measurements: np.ndarray      # (v, omega, d_goal, theta_goal)
    constraint_set: ConstraintSet
    pose: np.ndarray              # world frame, for bookkeeping only


@dataclass
class EpisodeResult:
    outcome: str                  # goal | collision | timeout | failed
    states: np.ndarray            # (T+1, 3) world frame
    controls: np.ndarray          # (T, 2) applied controls
    time: float

    @property
    def reached_goal(self):
        return self.outcome == "goal"

    @property
    def collided(self):
        return self.outcome == "collision"

    def to_json(self):
        return {"outcome": self.outcome, "time": self.time,
                "states": self.states.tolist(),
                "controls": self.controls.tolist()}

    @classmethod
    def from_json(cls, d):
        return cls(outcome=d["outcome"], time=d["time"],
                   states=np.asarray(d["states"], dtype=np.float64),
                   controls=np.asarray(d["controls"],
                                       dtype=np.float64).reshape(-1, 2))


def make_observation(world, state, current_control, image_size=64,
                     resolution=5.0):
    image = render_occupancy(world, state, image_size, resolution)
    meas = measurements(world, state, current_control)
    cset = ConstraintSet(
        obstacles=select_obstacles(world.obstacles, state),
        prev_control=np.asarray(current_control, dtype=np.float64),
        robot_radius=world.config.robot_radius)
    return Observation(image=image, measurements=meas, constraint_set=cset,
                       pose=np.asarray(state, dtype=np.float64))


def rollout_closed_loop(policy, world, image_size=64, resolution=5.0):
    """Run a planner in feedback until goal, collision or timeout.

    ``policy(observation)`` must return a robot-frame state trajectory of
    shape (H+1, 3) starting at the origin; the first control interval is
    recovered from it by unicycle flatness and applied.
    """
    cfg = world.config
    max_steps = int(round(cfg.timeout / cfg.dt))
    state = world.start.copy()
    control = np.zeros(2)
    states, controls = [state.copy()], []
    outcome = "timeout"
    for _ in range(max_steps):
        if world.at_goal(state):
            outcome = "goal"
            break
        obs = make_observation(world, state, control, image_size, resolution)
        plan = np.asarray(policy(obs), dtype=np.float64)
        if not np.all(np.isfinite(plan)):
            outcome = "failed"
            break
        control = flatness_controls(plan[:2], cfg.dt)[0]
        state = unicycle_step(state, control, cfg.dt)
        states.append(state.copy())
        controls.append(control.copy())
        if world.in_collision(state[:2]):
            outcome = "collision"
            break
    else:
        if world.at_goal(state):
            outcome = "goal"
    return EpisodeResult(outcome=outcome, states=np.array(states),
                         controls=np.array(controls).reshape(-1, 2),
                         time=len(controls) * cfg.dt)


def count_kinematic_violations(controls, dt, tol=KCV_TOLERANCE,
                               initial_control=(0.0, 0.0)):
    """Steps whose v, omega or finite-difference accelerations leave the box."""
    controls = np.asarray(controls, dtype=np.float64).reshape(-1, 2)
    if len(controls) == 0:
        return 0
    prev = np.vstack([np.asarray(initial_control, dtype=np.float64),
                      controls[:-1]])
    acc = (controls - prev) / dt
    bad = ((controls[:, 0] > V_BOUNDS[1] + tol)
           | (controls[:, 0] < V_BOUNDS[0] - tol)
           | (controls[:, 1] > OMEGA_BOUNDS[1] + tol)
           | (controls[:, 1] < OMEGA_BOUNDS[0] - tol)
           | (acc[:, 0] > ACC_BOUNDS[1] + tol)
           | (acc[:, 0] < ACC_BOUNDS[0] - tol)
           | (acc[:, 1] > OMEGA_DOT_BOUNDS[1] + tol)
           | (acc[:, 1] < OMEGA_DOT_BOUNDS[0] - tol))
    return int(np.count_nonzero(bad))


def compute_metrics(results, expert_times, dt, tol=KCV_TOLERANCE):
    """Aggregate GRR, CR, Time and KCV over a set of episodes.

    ``expert_times`` gives the expert completion time per episode (same
    order).  Time averages only over goal-reaching episodes; the KCV
    percentage denominator is the total number of applied control steps.
    """
    if len(results) == 0:
        raise ValueError("empty episode set")
    n = len(results)
    reached = [r.reached_goal for r in results]
    collided = [r.collided for r in results]
    time_ratios = [r.time / et * 100.0
                   for r, et, ok in zip(results, expert_times, reached)
                   if ok and et > 0]
    total_steps = sum(len(r.controls) for r in results)
    kcv = sum(count_kinematic_violations(r.controls, dt, tol)
              for r in results)
    return {
        "episodes": n,
        "grr_pct": 100.0 * sum(reached) / n,
        "cr_pct": 100.0 * sum(collided) / n,
        "time_pct": float(np.mean(time_ratios)) if time_ratios else
        float("nan"),
        "kcv_count": kcv,
        "kcv_pct": 100.0 * kcv / total_steps if total_steps else 0.0,
        "steps": total_steps,
    }

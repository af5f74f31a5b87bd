"""Discrete-time robot models: explicit-Euler steps, residuals, flatness.

States and controls are plain float64 arrays so the same functions serve the
simulator, the expert and the tests.  The differentiable completion in
:mod:`cil.core` mirrors the same update equations on graph tensors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PI = np.pi
TWO_PI = 2.0 * np.pi

DEFAULT_WHEELBASE = 2.85  # m


def wrap_angle(a):
    """Wrap angles into (-pi, pi]."""
    return PI - np.mod(PI - np.asarray(a, dtype=np.float64), TWO_PI)


@dataclass(frozen=True)
class UnicycleState:
    x: float
    y: float
    phi: float

    def as_array(self):
        return np.array([self.x, self.y, float(wrap_angle(self.phi))])


@dataclass(frozen=True)
class UnicycleControl:
    v: float
    omega: float

    def as_array(self):
        return np.array([self.v, self.omega], dtype=np.float64)


@dataclass(frozen=True)
class BicycleState:
    x: float
    y: float
    phi: float
    v: float

    def as_array(self):
        return np.array([self.x, self.y, float(wrap_angle(self.phi)), self.v])


@dataclass(frozen=True)
class BicycleControl:
    a: float
    delta: float

    def as_array(self):
        return np.array([self.a, self.delta], dtype=np.float64)


def unicycle_step(state, control, dt):
    """One explicit-Euler step of the unicycle; supports leading batch dims."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    state = np.asarray(state, dtype=np.float64)
    control = np.asarray(control, dtype=np.float64)
    if not (np.all(np.isfinite(state)) and np.all(np.isfinite(control))):
        raise ValueError("non-finite state or control")
    x, y, phi = state[..., 0], state[..., 1], state[..., 2]
    v, omega = control[..., 0], control[..., 1]
    out = np.empty(np.broadcast_shapes(state.shape[:-1],
                                       control.shape[:-1]) + (3,))
    out[..., 0] = x + v * np.cos(phi) * dt
    out[..., 1] = y + v * np.sin(phi) * dt
    out[..., 2] = wrap_angle(phi + omega * dt)
    return out


def bicycle_step(state, control, dt, wheelbase=DEFAULT_WHEELBASE):
    """Kinematic bicycle Euler step; state (x, y, phi, v), control (a, delta)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if wheelbase <= 0:
        raise ValueError("wheelbase must be positive")
    state = np.asarray(state, dtype=np.float64)
    control = np.asarray(control, dtype=np.float64)
    if not (np.all(np.isfinite(state)) and np.all(np.isfinite(control))):
        raise ValueError("non-finite state or control")
    if np.any(np.abs(control[..., 1]) >= PI / 2):
        raise ValueError("steering angle magnitude must be below pi/2")
    x, y, phi, v = (state[..., i] for i in range(4))
    a, delta = control[..., 0], control[..., 1]
    out = np.empty(np.broadcast_shapes(state.shape[:-1],
                                       control.shape[:-1]) + (4,))
    out[..., 0] = x + v * np.cos(phi) * dt
    out[..., 1] = y + v * np.sin(phi) * dt
    out[..., 2] = wrap_angle(phi + (v / wheelbase) * np.tan(delta) * dt)
    out[..., 3] = v + a * dt
    return out


def equality_residual(state_seq, control_seq, dt, model="unicycle",
                      wheelbase=DEFAULT_WHEELBASE):
    """Per-step defect x_{k+1} - f(x_k, u_k), heading via wrapped difference.

    Returns a flat vector of length H * n_x.
    """
    state_seq = np.asarray(state_seq, dtype=np.float64)
    control_seq = np.asarray(control_seq, dtype=np.float64)
    h = len(control_seq)
    if len(state_seq) != h + 1:
        raise ValueError("state sequence must be one longer than controls")
    if h == 0:
        return np.zeros(0)
    step = unicycle_step if model == "unicycle" else (
        lambda s, u, t: bicycle_step(s, u, t, wheelbase))
    pred = step(state_seq[:-1], control_seq, dt)
    res = state_seq[1:] - pred
    res[:, 2] = wrap_angle(res[:, 2])
    return res.ravel()


def flatness_controls(state_seq, dt):
    """Recover (v, omega) from consecutive unicycle poses.

    v is the signed displacement magnitude, with the sign taken from the
    projection onto the heading at the earlier pose; omega is the wrapped
    heading difference rate.  Exactly inverts the Euler step while
    |omega * dt| < pi.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    state_seq = np.asarray(state_seq, dtype=np.float64)
    if len(state_seq) < 2:
        raise ValueError("need at least two poses")
    d = state_seq[1:, :2] - state_seq[:-1, :2]
    phi = state_seq[:-1, 2]
    proj = d[:, 0] * np.cos(phi) + d[:, 1] * np.sin(phi)
    v = np.where(proj >= 0, 1.0, -1.0) * np.hypot(d[:, 0], d[:, 1]) / dt
    omega = wrap_angle(state_seq[1:, 2] - state_seq[:-1, 2]) / dt
    return np.stack([v, omega], axis=1)

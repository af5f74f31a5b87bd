"""Kinematic model oracles and flatness round trips."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cil.dynamics import (
    bicycle_step,
    equality_residual,
    flatness_controls,
    unicycle_step,
    wrap_angle,
)

angles = st.floats(-10.0, 10.0)


def test_unicycle_step_hand_case():
    # v=1, omega=0, phi=0, dt=0.3 -> straight ahead
    new = unicycle_step(np.array([1.0, 2.0, 0.0]), np.array([1.0, 0.0]), 0.3)
    np.testing.assert_allclose(new, [1.3, 2.0, 0.0])


def test_unicycle_step_turn_hand_case():
    # heading pi/2: motion along +y, heading increments by omega*dt
    new = unicycle_step(np.array([0.0, 0.0, np.pi / 2]),
                        np.array([2.0, 0.5]), 0.1)
    np.testing.assert_allclose(new, [2.0 * 0.1 * np.cos(np.pi / 2),
                                     0.2, np.pi / 2 + 0.05], atol=1e-15)


def test_bicycle_step_hand_case():
    # [x, y, phi, v]; straight road, accelerating
    new = bicycle_step(np.array([0.0, 0.0, 0.0, 2.0]),
                       np.array([0.5, 0.0]), 0.1)
    np.testing.assert_allclose(new, [0.2, 0.0, 0.0, 2.05])


def test_bicycle_step_steering_sign():
    new = bicycle_step(np.array([0.0, 0.0, 0.0, 1.0]),
                       np.array([0.0, 0.3]), 0.1, wheelbase=2.85)
    assert new[2] == pytest.approx(1.0 / 2.85 * np.tan(0.3) * 0.1)


def test_bicycle_rejects_right_angle_steering():
    with pytest.raises(ValueError):
        bicycle_step(np.zeros(4), np.array([0.0, np.pi / 2]), 0.1)


def test_nonfinite_state_rejected():
    with pytest.raises(ValueError):
        unicycle_step(np.array([np.inf, 0.0, 0.0]), np.zeros(2), 0.3)


@settings(max_examples=100, deadline=None)
@given(angles)
def test_wrap_angle_range_and_equivalence(a):
    w = wrap_angle(a)
    assert -np.pi < w <= np.pi
    assert np.cos(w) == pytest.approx(np.cos(a), abs=1e-12)
    assert np.sin(w) == pytest.approx(np.sin(a), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-0.5, 1.0), st.floats(-0.7, 0.7)),
                min_size=1, max_size=10),
       angles)
def test_flatness_inverts_completion(controls, phi0):
    dt = 0.3
    u = np.asarray(controls)
    state = np.array([0.0, 0.0, wrap_angle(phi0)])
    states = [state]
    for uk in u:
        state = unicycle_step(state, uk, dt)
        states.append(state)
    states = np.asarray(states)
    u_rec = flatness_controls(states, dt)
    np.testing.assert_allclose(u_rec, u, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-0.5, 1.0), st.floats(-0.7, 0.7)),
                min_size=1, max_size=10))
def test_unrolled_trajectory_has_zero_residual(controls):
    dt = 0.3
    u = np.asarray(controls)
    state = np.array([1.0, -2.0, 0.4])
    states = [state]
    for uk in u:
        state = unicycle_step(state, uk, dt)
        states.append(state)
    h = equality_residual(np.asarray(states), u, dt)
    assert h.shape == (3 * len(u),)
    np.testing.assert_allclose(h, 0.0, atol=1e-12)


def test_residual_flags_inconsistent_state():
    dt = 0.3
    u = np.array([[1.0, 0.0]])
    states = np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]])  # should be 0.3
    h = equality_residual(states, u, dt)
    assert h[0] == pytest.approx(0.2)


def test_flatness_reverse_motion_sign():
    dt = 0.3
    states = np.array([[0.0, 0.0, 0.0], [-0.3, 0.0, 0.0]])
    u = flatness_controls(states, dt)
    assert u[0, 0] == pytest.approx(-1.0)

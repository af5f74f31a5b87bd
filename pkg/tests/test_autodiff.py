"""Gradient oracle: backward pass vs central finite differences."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cil.autodiff import (
    ParamStore,
    Tensor,
    concat,
    conv2d,
    grad,
    l2norm,
    matmul,
    maximum_const,
    maxpool2d,
    minimum_const,
    mul,
    relu,
    reshape,
    sigmoid,
    sqrt,
    square,
    stack,
    sub,
    tcos,
    texp,
    tmean,
    transpose,
    tsin,
    tsum,
    ttanh,
    wrap_angle_t,
)


def fd_grad(f, x, eps=1e-6):
    """Central finite differences of a scalar function of one array."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        g[idx] = (f(xp) - f(xm)) / (2 * eps)
    return g


def check_against_fd(build, x, rtol=1e-5, eps=1e-6):
    t = Tensor(x, requires_grad=True)
    out = build(t)
    (g,) = grad(out, [t])
    g_fd = fd_grad(lambda xv: float(build(Tensor(xv)).data), x, eps)
    scale = np.maximum(np.abs(g_fd), 1.0)
    assert np.max(np.abs(g.data - g_fd) / scale) <= rtol, (
        build, g.data, g_fd)


SMOOTH_UNARY = [tsin, tcos, texp, ttanh, sigmoid, square,
                lambda t: sqrt(square(t) + 1.0),
                lambda t: l2norm(t) + tsum(square(t)),
                lambda t: tmean(square(t)),
                lambda t: tsum(mul(t, t), axis=0)]


def _random_graph(rng, x):
    """Compose 3-6 random smooth primitives into a scalar.

    Intermediates are squashed when they grow, keeping curvature small
    enough for the finite-difference oracle to stay accurate.
    """
    t = x
    for _ in range(rng.integers(3, 7)):
        op = SMOOTH_UNARY[rng.integers(len(SMOOTH_UNARY))]
        t = op(t)
        if t.data.ndim == 0:
            t = t * Tensor(rng.normal(size=x.shape)) + square(x)
        if np.max(np.abs(t.data)) > 3.0:
            t = ttanh(mul(t, 0.3))
    return tsum(ttanh(t))


def test_random_primitive_graphs_match_fd():
    rng = np.random.default_rng(0)
    for i in range(100):
        shape = tuple(rng.integers(1, 5, size=rng.integers(1, 3)))
        x = rng.normal(scale=0.8, size=shape)
        check_against_fd(lambda t: _random_graph(
            np.random.default_rng(i), t), x)


@pytest.mark.parametrize("op", [tsin, tcos, texp, ttanh, sigmoid, square])
def test_unary_ops_match_fd(op):
    x = np.random.default_rng(1).normal(size=(3, 4))
    check_against_fd(lambda t: tsum(square(op(t))), x)


def test_matmul_and_structure_ops_match_fd():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))

    def build(t):
        m = matmul(t, Tensor(b))
        m = transpose(m, (1, 0))
        m = reshape(m, (3, 2))
        c = concat([m, m], axis=1)
        s = stack([c[:, 0], c[:, 1]], axis=1)
        return tsum(square(s)) + tsum(square(c))

    check_against_fd(build, a)


def test_conv_and_pool_match_fd():
    rng = np.random.default_rng(3)
    img = rng.normal(size=(2, 1, 8, 8))
    w = rng.normal(size=(2, 1, 3, 3), scale=0.5)

    def build(t):
        out = conv2d(t, Tensor(w), Tensor(np.zeros(2)))
        out = maxpool2d(relu(out), 2)
        return tsum(square(out))

    check_against_fd(build, img, rtol=1e-4)


def test_getitem_scatter_roundtrip_gradient():
    x = np.arange(6.0).reshape(2, 3)
    t = Tensor(x, requires_grad=True)
    out = tsum(square(t[0, :])) + tsum(t[1, 1:])
    (g,) = grad(out, [t])
    expected = np.array([[0.0, 2.0, 4.0], [0.0, 1.0, 1.0]])
    np.testing.assert_allclose(g.data, expected)


def test_relu_subgradient_zero_at_kink():
    t = Tensor(np.array([0.0, -1.0, 2.0]), requires_grad=True)
    (g,) = grad(tsum(relu(t)), [t])
    np.testing.assert_array_equal(g.data, [0.0, 0.0, 1.0])


def test_clamp_ops_match_fd_away_from_kinks():
    x = np.array([-2.0, -0.4, 0.6, 2.5])
    check_against_fd(lambda t: tsum(square(
        minimum_const(maximum_const(t, -1.0), 1.0))), x)


def test_wrap_angle_gradient_is_identity_off_the_seam():
    x = np.array([-2.5, -0.1, 0.0, 1.3, 3.0])
    t = Tensor(x, requires_grad=True)
    (g,) = grad(tsum(square(wrap_angle_t(t))), [t])
    np.testing.assert_allclose(g.data, 2 * np.mod(x + np.pi, 2 * np.pi)
                               - 2 * np.pi, atol=1e-12)


def test_double_backward_of_squared_relu():
    t = Tensor(np.array(3.0), requires_grad=True)
    y = square(relu(t))
    (g1,) = grad(y, [t], create_graph=True)
    (g2,) = grad(tsum(g1), [t])
    assert g1.data == pytest.approx(6.0)
    assert g2.data == pytest.approx(2.0)


def test_double_backward_through_inner_gradient_step():
    # d/dx of f(x - gamma * f'(x)) for f = x^4: oracle by sympy-free algebra
    x0, gamma = 1.2, 0.01

    def outer(t):
        y = square(square(t))
        (dy,) = grad(y, [t], create_graph=True)
        u = sub(t, mul(dy, gamma))
        return square(square(u))

    t = Tensor(np.array(x0), requires_grad=True)
    (g,) = grad(outer(t), [t])
    u0 = x0 - gamma * 4 * x0 ** 3
    expected = 4 * u0 ** 3 * (1 - gamma * 12 * x0 ** 2)
    assert g.data == pytest.approx(expected, rel=1e-12)


def test_second_order_conv_unsupported():
    rng = np.random.default_rng(4)
    t = Tensor(rng.normal(size=(1, 1, 6, 6)), requires_grad=True)
    w = Tensor(rng.normal(size=(1, 1, 3, 3)), requires_grad=True)
    y = tsum(square(conv2d(t, w, Tensor(np.zeros(1)))))
    (g,) = grad(y, [t], create_graph=True)
    with pytest.raises(NotImplementedError):
        grad(tsum(square(g)), [t])


def test_fanout_accumulation():
    t = Tensor(np.array(2.0), requires_grad=True)
    y = t * t + t * t  # same leaf reached along four paths
    (g,) = grad(y, [t])
    assert g.data == pytest.approx(8.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=6),
       st.floats(-3, 3), st.floats(-3, 3))
def test_gradient_is_linear_in_upstream_weights(xs, a, b):
    x = np.asarray(xs)
    t = Tensor(x, requires_grad=True)
    (g1,) = grad(tsum(square(t)), [t])
    (g2,) = grad(tsum(tsin(t)), [t])
    (g3,) = grad(a * tsum(square(t)) + b * tsum(tsin(t)), [t])
    np.testing.assert_allclose(g3.data, a * g1.data + b * g2.data,
                               atol=1e-12)


def test_unreached_leaf_gets_zero_gradient():
    a = Tensor(np.array(1.0), requires_grad=True)
    b = Tensor(np.array(2.0), requires_grad=True)
    ga, gb = grad(square(a), [a, b])
    assert ga.data == pytest.approx(2.0)
    assert gb.data == 0.0


def test_grad_requires_scalar_output():
    t = Tensor(np.zeros(3), requires_grad=True)
    with pytest.raises(ValueError):
        grad(square(t), [t])


# -- optimizer and checkpoints ----------------------------------------------

def test_adam_first_step_moves_by_lr_against_gradient_sign():
    ps = ParamStore({"w": (3,)})
    ps.get("w")[:] = [1.0, -2.0, 0.5]
    ps.accumulate_grads({"w": np.array([0.3, -0.1, 0.0])})
    ps.adam_step(lr=0.01)
    # bias-corrected first step has magnitude ~= lr wherever grad != 0
    np.testing.assert_allclose(ps.get("w"),
                               [1.0 - 0.01, -2.0 + 0.01, 0.5],
                               atol=1e-9)


def test_adam_rejects_nonfinite_gradient():
    ps = ParamStore({"w": (2,)})
    ps.accumulate_grads({"w": np.array([np.nan, 0.0])})
    with pytest.raises(ValueError):
        ps.adam_step(lr=0.01)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    ps = ParamStore({"a": (2, 3), "b": (4,)})
    rng = np.random.default_rng(5)
    ps.values[:] = rng.normal(size=ps.values.size)
    ps.accumulate_grads({"a": rng.normal(size=(2, 3))})
    ps.adam_step(lr=1e-3)
    path = tmp_path / "ck.npz"
    ps.save(path, meta={"note": "x"})
    ps2, meta = ParamStore.load(path)
    np.testing.assert_array_equal(ps.values, ps2.values)
    np.testing.assert_array_equal(ps.adam_m, ps2.adam_m)
    assert ps2.step_count == ps.step_count
    assert meta == {"note": "x"}


def test_checkpoint_shape_mismatch_rejected(tmp_path):
    import json

    ps = ParamStore({"a": (2,)})
    path = tmp_path / "ck.npz"
    ps.save(path)
    with np.load(path) as data:
        arrays = dict(data)
    header = json.loads(bytes(arrays["__header__"]).decode())
    header["shapes"]["a"] = [3]  # corrupt the declared shape
    arrays["__header__"] = np.frombuffer(
        json.dumps(header).encode(), dtype=np.uint8)
    np.savez(path, **arrays)
    with pytest.raises(ValueError):
        ParamStore.load(path)


def test_param_tensors_are_views():
    ps = ParamStore({"w": (2,)})
    t = ps.tensors()[0]
    ps.values[:] = [4.0, 5.0]
    np.testing.assert_array_equal(t.data, [4.0, 5.0])

"""Reverse-mode automatic differentiation over a dynamic graph.

Tensors wrap float64 numpy arrays and record their parents together with a
vector-Jacobian closure.  Adjoints are themselves expressed with Tensor ops,
so a gradient obtained with ``grad(..., create_graph=True)`` stays inside the
graph and can be differentiated again.  This is what lets a penalty-gradient
step inside a forward pass be trained through.

Convolution and max-pooling adjoints are first-order only; differentiating
through them a second time raises.
"""

from __future__ import annotations

import numpy as np

PI = np.pi
TWO_PI = 2.0 * np.pi

_CHECK_FINITE = False


def set_check_finite(flag: bool) -> None:
    """Globally toggle per-op non-finite checks (slow, for debugging/tests)."""
    global _CHECK_FINITE
    _CHECK_FINITE = bool(flag)


class Tensor:
    __slots__ = ("data", "parents", "vjp", "requires_grad")

    def __init__(self, data, parents=(), vjp=None, requires_grad=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.parents = tuple(parents)
        self.vjp = vjp
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in self.parents)
        self.requires_grad = requires_grad
        if _CHECK_FINITE and not np.all(np.isfinite(self.data)):
            raise FloatingPointError(
                "non-finite value in node id=%d" % id(self))

    # -- basic introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return "Tensor(%r, requires_grad=%s)" % (self.data, self.requires_grad)

    # -- operator sugar ------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(x)


def leaf(x) -> Tensor:
    return Tensor(x, requires_grad=True)


def _make(data, parents, vjp):
    # build the vjp closure only when a backward pass could reach this node
    if any(p.requires_grad for p in parents):
        return Tensor(data, parents, vjp)
    return Tensor(data)


# ---------------------------------------------------------------------------
# broadcasting helpers
# ---------------------------------------------------------------------------

def _unbroadcast(g: Tensor, shape) -> Tensor:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = tsum(g, axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = tsum(g, axis=axes, keepdims=True)
    if g.shape != shape:
        g = reshape(g, shape)
    return g


# ---------------------------------------------------------------------------
# arithmetic primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape),
                            _unbroadcast(neg(g), b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(mul(g, b), a.shape),
                            _unbroadcast(mul(g, a), b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data / b.data, (a, b),
                 lambda g: (_unbroadcast(div(g, b), a.shape),
                            _unbroadcast(neg(div(mul(g, a), mul(b, b))),
                                         b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (neg(g),))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * a.data, (a,),
                 lambda g: (mul(g, mul(a, 2.0)),))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = _make(np.sqrt(a.data), (a,), None)
    if out.requires_grad:
        out.vjp = lambda g: (div(g, mul(out, 2.0)),)
    return out


def texp(a) -> Tensor:
    a = as_tensor(a)
    out = _make(np.exp(a.data), (a,), None)
    if out.requires_grad:
        out.vjp = lambda g: (mul(g, out),)
    return out


def tsin(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.sin(a.data), (a,), lambda g: (mul(g, tcos(a)),))


def tcos(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.cos(a.data), (a,), lambda g: (neg(mul(g, tsin(a))),))


def ttanh(a) -> Tensor:
    a = as_tensor(a)
    out = _make(np.tanh(a.data), (a,), None)
    if out.requires_grad:
        out.vjp = lambda g: (mul(g, sub(1.0, square(out))),)
    return out


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = (a.data > 0.0).astype(np.float64)  # adjoint at exactly 0 is 0
    return _make(a.data * mask, (a,), lambda g: (mul(g, Tensor(mask)),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    d = a.data
    y = np.empty_like(d)
    pos = d >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ey = np.exp(d[~pos])
    y[~pos] = ey / (1.0 + ey)
    out = _make(y, (a,), None)
    if out.requires_grad:
        out.vjp = lambda g: (mul(g, mul(out, sub(1.0, out))),)
    return out


def minimum_const(a, c) -> Tensor:
    a = as_tensor(a)
    c = np.asarray(c, dtype=np.float64)
    mask = (a.data <= c).astype(np.float64)
    return _make(np.minimum(a.data, c), (a,),
                 lambda g: (mul(g, Tensor(mask)),))


def maximum_const(a, c) -> Tensor:
    a = as_tensor(a)
    c = np.asarray(c, dtype=np.float64)
    mask = (a.data >= c).astype(np.float64)
    return _make(np.maximum(a.data, c), (a,),
                 lambda g: (mul(g, Tensor(mask)),))


def wrap_angle_t(a) -> Tensor:
    """Wrap into (-pi, pi]; derivative is 1 almost everywhere."""
    a = as_tensor(a)
    return _make(PI - np.mod(PI - a.data, TWO_PI), (a,), lambda g: (g,))


# ---------------------------------------------------------------------------
# shape primitives
# ---------------------------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,),
                 lambda g: (reshape(g, a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), (a,),
                 lambda g: (transpose(g, inv),))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    return _make(a.data[idx], (a,), lambda g: (scatter(g, idx, a.shape),))


def scatter(g, idx, shape) -> Tensor:
    """Place ``g`` at ``idx`` inside zeros of ``shape`` (dual of getitem)."""
    g = as_tensor(g)
    out = np.zeros(shape, dtype=np.float64)
    out[idx] = g.data
    return _make(out, (g,), lambda gg: (getitem(gg, idx),))


def concat(parts, axis=0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def vjp(g):
        grads = []
        for p, o, n in zip(parts, offsets[:-1], sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(int(o), int(o + n))
            grads.append(getitem(g, tuple(sl)))
        return tuple(grads)

    return _make(np.concatenate([p.data for p in parts], axis=axis),
                 tuple(parts), vjp)


def stack(parts, axis=0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    expanded = []
    for p in parts:
        shape = list(p.shape)
        shape.insert(axis if axis >= 0 else p.ndim + 1 + axis, 1)
        expanded.append(reshape(p, tuple(shape)))
    return concat(expanded, axis=axis)


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(np.broadcast_to(a.data, shape).copy(), (a,),
                 lambda g: (_unbroadcast(g, a.shape),))


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        axes = tuple(range(a.ndim))
    elif isinstance(axis, int):
        axes = (axis % a.ndim,)
    else:
        axes = tuple(ax % a.ndim for ax in axis)

    def vjp(g):
        if not keepdims:
            kshape = tuple(1 if i in axes else n
                           for i, n in enumerate(a.shape))
            g = reshape(g, kshape)
        return (broadcast_to(g, a.shape),)

    return _make(a.data.sum(axis=axes or None, keepdims=keepdims), (a,), vjp)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    total = tsum(a, axis=axis, keepdims=keepdims)
    return mul(total, total.size / a.size if a.size else 1.0)


def l2norm(a) -> Tensor:
    """Euclidean norm with subgradient 0 at the origin."""
    a = as_tensor(a)
    out = _make(np.sqrt(np.sum(a.data * a.data)), (a,), None)
    if out.requires_grad:
        out.vjp = lambda g: (
            mul(a, div(g, maximum_const(out, 1e-300))),)
    return out


# ---------------------------------------------------------------------------
# linear algebra / conv primitives
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data @ b.data, (a, b),
                 lambda g: (matmul(g, transpose(b)), matmul(transpose(a), g)))


def _second_order_unsupported(_g):
    raise NotImplementedError(
        "second-order derivatives through conv/pool are not supported")


def _im2col(x, kh, kw, stride):
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw),
                                                       axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]
    b, c, oh, ow = windows.shape[:4]
    return (windows.transpose(0, 2, 3, 1, 4, 5).reshape(b, oh * ow,
                                                        c * kh * kw),
            oh, ow)


def conv2d(x, w, bias=None, stride=1) -> Tensor:
    """Valid-padding 2D convolution, NCHW input, (F, C, kh, kw) kernel."""
    x, w = as_tensor(x), as_tensor(w)
    f, c, kh, kw = w.shape
    cols, oh, ow = _im2col(x.data, kh, kw, stride)
    wmat = w.data.reshape(f, c * kh * kw)
    out = cols @ wmat.T
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data
    out = out.transpose(0, 2, 1).reshape(x.shape[0], f, oh, ow)
    parents = (x, w) if bias is None else (x, w, bias)

    def vjp(g):
        gd = g.data.reshape(x.shape[0], f, oh * ow).transpose(0, 2, 1)
        gw = np.einsum("bpk,bpf->fk", cols, gd).reshape(w.shape)
        gcols = gd @ wmat
        gx = np.zeros(x.shape, dtype=np.float64)
        gcols = gcols.reshape(x.shape[0], oh, ow, c, kh, kw)
        for i in range(kh):
            for j in range(kw):
                gx[:, :, i:i + oh * stride:stride,
                   j:j + ow * stride:stride] += (
                       gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2))
        grads = [Tensor(gx, (g,), _second_order_unsupported),
                 Tensor(gw, (g,), _second_order_unsupported)]
        if bias is not None:
            grads.append(Tensor(gd.sum(axis=(0, 1)), (g,),
                                _second_order_unsupported))
        return tuple(grads)

    return _make(out, parents, vjp)


def maxpool2d(x, size=2) -> Tensor:
    """Non-overlapping 2D max pooling (trailing remainder cropped)."""
    x = as_tensor(x)
    b, c, h, w = x.shape
    oh, ow = h // size, w // size
    d = x.data[:, :, :oh * size, :ow * size]
    windows = d.reshape(b, c, oh, size, ow, size).transpose(0, 1, 2, 4, 3, 5)
    flat = windows.reshape(b, c, oh, ow, size * size)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def vjp(g):
        gflat = np.zeros(flat.shape, dtype=np.float64)
        np.put_along_axis(gflat, arg[..., None], g.data[..., None], axis=-1)
        gx = np.zeros(x.shape, dtype=np.float64)
        gx[:, :, :oh * size, :ow * size] = (
            gflat.reshape(b, c, oh, ow, size, size)
            .transpose(0, 1, 2, 4, 3, 5).reshape(b, c, oh * size, ow * size))
        return (Tensor(gx, (g,), _second_order_unsupported),)

    return _make(out, (x,), vjp)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def _topo_order(root: Tensor):
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    return order


def grad(output: Tensor, inputs, create_graph=False):
    """Gradient of a scalar ``output`` w.r.t. each tensor in ``inputs``.

    Leaves with no path to the output get a zero gradient.  With
    ``create_graph=True`` the returned tensors remain differentiable.
    """
    if output.size != 1:
        raise ValueError("backward requires a scalar output, got shape %s"
                         % (output.shape,))
    adjoint = {id(output): Tensor(np.ones(output.shape))}
    for node in reversed(_topo_order(output)):
        g = adjoint.get(id(node))
        if g is None or node.vjp is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            prev = adjoint.get(id(parent))
            adjoint[id(parent)] = pg if prev is None else add(prev, pg)
    results = []
    for inp in inputs:
        g = adjoint.get(id(inp))
        if g is None:
            g = Tensor(np.zeros(inp.shape))
        elif not create_graph:
            g = g.detach()
        results.append(g)
    return results

"""Flat parameter storage, Adam updates and checkpoint IO."""

from __future__ import annotations

import json
from collections import OrderedDict

import numpy as np

from .tensor import Tensor

CHECKPOINT_VERSION = 1


class ParamStore:
    """All learnable weights in one flat float64 buffer.

    Named parameters are numpy views into the buffer, exposed as leaf
    tensors, so an in-place Adam update is immediately visible to the next
    forward pass.
    """

    def __init__(self, shapes):
        self.shapes = OrderedDict((k, tuple(v)) for k, v in shapes.items())
        self.offsets = OrderedDict()
        off = 0
        for name, shape in self.shapes.items():
            n = int(np.prod(shape)) if shape else 1
            self.offsets[name] = (off, n)
            off += n
        self.values = np.zeros(off, dtype=np.float64)
        self.grads = np.zeros(off, dtype=np.float64)
        self.adam_m = np.zeros(off, dtype=np.float64)
        self.adam_v = np.zeros(off, dtype=np.float64)
        self.step_count = 0
        self._tensors = {
            name: Tensor(self._view(name), requires_grad=True)
            for name in self.shapes
        }
        # Tensor() copies via asarray only if dtype differs; re-point to views
        for name in self.shapes:
            self._tensors[name].data = self._view(name)

    def _view(self, name):
        off, n = self.offsets[name]
        return self.values[off:off + n].reshape(self.shapes[name])

    @property
    def n_params(self):
        return self.values.size

    def tensor(self, name) -> Tensor:
        return self._tensors[name]

    def tensors(self):
        return [self._tensors[name] for name in self.shapes]

    def names(self):
        return list(self.shapes)

    def get(self, name) -> np.ndarray:
        return self._view(name)

    def set(self, name, value) -> None:
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.shapes[name]:
            raise ValueError("shape mismatch for %r: %s != %s"
                             % (name, value.shape, self.shapes[name]))
        self._view(name)[...] = value

    def zero_grad(self) -> None:
        self.grads[:] = 0.0

    def accumulate_grads(self, named_grads) -> None:
        for name, g in named_grads.items():
            off, n = self.offsets[name]
            self.grads[off:off + n] += np.asarray(g, dtype=np.float64).ravel()

    def adam_step(self, lr, beta1=0.9, beta2=0.999, eps=1e-8) -> None:
        """Bias-corrected Adam update; zeroes gradients afterwards."""
        if not np.all(np.isfinite(self.grads)):
            raise ValueError("non-finite gradient, aborting optimizer step")
        self.step_count += 1
        g = self.grads
        self.adam_m *= beta1
        self.adam_m += (1.0 - beta1) * g
        self.adam_v *= beta2
        self.adam_v += (1.0 - beta2) * g * g
        mhat = self.adam_m / (1.0 - beta1 ** self.step_count)
        vhat = self.adam_v / (1.0 - beta2 ** self.step_count)
        self.values -= lr * mhat / (np.sqrt(vhat) + eps)
        self.zero_grad()

    # -- checkpointing -------------------------------------------------------
    def save(self, path, meta=None) -> None:
        header = {
            "version": CHECKPOINT_VERSION,
            "shapes": {k: list(v) for k, v in self.shapes.items()},
            "step_count": self.step_count,
            "meta": meta or {},
        }
        arrays = {"param/" + name: self._view(name) for name in self.shapes}
        arrays["adam/m"] = self.adam_m
        arrays["adam/v"] = self.adam_v
        np.savez(path, __header__=np.frombuffer(
            json.dumps(header, sort_keys=True).encode(), dtype=np.uint8),
            **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            header = json.loads(bytes(data["__header__"]).decode())
            if header.get("version") != CHECKPOINT_VERSION:
                raise ValueError("unsupported checkpoint version %r"
                                 % header.get("version"))
            store = cls(OrderedDict(
                (k, tuple(v)) for k, v in header["shapes"].items()))
            for name in store.shapes:
                arr = data["param/" + name]
                if tuple(arr.shape) != store.shapes[name]:
                    raise ValueError("checkpoint shape mismatch for %r" % name)
                store.set(name, arr)
            store.adam_m[:] = data["adam/m"]
            store.adam_v[:] = data["adam/v"]
            store.step_count = int(header["step_count"])
        return store, header["meta"]


def load_checkpoint_meta(path) -> dict:
    with np.load(path) as data:
        return json.loads(bytes(data["__header__"]).decode())["meta"]

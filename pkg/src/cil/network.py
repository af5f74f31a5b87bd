"""Policy network: small conv encoder plus fully connected heads.

Maps a binary robot-centric occupancy image and a measurement vector to
either a bounded control sequence (completion-based planners) or a raw
state sequence (direct regression baseline).
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    ParamStore,
    Tensor,
    concat,
    conv2d,
    matmul,
    maxpool2d,
    relu,
    reshape,
    sigmoid,
)
from .constraints import OMEGA_BOUNDS, V_BOUNDS


@dataclass
class NetConfig:
    image_size: int = 64
    channels: int = 1
    conv_channels: tuple = (6, 16)
    kernel_size: int = 5
    pool_size: int = 2
    hidden_size: int = 200
    n_measurements: int = 4
    horizon: int = 10
    head: str = "controls"  # or "states"
    dt: float = 0.3
    resolution: float = 5.0  # px per metre
    v_bounds: tuple = V_BOUNDS
    omega_bounds: tuple = OMEGA_BOUNDS
    goal_distance_scale: float = 10.0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.head not in ("controls", "states"):
            raise ValueError("unknown head kind %r" % self.head)

    @property
    def conv_flat_size(self):
        s = self.image_size
        for _ in self.conv_channels:
            s = (s - self.kernel_size + 1) // self.pool_size
        if s <= 0:
            raise ValueError("image too small for the conv stack")
        return s * s * self.conv_channels[-1]

    @property
    def n_meas_internal(self):
        # goal bearing enters as (cos, sin)
        return self.n_measurements + 1

    @property
    def output_size(self):
        return self.horizon * (2 if self.head == "controls" else 4)

    def to_json(self):
        d = self.__dict__.copy()
        for k in ("conv_channels", "v_bounds", "omega_bounds"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        for k in ("conv_channels", "v_bounds", "omega_bounds"):
            d[k] = tuple(d[k])
        return cls(**d)


def _param_shapes(cfg: NetConfig):
    shapes = OrderedDict()
    c_in = cfg.channels
    for i, c_out in enumerate(cfg.conv_channels):
        shapes["conv%d/w" % i] = (c_out, c_in, cfg.kernel_size,
                                  cfg.kernel_size)
        shapes["conv%d/b" % i] = (c_out,)
        c_in = c_out
    shapes["fc0/w"] = (cfg.conv_flat_size + cfg.n_meas_internal,
                       cfg.hidden_size)
    shapes["fc0/b"] = (cfg.hidden_size,)
    shapes["fc1/w"] = (cfg.hidden_size, cfg.hidden_size)
    shapes["fc1/b"] = (cfg.hidden_size,)
    shapes["out/w"] = (cfg.hidden_size, cfg.output_size)
    shapes["out/b"] = (cfg.output_size,)
    return shapes


class PolicyNetwork:
    """Conv encoder + two hidden layers + head, all float64."""

    def __init__(self, config: NetConfig, seed=0, params=None):
        self.config = config
        if params is None:
            params = ParamStore(_param_shapes(config))
            rng = np.random.default_rng(seed)
            for name, shape in params.shapes.items():
                if name.endswith("/w"):
                    fan_in = int(np.prod(shape[1:])) if "conv" in name \
                        else shape[0]
                else:
                    fan_in = max(shape[0], 1)
                bound = 1.0 / np.sqrt(fan_in)
                params.set(name, rng.uniform(-bound, bound, size=shape))
        self.params = params

    # -- measurement handling ------------------------------------------------
    def _normalize_measurements(self, meas):
        """(v, omega, d_goal, theta_goal) -> scaled 5-vector batch."""
        meas = np.asarray(meas, dtype=np.float64)
        cfg = self.config
        v_w = cfg.v_bounds[1] - cfg.v_bounds[0]
        om_w = cfg.omega_bounds[1] - cfg.omega_bounds[0]
        return np.stack([
            meas[:, 0] / v_w,
            meas[:, 1] / om_w,
            meas[:, 2] / cfg.goal_distance_scale,
            np.cos(meas[:, 3]),
            np.sin(meas[:, 3]),
        ], axis=1)

    # -- forward passes ------------------------------------------------------
    def encode(self, images, meas):
        """Latent after the first fully connected layer; (B, hidden) tensor."""
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 3:
            images = images[:, None]
        cfg = self.config
        if images.shape[1:] != (cfg.channels, cfg.image_size, cfg.image_size):
            raise ValueError("image shape mismatch: %s" % (images.shape,))
        meas = np.asarray(meas, dtype=np.float64).reshape(
            len(images), cfg.n_measurements)
        h = Tensor(images)
        p = self.params.tensor
        for i in range(len(cfg.conv_channels)):
            h = maxpool2d(relu(conv2d(h, p("conv%d/w" % i),
                                      p("conv%d/b" % i))), cfg.pool_size)
        h = reshape(h, (len(images), cfg.conv_flat_size))
        h = concat([h, Tensor(self._normalize_measurements(meas))], axis=1)
        return relu(matmul(h, p("fc0/w")) + p("fc0/b"))

    def _head(self, latent):
        p = self.params.tensor
        h = relu(matmul(latent, p("fc1/w")) + p("fc1/b"))
        return matmul(h, p("out/w")) + p("out/b")

    def predict_controls(self, latent):
        """Sigmoid-bounded control sequence tensor of shape (B, H, 2)."""
        cfg = self.config
        z = reshape(self._head(latent), (latent.shape[0], cfg.horizon, 2))
        lo = np.array([cfg.v_bounds[0], cfg.omega_bounds[0]])
        hi = np.array([cfg.v_bounds[1], cfg.omega_bounds[1]])
        return sigmoid(z) * (hi - lo) + lo

    def predict_states(self, latent):
        """Raw state head tensor (B, H, 4): x, y, cos phi, sin phi."""
        cfg = self.config
        return reshape(self._head(latent), (latent.shape[0], cfg.horizon, 4))

    def forward(self, images, meas):
        latent = self.encode(images, meas)
        if self.config.head == "controls":
            return self.predict_controls(latent)
        return self.predict_states(latent)

    # -- numeric conveniences ------------------------------------------------
    def predict_control_sequence(self, image, meas):
        """Single-sample numeric control sequence (H, 2)."""
        return self.forward(np.asarray(image)[None],
                            np.asarray(meas)[None]).data[0]

    def predict_state_sequence(self, image, meas):
        """Single-sample numeric state sequence (H, 3) via the state head."""
        raw = self.forward(np.asarray(image)[None],
                           np.asarray(meas)[None]).data[0]
        return states_from_head(raw)

    # -- persistence ---------------------------------------------------------
    def save(self, path):
        self.params.save(path, meta={"net_config": self.config.to_json()})

    @classmethod
    def load(cls, path):
        params, meta = ParamStore.load(path)
        return cls(NetConfig.from_json(meta["net_config"]), params=params)


def states_from_head(raw, prev_heading=0.0):
    """(H, 4) raw head output -> (H, 3) states with normalized headings.

    Degenerate (cos, sin) pairs fall back to the previous step's heading.
    """
    raw = np.asarray(raw, dtype=np.float64)
    out = np.empty((len(raw), 3))
    heading = prev_heading
    for k, (x, y, c, s) in enumerate(raw):
        n = np.hypot(c, s)
        if n >= 1e-6:
            heading = np.arctan2(s / n, c / n)
        out[k] = (x, y, heading)
    return out

"""The five compared planners sharing one encoder, dataset and harness.

il       state head, imitation distance, no correction
sl       state head, soft loss (constraints on the predicted states)
dkm      control head + completion, imitation distance
dkm_leq  dkm checkpoint with test-time correction only
dcil     control head + completion + correction in the training graph,
         trained with the soft loss
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import (
    Tensor,
    concat,
    grad,
    maximum_const,
    mul,
    relu,
    sqrt,
    square,
    stack,
    sub,
    tsum,
)
from .constraints import ConstraintSet, OBSTACLE_MARGIN
from .core import (
    CorrectionConfig,
    complete,
    complete_t,
    correct,
    correct_t,
    distance_loss_t,
    equality_residual_rows_t,
    inequality_rows_t,
    parts_to_states,
)
from .data import iter_batches, load_manifest, load_split
from .network import NetConfig, PolicyNetwork, states_from_head

METHOD_KINDS = ("il", "sl", "dkm", "dkm_leq", "dcil")


@dataclass(frozen=True)
class MethodSpec:
    kind: str

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ValueError("unknown method kind %r" % self.kind)

    @property
    def head(self):
        return "states" if self.kind in ("il", "sl") else "controls"

    @property
    def loss(self):
        return "soft" if self.kind in ("sl", "dcil") else "distance"

    @property
    def correct_at_train(self):
        return self.kind == "dcil"

    @property
    def correct_at_test(self):
        return self.kind in ("dkm_leq", "dcil")

    @property
    def trains_as(self):
        """dkm_leq shares dkm checkpoints; correction is test-time only."""
        return "dkm" if self.kind == "dkm_leq" else self.kind


@dataclass
class TrainConfig:
    epochs: int = 4
    batch_size: int = 128
    learning_rate: float = 1e-3
    seed: int = 0
    lam_g: float = 0.5
    lam_h: float = 0.5
    squared_penalty_loss: bool = False  # ablation: square the loss norms
    correction: CorrectionConfig = field(default_factory=CorrectionConfig)


def _row_norm(t, squared=False):
    """Per-sample L2 norm over rows of a (B, R) tensor, safe at zero."""
    s = tsum(square(t), axis=1)
    return s if squared else sqrt(maximum_const(s, 1e-300))


def _normalized_heading(raw):
    """(cos, sin) tensors from the raw state head, guarded normalization."""
    c_raw, s_raw = raw[:, :, 2], raw[:, :, 3]
    n = sqrt(maximum_const(square(c_raw) + square(s_raw), 1e-12))
    return c_raw / n, s_raw / n


def _state_head_distance(raw, gt_states):
    c, s = _normalized_heading(raw)
    d = (square(sub(raw[:, :, 0], Tensor(gt_states[:, :, 0])))
         + square(sub(raw[:, :, 1], Tensor(gt_states[:, :, 1])))
         + square(sub(c, Tensor(np.cos(gt_states[:, :, 2]))))
         + square(sub(s, Tensor(np.sin(gt_states[:, :, 2])))))
    return tsum(d, axis=1)


def _state_head_soft_terms(raw, batch, cset, dt):
    """Constraint terms for the state-head soft loss.

    Controls are recovered from the predicted states (projection onto the
    predicted heading and the heading-difference sine rate), then the same
    box and obstacle rows are evaluated; the equality term penalizes the
    displacement component inconsistent with those controls.
    """
    b, h = raw.shape[0], raw.shape[1]
    c, s = _normalized_heading(raw)
    px, py = raw[:, :, 0], raw[:, :, 1]
    zeros = Tensor(np.zeros((b, 1)))
    ones = Tensor(np.ones((b, 1)))
    px_full = concat([zeros, px], axis=1)
    py_full = concat([zeros, py], axis=1)
    c_full = concat([ones, c], axis=1)
    s_full = concat([zeros, s], axis=1)
    dx = sub(px_full[:, 1:], px_full[:, :-1])
    dy = sub(py_full[:, 1:], py_full[:, :-1])
    c_prev, s_prev = c_full[:, :-1], s_full[:, :-1]
    v = mul(mul(dx, c_prev) + mul(dy, s_prev), 1.0 / dt)
    # sine of the heading increment as a small-angle rate proxy
    om = mul(sub(mul(s_full[:, 1:], c_prev), mul(c_full[:, 1:], s_prev)),
             1.0 / dt)
    u = stack([v, om], axis=2)
    parts = {"x": px_full, "y": py_full}
    g = inequality_rows_t(u, parts, cset, batch["obstacles"],
                          batch["prev_controls"], dt)
    h_rows = concat([sub(dx, mul(mul(v, c_prev), dt)),
                     sub(dy, mul(mul(v, s_prev), dt))], axis=1)
    return g, h_rows


class Planner:
    """Trainable planner with the shared train_step/plan interface."""

    def __init__(self, spec: MethodSpec, net_config: NetConfig,
                 train_config: TrainConfig | None = None, network=None):
        self.spec = spec
        self.train_config = train_config or TrainConfig()
        cfg = replace(net_config, head=spec.head) \
            if net_config.head != spec.head else net_config
        self.network = network or PolicyNetwork(
            cfg, seed=self.train_config.seed)
        self.template_cset = ConstraintSet()

    @property
    def config(self):
        return self.network.config

    # -- training ------------------------------------------------------------
    def batch_loss(self, batch):
        """Mean per-sample loss over a decoded batch, as a scalar tensor."""
        tc = self.train_config
        cfg = self.config
        dt = cfg.dt
        latent = self.network.encode(batch["images"], batch["measurements"])
        if self.spec.head == "states":
            raw = self.network.predict_states(latent)
            per_sample = _state_head_distance(raw, batch["gt_states"])
            if self.spec.loss == "soft" and (tc.lam_g or tc.lam_h):
                g, h_rows = _state_head_soft_terms(
                    raw, batch, self.template_cset, dt)
                alpha = self.template_cset.alpha(
                    cfg.horizon, batch["obstacles"].shape[1])
                gn = _row_norm(relu(mul(g, Tensor(alpha))),
                               tc.squared_penalty_loss)
                hn = _row_norm(h_rows, tc.squared_penalty_loss)
                per_sample = per_sample + tc.lam_g * gn + tc.lam_h * hn
        else:
            u = self.network.predict_controls(latent)
            x0 = np.zeros((len(batch["images"]), 3))
            if self.spec.correct_at_train and tc.correction.n_grad > 0:
                u, parts = correct_t(u, x0, self.template_cset,
                                     tc.correction, dt,
                                     obstacles=batch["obstacles"],
                                     prev_control=batch["prev_controls"])
            else:
                parts = complete_t(u, x0, dt)
            per_sample = distance_loss_t(parts, batch["gt_states"])
            if self.spec.loss == "soft" and (tc.lam_g or tc.lam_h):
                g = inequality_rows_t(u, parts, self.template_cset,
                                      batch["obstacles"],
                                      batch["prev_controls"], dt)
                alpha = self.template_cset.alpha(
                    cfg.horizon, batch["obstacles"].shape[1])
                gn = _row_norm(relu(mul(g, Tensor(alpha))),
                               tc.squared_penalty_loss)
                per_sample = per_sample + tc.lam_g * gn
                if tc.lam_h:
                    h_rows = equality_residual_rows_t(u, parts, dt)
                    per_sample = per_sample + tc.lam_h * _row_norm(
                        h_rows, tc.squared_penalty_loss)
        return mul(tsum(per_sample), 1.0 / len(batch["images"]))

    def train_step(self, batch):
        loss = self.batch_loss(batch)
        params = self.network.params
        grads = grad(loss, params.tensors())
        params.zero_grad()
        params.accumulate_grads(
            dict(zip(params.names(), (g.data for g in grads))))
        params.adam_step(self.train_config.learning_rate)
        return float(loss.data)

    def eval_loss(self, batch):
        return float(self.batch_loss(batch).data)

    # -- planning ------------------------------------------------------------
    def plan(self, obs):
        """Robot-frame state trajectory (H+1, 3) for one observation."""
        return self.plan_with_controls(obs)[0]

    def plan_with_controls(self, obs):
        """(states (H+1, 3), controls (H, 2) or None) for one observation.

        State-head methods have no control sequence of their own.
        """
        if self.spec.head == "states":
            states = self.network.predict_state_sequence(obs.image,
                                                         obs.measurements)
            return np.vstack([np.zeros(3), states]), None
        u = self.network.predict_control_sequence(obs.image,
                                                  obs.measurements)
        traj = complete(u, np.zeros(3), self.config.dt)
        if self.spec.correct_at_test:
            traj = correct(traj, obs.constraint_set,
                           self.train_config.correction)
        return traj.state_seq, traj.control_seq

    # -- persistence ---------------------------------------------------------
    def save(self, path):
        self.network.params.save(path, meta={
            "net_config": self.config.to_json(),
            "method": self.spec.kind,
        })

    @classmethod
    def load(cls, path, kind=None, train_config=None):
        from .autodiff import ParamStore
        params, meta = ParamStore.load(path)
        kind = kind or meta.get("method", "dcil")
        net = PolicyNetwork(NetConfig.from_json(meta["net_config"]),
                            params=params)
        return cls(MethodSpec(kind), net.config, train_config, network=net)


def build_method(kind, net_config, train_config=None) -> Planner:
    return Planner(MethodSpec(kind), net_config, train_config)


def train_method(kind, dataset_dir, out_dir, net_config=None,
                 train_config=None, log=None):
    """Train one method on a generated dataset; writes checkpoint + curve."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tc = train_config or TrainConfig()
    manifest = load_manifest(dataset_dir)
    nc = net_config or NetConfig(
        image_size=manifest["config"]["image_size"],
        resolution=manifest["config"]["resolution"],
        horizon=manifest["config"]["horizon"],
        dt=manifest["config"]["world"]["dt"])
    spec = MethodSpec(kind)
    planner = build_method(spec.trains_as, nc, tc)
    train_records = load_split(dataset_dir, "train")
    val_records = load_split(dataset_dir, "val")
    curve = []
    t0 = time.time()
    for epoch in range(tc.epochs):
        losses = []
        for batch in iter_batches(train_records, tc.batch_size,
                                  tc.seed + 1000 * epoch, nc.image_size):
            losses.append(planner.train_step(batch))
        val_losses = [planner.eval_loss(b) for b in iter_batches(
            val_records, tc.batch_size, 0, nc.image_size)]
        curve.append({"epoch": epoch,
                      "train_loss": float(np.mean(losses)),
                      "val_loss": float(np.mean(val_losses))
                      if val_losses else float("nan")})
        if log:
            log("epoch %d: train %.4f val %.4f (%.0fs)"
                % (epoch, curve[-1]["train_loss"], curve[-1]["val_loss"],
                   time.time() - t0))
    ckpt = out / ("%s.npz" % kind)
    planner.spec = spec  # restore the requested kind (dkm_leq trains as dkm)
    planner.save(ckpt)
    with open(out / ("%s_curve.csv" % kind), "w") as f:
        f.write("epoch,train_loss,val_loss\n")
        for row in curve:
            f.write("%d,%.10g,%.10g\n"
                    % (row["epoch"], row["train_loss"], row["val_loss"]))
    return {"checkpoint": str(ckpt), "curve": curve}

"""Completion, penalty-gradient correction, training losses, inference.

The network predicts a control sequence; :func:`complete` unrolls the
dynamics so the equality constraints hold by construction, and
:func:`correct` descends the squared ReLU penalty of the inequality rows
w.r.t. the controls, with the state part either linearized along the
completion Jacobian or recompleted.  Everything here is built from graph
tensors, so a training loss can be backpropagated through the whole chain,
including the correction steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    Tensor,
    concat,
    grad,
    l2norm,
    mul,
    relu,
    square,
    stack,
    sub,
    tcos,
    tsin,
    tsum,
    wrap_angle_t,
)
from .constraints import ConstraintSet, bicycle_rows_t, unicycle_rows_t
from .dynamics import DEFAULT_WHEELBASE, equality_residual, wrap_angle


@dataclass
class Trajectory:
    """Interleaved plan: H controls and H+1 states, state_seq[0] measured."""
    control_seq: np.ndarray  # (H, n_u)
    state_seq: np.ndarray    # (H+1, n_x)
    dt: float

    def __post_init__(self):
        self.control_seq = np.asarray(self.control_seq, dtype=np.float64)
        self.state_seq = np.asarray(self.state_seq, dtype=np.float64)
        if len(self.state_seq) != len(self.control_seq) + 1:
            raise ValueError("state sequence must be one longer than controls")
        if not (np.all(np.isfinite(self.control_seq))
                and np.all(np.isfinite(self.state_seq))):
            raise ValueError("non-finite trajectory")

    @property
    def horizon(self):
        return len(self.control_seq)


@dataclass
class CorrectionConfig:
    gamma: float = 1e-3
    n_grad: int = 5
    mode: str = "linearized"  # or "recompleted"

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.n_grad < 0:
            raise ValueError("n_grad must be non-negative")
        if self.mode not in ("linearized", "recompleted"):
            raise ValueError("unknown correction mode %r" % self.mode)


# ---------------------------------------------------------------------------
# tensor-level building blocks (batched; B may be 1)
# ---------------------------------------------------------------------------

def complete_t(u, x0, dt, model="unicycle", wheelbase=DEFAULT_WHEELBASE):
    """Unroll the dynamics from measured states.

    u: (B, H, n_u) tensor; x0: (B, n_x) array.  Returns per-component state
    tensors of shape (B, H+1): (x, y, phi) or (x, y, phi, v).
    """
    b = u.shape[0]
    xs = [Tensor(x0[:, 0])]
    ys = [Tensor(x0[:, 1])]
    phis = [Tensor(x0[:, 2])]
    vs = [Tensor(x0[:, 3])] if model == "bicycle" else None
    for k in range(u.shape[1]):
        c, s = tcos(phis[k]), tsin(phis[k])
        if model == "unicycle":
            vk, omk = u[:, k, 0], u[:, k, 1]
            xs.append(xs[k] + vk * c * dt)
            ys.append(ys[k] + vk * s * dt)
            phis.append(wrap_angle_t(phis[k] + omk * dt))
        else:
            ak, dk = u[:, k, 0], u[:, k, 1]
            xs.append(xs[k] + vs[k] * c * dt)
            ys.append(ys[k] + vs[k] * s * dt)
            phis.append(wrap_angle_t(
                phis[k] + vs[k] * (tsin(dk) / tcos(dk)) * (dt / wheelbase)))
            vs.append(vs[k] + ak * dt)
    parts = {"x": stack(xs, axis=1), "y": stack(ys, axis=1),
             "phi": stack(phis, axis=1)}
    if vs is not None:
        parts["v"] = stack(vs, axis=1)
    return parts


def completion_jvp_unicycle(u, parts, du, dt):
    """Directional derivative of the unicycle completion along du.

    Built from graph tensors so a linearized state update stays
    differentiable.  Returns (dx, dy, dphi) tensors of shape (B, H+1).
    """
    b, h = u.shape[0], u.shape[1]
    zero = Tensor(np.zeros(b))
    dxs, dys, dphis = [zero], [zero], [zero]
    for k in range(h):
        c, s = tcos(parts["phi"][:, k]), tsin(parts["phi"][:, k])
        vk = u[:, k, 0]
        dvk, domk = du[:, k, 0], du[:, k, 1]
        dxs.append(dxs[k] + (dvk * c - vk * s * dphis[k]) * dt)
        dys.append(dys[k] + (dvk * s + vk * c * dphis[k]) * dt)
        dphis.append(dphis[k] + domk * dt)
    return stack(dxs, axis=1), stack(dys, axis=1), stack(dphis, axis=1)


def inequality_rows_t(u, parts, cset, obstacles, prev_control, dt):
    if cset.model == "unicycle":
        return unicycle_rows_t(u[:, :, 0], u[:, :, 1],
                               parts["x"][:, 1:], parts["y"][:, 1:],
                               obstacles, prev_control, cset, dt)
    return bicycle_rows_t(u[:, :, 0], u[:, :, 1],
                          parts["x"][:, 1:], parts["y"][:, 1:],
                          parts["phi"][:, 1:], parts["v"][:, 1:], cset, dt)


def penalty_t(g, alpha):
    """Summed squared ReLU penalty over batch and rows (scalar tensor)."""
    return tsum(square(relu(mul(g, Tensor(alpha)))))


def correct_t(u, x0, cset, config, dt, obstacles=None, prev_control=None,
              model=None, wheelbase=DEFAULT_WHEELBASE):
    """Penalty-gradient correction on a batch of control tensors.

    Returns (corrected u, corrected state parts).  The chain stays inside
    the graph, so gradients of a downstream loss flow through every step.
    """
    model = model or cset.model
    if obstacles is None:
        obs = cset.obstacles if cset.obstacles is not None else np.zeros(
            (0, 3))
        obstacles = np.broadcast_to(obs, (u.shape[0],) + obs.shape)
    if prev_control is None:
        prev_control = np.broadcast_to(cset.prev_control,
                                       (u.shape[0], 2))
    alpha = cset.alpha(u.shape[1], obstacles.shape[1]
                       if cset.model == "unicycle" else None)
    parts = complete_t(u, x0, dt, model, wheelbase)
    out_parts = parts
    for i in range(config.n_grad):
        g = inequality_rows_t(u, parts, cset, obstacles, prev_control, dt)
        p = penalty_t(g, alpha)
        (du,) = grad(p, [u], create_graph=True)
        if config.mode == "linearized" and model == "unicycle":
            if i == config.n_grad - 1:
                dx, dy, dphi = completion_jvp_unicycle(u, parts, du, dt)
                out_parts = {
                    "x": sub(parts["x"], mul(dx, config.gamma)),
                    "y": sub(parts["y"], mul(dy, config.gamma)),
                    "phi": sub(parts["phi"], mul(dphi, config.gamma)),
                }
            u = sub(u, mul(du, config.gamma))
        else:
            u = sub(u, mul(du, config.gamma))
            parts = complete_t(u, x0, dt, model, wheelbase)
            out_parts = parts
        if i < config.n_grad - 1 and config.mode == "linearized" \
                and model == "unicycle":
            parts = complete_t(u, x0, dt, model, wheelbase)
    return u, out_parts


def parts_to_states(parts):
    comps = [parts["x"], parts["y"], parts["phi"]]
    if "v" in parts:
        comps.append(parts["v"])
    return stack(comps, axis=2)


def distance_loss_t(parts, gt_states):
    """Squared position plus heading-embedding distance, summed over k>=1.

    gt_states: (B, H, 3) array of future ground-truth unicycle states.
    Returns a (B,) tensor.
    """
    px, py, phi = parts["x"][:, 1:], parts["y"][:, 1:], parts["phi"][:, 1:]
    dx = square(sub(px, Tensor(gt_states[:, :, 0])))
    dy = square(sub(py, Tensor(gt_states[:, :, 1])))
    dc = square(sub(tcos(phi), Tensor(np.cos(gt_states[:, :, 2]))))
    ds = square(sub(tsin(phi), Tensor(np.sin(gt_states[:, :, 2]))))
    return tsum(dx + dy + dc + ds, axis=1)


def equality_residual_rows_t(u, parts, dt):
    """Unicycle defect rows of a (possibly linearized) state tensor batch."""
    res = []
    h = u.shape[1]
    for k in range(h):
        c, s = tcos(parts["phi"][:, k]), tsin(parts["phi"][:, k])
        vk, omk = u[:, k, 0], u[:, k, 1]
        res.append(sub(parts["x"][:, k + 1], parts["x"][:, k] + vk * c * dt))
        res.append(sub(parts["y"][:, k + 1], parts["y"][:, k] + vk * s * dt))
        res.append(wrap_angle_t(
            sub(parts["phi"][:, k + 1], parts["phi"][:, k] + omk * dt)))
    return stack(res, axis=1)  # (B, 3H)


# ---------------------------------------------------------------------------
# public single-sample API
# ---------------------------------------------------------------------------

def complete(u_seq, x0, dt, model="unicycle", wheelbase=DEFAULT_WHEELBASE):
    """Unroll controls from the measured state into a Trajectory."""
    u_seq = np.asarray(u_seq, dtype=np.float64)
    if not np.all(np.isfinite(u_seq)):
        raise ValueError("non-finite control sequence")
    x0 = np.asarray(x0, dtype=np.float64)
    parts = complete_t(Tensor(u_seq[None]), x0[None], dt, model, wheelbase)
    return Trajectory(control_seq=u_seq,
                      state_seq=parts_to_states(parts).data[0], dt=dt)


def correct(traj, cset, config, wheelbase=DEFAULT_WHEELBASE):
    """Apply n_grad penalty-gradient steps to a completed trajectory.

    Best-effort descent: an infeasible constraint set still yields a finite
    output with a non-increased penalty for small enough gamma.
    """
    u = Tensor(traj.control_seq[None], requires_grad=True)
    u_out, parts = correct_t(u, traj.state_seq[None, 0], cset, config,
                             traj.dt, wheelbase=wheelbase)
    return Trajectory(control_seq=u_out.data[0],
                      state_seq=parts_to_states(parts).data[0], dt=traj.dt)


def distance_loss(traj_states, gt_states):
    """Imitation distance between state sequences (k = 1..H)."""
    traj_states = np.asarray(traj_states, dtype=np.float64)
    gt_states = np.asarray(gt_states, dtype=np.float64)
    if traj_states.shape != gt_states.shape:
        raise ValueError("trajectory length mismatch")
    d = ((traj_states[:, 0] - gt_states[:, 0]) ** 2
         + (traj_states[:, 1] - gt_states[:, 1]) ** 2
         + (np.cos(traj_states[:, 2]) - np.cos(gt_states[:, 2])) ** 2
         + (np.sin(traj_states[:, 2]) - np.sin(gt_states[:, 2])) ** 2)
    return float(np.sum(d))


def soft_loss(traj, gt_states, cset, lam_g=0.5, lam_h=0.5):
    """Imitation distance plus weighted inequality/equality violation norms."""
    if lam_g < 0 or lam_h < 0:
        raise ValueError("loss weights must be non-negative")
    from .constraints import eval_inequalities
    if len(gt_states) != traj.horizon:
        raise ValueError("horizon mismatch")
    d = distance_loss(traj.state_seq[1:], gt_states)
    g = eval_inequalities(traj.state_seq, traj.control_seq, cset, traj.dt)
    alpha = cset.alpha(traj.horizon)
    gn = float(np.linalg.norm(np.maximum(alpha * g.values, 0.0)))
    h = equality_residual(traj.state_seq, traj.control_seq, traj.dt,
                          model=cset.model)
    hn = float(np.linalg.norm(h))
    return d + lam_g * gn + lam_h * hn


def dcil_infer(env_input, x_measured, network, cset, config):
    """Inference path: predict controls, complete, correct.

    env_input is an (image, measurement) pair consumed by the network.
    """
    image, meas = env_input
    u = network.predict_control_sequence(image, meas)
    traj = complete(u, x_measured, network.config.dt)
    return correct(traj, cset, config)

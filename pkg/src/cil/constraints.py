"""Inequality constraint construction and evaluation.

A :class:`ConstraintSet` describes the per-sample inequality rows: control
and finite-difference acceleration boxes, obstacle clearance circles, and
optionally a polyline driving corridor plus a stop line for the bicycle
model.  Rows are evaluated as graph tensors so the penalty can be
differentiated w.r.t. the control sequence through the completion chain.

Sign convention: a row value g <= 0 means the constraint is satisfied.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    Tensor,
    add,
    concat,
    maximum_const,
    minimum_const,
    mul,
    relu,
    sqrt,
    square,
    sub,
    tcos,
    tsin,
    tsum,
)

OBSTACLE_MARGIN = 0.1  # m, clearance beyond the summed radii
DUMMY_DISTANCE = 1e3   # m, padding circles that can never become active

# default kinematic boxes of the mobile-robot setup
V_BOUNDS = (-0.5, 1.0)         # m/s
OMEGA_BOUNDS = (-0.7, 0.7)     # rad/s
ACC_BOUNDS = (-0.2, 0.2)       # m/s^2
OMEGA_DOT_BOUNDS = (-0.7, 0.7)  # rad/s^2


@dataclass(frozen=True)
class Corridor:
    """Left/right boundary polylines, traversed in driving direction."""
    left: np.ndarray   # (M, 2)
    right: np.ndarray  # (M, 2)


@dataclass(frozen=True)
class StopLine:
    point: np.ndarray      # (2,)
    direction: np.ndarray  # (2,) unit travel direction; beyond-line is > 0


@dataclass
class ConstraintSet:
    """Everything needed to evaluate the inequality vector of one sample."""

    model: str = "unicycle"
    v_bounds: tuple = V_BOUNDS
    omega_bounds: tuple = OMEGA_BOUNDS
    acc_bounds: tuple = ACC_BOUNDS
    omega_dot_bounds: tuple = OMEGA_DOT_BOUNDS
    # bicycle-specific bounds
    v_max: float = 8.33
    steer_bounds: tuple = (-1.0, 1.0)
    obstacles: np.ndarray | None = None       # (K, 3): cx, cy, r
    corridor: Corridor | None = None
    stop_line: StopLine | None = None
    prev_control: np.ndarray = field(
        default_factory=lambda: np.zeros(2))     # measured control at k = -1
    robot_radius: float = 1.0
    footprint_offsets: tuple = (-0.7, 0.7, 2.1, 3.5)  # m along the heading
    footprint_radius: float = 1.1                      # m
    alpha_box: float = 1.0
    alpha_obstacle: float = 1.0
    alpha_corridor: float = 1.0
    alpha_stop: float = 2.0

    def __post_init__(self):
        for lo, hi in (self.v_bounds, self.omega_bounds, self.acc_bounds,
                       self.omega_dot_bounds, self.steer_bounds):
            if lo > hi:
                raise ValueError("box lower bound above upper bound")
        for a in (self.alpha_box, self.alpha_obstacle, self.alpha_corridor,
                  self.alpha_stop):
            if a <= 0:
                raise ValueError("constraint weights must be positive")
        if self.obstacles is not None:
            self.obstacles = np.asarray(self.obstacles, dtype=np.float64)
        self.prev_control = np.asarray(self.prev_control, dtype=np.float64)

    # -- row bookkeeping -----------------------------------------------------
    def labels(self, horizon, n_obstacles=None):
        h = horizon
        if n_obstacles is None:
            n_obstacles = 0 if self.obstacles is None else len(self.obstacles)
        labels = []
        if self.model == "unicycle":
            for kind in ("v_max", "v_min", "omega_max", "omega_min",
                         "acc_max", "acc_min", "omega_dot_max",
                         "omega_dot_min"):
                labels += [(kind, k, 0) for k in range(h)]
            for j in range(n_obstacles):
                labels += [("obstacle", k, j) for k in range(1, h + 1)]
        else:
            labels += [("v_max", k, 0) for k in range(1, h + 1)]
            for kind in ("acc_max", "acc_min", "steer_max", "steer_min"):
                labels += [(kind, k, 0) for k in range(h)]
            if self.corridor is not None:
                for side in ("corridor_left", "corridor_right"):
                    for c in range(len(self.footprint_offsets)):
                        labels += [(side, k, c) for k in range(1, h + 1)]
            if self.stop_line is not None:
                labels += [("stop", k, 0) for k in range(1, h + 1)]
        return labels

    def alpha(self, horizon, n_obstacles=None):
        weight = {"obstacle": self.alpha_obstacle,
                  "corridor_left": self.alpha_corridor,
                  "corridor_right": self.alpha_corridor,
                  "stop": self.alpha_stop}
        return np.array([weight.get(kind, self.alpha_box)
                         for kind, _, _ in self.labels(horizon, n_obstacles)])

    # -- serialization -------------------------------------------------------
    def to_json(self):
        d = {"model": self.model,
             "prev_control": self.prev_control.tolist(),
             "robot_radius": self.robot_radius}
        if self.obstacles is not None:
            d["obstacles"] = self.obstacles.tolist()
        if self.corridor is not None:
            d["corridor"] = {"left": self.corridor.left.tolist(),
                             "right": self.corridor.right.tolist()}
        if self.stop_line is not None:
            d["stop_line"] = {"point": self.stop_line.point.tolist(),
                              "direction": self.stop_line.direction.tolist()}
        return d

    @classmethod
    def from_json(cls, d):
        kwargs = {"model": d["model"],
                  "prev_control": np.asarray(d["prev_control"]),
                  "robot_radius": d["robot_radius"]}
        if "obstacles" in d:
            kwargs["obstacles"] = np.asarray(d["obstacles"])
        if "corridor" in d:
            kwargs["corridor"] = Corridor(np.asarray(d["corridor"]["left"]),
                                          np.asarray(d["corridor"]["right"]))
        if "stop_line" in d:
            kwargs["stop_line"] = StopLine(
                np.asarray(d["stop_line"]["point"]),
                np.asarray(d["stop_line"]["direction"]))
        return cls(**kwargs)


@dataclass(frozen=True)
class InequalityVector:
    values: np.ndarray
    labels: list

    def __len__(self):
        return len(self.values)

    def by_kind(self, kind):
        return np.array([v for v, (k, _, _) in zip(self.values, self.labels)
                         if k == kind])


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def select_obstacles(obstacles, pose, k=3, pad_distance=DUMMY_DISTANCE):
    """Pick the k closest circles in the robot's front half-plane.

    Returns exactly k circles in the robot frame, padded with zero-radius
    dummies ``pad_distance`` metres ahead when fewer exist.
    """
    pose = np.asarray(pose, dtype=np.float64)
    if not np.all(np.isfinite(pose)):
        raise ValueError("non-finite pose")
    obstacles = np.asarray(obstacles, dtype=np.float64).reshape(-1, 3)
    c, s = np.cos(pose[2]), np.sin(pose[2])
    rel = obstacles[:, :2] - pose[:2]
    local = np.stack([rel[:, 0] * c + rel[:, 1] * s,
                      -rel[:, 0] * s + rel[:, 1] * c], axis=1)
    front = local[:, 0] > 0.0
    local, radii = local[front], obstacles[front, 2]
    order = np.argsort(np.hypot(local[:, 0], local[:, 1]),
                       kind="stable")[:k]
    picked = np.column_stack([local[order], radii[order]])
    n_pad = k - len(picked)
    if n_pad:
        pad = np.tile([pad_distance, 0.0, 0.0], (n_pad, 1))
        picked = np.vstack([picked, pad]) if len(picked) else pad
    return picked


def corridor_from_polyline(centerline, half_width):
    """Offset a centerline by +/- half_width along averaged segment normals."""
    centerline = np.asarray(centerline, dtype=np.float64)
    if len(centerline) < 2:
        raise ValueError("centerline needs at least two points")
    if half_width <= 0:
        raise ValueError("half width must be positive")
    seg = np.diff(centerline, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    if np.any(lengths == 0):
        raise ValueError("duplicate consecutive centerline points")
    normals = np.stack([-seg[:, 1], seg[:, 0]], axis=1) / lengths[:, None]
    vertex_n = np.empty_like(centerline)
    vertex_n[0], vertex_n[-1] = normals[0], normals[-1]
    if len(normals) > 1:
        mid = normals[:-1] + normals[1:]
        mid /= np.hypot(mid[:, 0], mid[:, 1])[:, None]
        vertex_n[1:-1] = mid
    return Corridor(left=centerline + half_width * vertex_n,
                    right=centerline - half_width * vertex_n)


def stop_line(active, pose, distance_ahead, inactive_distance=DUMMY_DISTANCE):
    """Line perpendicular to the heading; placed far away when inactive."""
    pose = np.asarray(pose, dtype=np.float64)
    heading = np.array([np.cos(pose[2]), np.sin(pose[2])])
    dist = distance_ahead if active else inactive_distance
    return StopLine(point=pose[:2] + dist * heading, direction=heading)


# ---------------------------------------------------------------------------
# tensor-level row evaluation
# ---------------------------------------------------------------------------

def unicycle_rows_t(v, om, px, py, obstacles, prev_control, cset, dt):
    """Inequality rows for a batch of unicycle trajectories.

    v, om: (B, H) control tensors; px, py: (B, H) positions for k = 1..H;
    obstacles: (B, K, 3) array; prev_control: (B, 2) array.  Returns a
    (B, R) tensor with rows ordered as :meth:`ConstraintSet.labels`.
    """
    prev_v = Tensor(prev_control[:, 0:1])
    prev_om = Tensor(prev_control[:, 1:2])
    acc = mul(sub(v, concat([prev_v, v[:, :-1]], axis=1)), 1.0 / dt)
    omd = mul(sub(om, concat([prev_om, om[:, :-1]], axis=1)), 1.0 / dt)
    rows = [sub(v, cset.v_bounds[1]), sub(cset.v_bounds[0], v),
            sub(om, cset.omega_bounds[1]), sub(cset.omega_bounds[0], om),
            sub(acc, cset.acc_bounds[1]), sub(cset.acc_bounds[0], acc),
            sub(omd, cset.omega_dot_bounds[1]),
            sub(cset.omega_dot_bounds[0], omd)]
    for j in range(obstacles.shape[1]):
        cx = Tensor(obstacles[:, j, 0:1])
        cy = Tensor(obstacles[:, j, 1:2])
        margin = (cset.robot_radius + obstacles[:, j, 2:3] + OBSTACLE_MARGIN)
        d = sqrt(add_sq(sub(px, cx), sub(py, cy)))
        rows.append(sub(Tensor(margin), d))
    return concat(rows, axis=1)


def add_sq(a, b):
    return square(a) + square(b)


def _nearest_segment(p, poly):
    """Numeric nearest point on a polyline; ties go to the lower index."""
    a, b = poly[:-1], poly[1:]
    ab = b - a
    ab2 = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("j,ij->i", p, ab) - np.einsum("ij,ij->i", a, ab),
                0.0, ab2) / ab2
    q = a + t[:, None] * ab
    d2 = np.einsum("ij,ij->i", q - p, q - p)
    i = int(np.argmin(d2))  # argmin returns the first minimum
    return i, t[i]


def _signed_dist_t(px, py, poly, interior_sign):
    """Differentiable signed distance of a scalar point to a polyline.

    ``interior_sign`` selects on which side of the (directed) polyline the
    distance counts as positive: +1 for the right-hand side (a left
    boundary traversed in driving direction), -1 for the left-hand side.
    """
    p = np.array([float(px.data), float(py.data)])
    i, _ = _nearest_segment(p, poly)
    a, b = poly[i], poly[i + 1]
    ab = b - a
    ab2 = float(ab @ ab)
    t = minimum_const(maximum_const(
        mul(add(mul(sub(px, a[0]), ab[0]), mul(sub(py, a[1]), ab[1])),
            1.0 / ab2), 0.0), 1.0)
    qx = add(a[0], mul(t, ab[0]))
    qy = add(a[1], mul(t, ab[1]))
    d = sqrt(maximum_const(add_sq(sub(px, qx), sub(py, qy)), 1e-30))
    cross = (p[0] - a[0]) * ab[1] - (p[1] - a[1]) * ab[0]
    side = 1.0 if cross * interior_sign >= 0 else -1.0
    return mul(d, side)


def bicycle_rows_t(a_ctrl, delta, px, py, phi, v_state, cset, dt):
    """Inequality rows for one bicycle trajectory (batch size 1).

    a_ctrl, delta: (1, H) control tensors; px, py, phi, v_state: (1, H)
    state tensors for k = 1..H.
    """
    rows = [sub(v_state, cset.v_max),
            sub(a_ctrl, cset.acc_bounds[1]),
            sub(cset.acc_bounds[0], a_ctrl),
            sub(delta, cset.steer_bounds[1]),
            sub(cset.steer_bounds[0], delta)]
    h = px.shape[1]
    if cset.corridor is not None:
        for side_name, poly, sign in (
                ("left", cset.corridor.left, 1.0),
                ("right", cset.corridor.right, -1.0)):
            for off in cset.footprint_offsets:
                cells = []
                for k in range(h):
                    cx = add(px[0, k], mul(tcos(phi[0, k]), off))
                    cy = add(py[0, k], mul(tsin(phi[0, k]), off))
                    sd = _signed_dist_t(cx, cy, poly, sign)
                    cells.append(sub(cset.footprint_radius, sd)
                                 .reshape((1, 1)))
                rows.append(concat(cells, axis=1))
    if cset.stop_line is not None:
        sl = cset.stop_line
        rows.append(add(mul(sub(px, sl.point[0]), sl.direction[0]),
                        mul(sub(py, sl.point[1]), sl.direction[1])))
    return concat(rows, axis=1)


# ---------------------------------------------------------------------------
# public evaluation and penalty
# ---------------------------------------------------------------------------

def eval_inequalities(state_seq, control_seq, cset, dt):
    """Evaluate the full inequality vector for one numeric trajectory."""
    state_seq = np.asarray(state_seq, dtype=np.float64)
    control_seq = np.asarray(control_seq, dtype=np.float64)
    if not np.all(np.isfinite(state_seq)):
        raise ValueError("non-finite state")
    h = len(control_seq)
    if len(state_seq) != h + 1:
        raise ValueError("state sequence must be one longer than controls")
    if cset.model == "unicycle":
        obstacles = cset.obstacles
        if obstacles is None:
            obstacles = np.zeros((0, 3))
        g = unicycle_rows_t(
            Tensor(control_seq[None, :, 0]), Tensor(control_seq[None, :, 1]),
            Tensor(state_seq[None, 1:, 0]), Tensor(state_seq[None, 1:, 1]),
            obstacles[None], cset.prev_control[None], cset, dt)
    else:
        g = bicycle_rows_t(
            Tensor(control_seq[None, :, 0]), Tensor(control_seq[None, :, 1]),
            Tensor(state_seq[None, 1:, 0]), Tensor(state_seq[None, 1:, 1]),
            Tensor(state_seq[None, 1:, 2]), Tensor(state_seq[None, 1:, 3]),
            cset, dt)
    return InequalityVector(values=g.data[0], labels=cset.labels(h))


def penalty(g, alpha, squared=True):
    """Weighted ReLU penalty: ||ReLU(alpha . g)||_2^2 (or the plain norm)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if np.any(alpha <= 0):
        raise ValueError("alpha must be strictly positive")
    if isinstance(g, InequalityVector):
        g = g.values
    if isinstance(g, Tensor):
        if alpha.size != g.shape[-1]:
            raise ValueError("alpha length must match constraint rows")
        act = relu(mul(g, Tensor(alpha)))
        s = tsum(square(act))
        return s if squared else sqrt(maximum_const(s, 0.0))
    g = np.asarray(g, dtype=np.float64)
    if alpha.size != g.shape[-1]:
        raise ValueError("alpha length must match constraint rows")
    act = np.maximum(alpha * g, 0.0)
    s = float(np.sum(act * act))
    return s if squared else float(np.sqrt(s))

"""Command-line entry points: gen-data, train, eval-open, eval-closed, report.

Every command validates its INI config (plus dotted-key overrides), writes a
resolved-config snapshot next to its outputs and prints progress to stderr.
Metric CSVs are formatted deterministically so identical seeds reproduce
identical bytes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .baselines import METHOD_KINDS, Planner, train_method
from .core import complete, correct
from .data import (generate, iter_batches, load_manifest, load_split,
                   load_test_worlds)
from .dwa import DwaConfig, dwa_plan
from .dynamics import equality_residual, flatness_controls
from .plots import bar_chart, line_chart, trajectory_overlay
from .simulate import compute_metrics, rollout_closed_loop
from .world import World

METRIC_COLUMNS = ("method", "seed", "episodes", "grr_pct", "cr_pct",
                  "time_pct", "kcv_count", "kcv_pct", "steps")


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def _num(x):
    return "%.10g" % x


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------

class ExpertPolicy:
    """DWA wrapped in the planner interface, for reference runs."""

    def __init__(self, world, dwa_config=None, horizon=10):
        self.world = world
        self.dwa = dwa_config or DwaConfig()
        self.horizon = horizon

    def __call__(self, obs):
        from .world import states_world_to_robot
        from .dynamics import unicycle_step
        state = obs.pose
        control = dwa_plan(self.world, state, obs.measurements[:2],
                           self.dwa, self.world.config.dt)
        states = [state]
        s, c = state, control
        for _ in range(self.horizon):
            s = unicycle_step(s, c, self.world.config.dt)
            states.append(s)
        return states_world_to_robot(np.asarray(states), state)


def _load_policy(checkpoint, world=None):
    if checkpoint == "expert":
        return ExpertPolicy(world)
    planner = Planner.load(checkpoint)
    return planner.plan


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_gen_data(args):
    cfg = cfgmod.load_config(args.config, args.set)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.write_snapshot(cfg, out)
    dcfg = cfgmod.dataset_config(cfg)
    if args.seed is not None:
        dcfg.seed = args.seed
    generate(dcfg, out, log=_log)
    _log("dataset written to %s" % out)
    return 0


def cmd_train(args):
    cfg = cfgmod.load_config(args.config, args.set)
    if args.seed is not None:
        cfg["train"]["seed"] = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.write_snapshot(cfg, out)
    train_method(args.method, args.data, out,
                 net_config=None,
                 train_config=cfgmod.train_config(cfg), log=_log)
    _log("checkpoint written to %s" % (out / ("%s.npz" % args.method)))
    return 0


def _open_loop_rows(planner, records, image_size, dt):
    """Per-sample open-loop numbers: distance loss, violations, |h|.

    The residual uses the planner's own control sequence where it has one
    (completion-based methods); state-head outputs fall back to
    flatness-recovered controls.
    """
    from .constraints import ConstraintSet, eval_inequalities
    from .simulate import Observation
    rows = []
    for batch in iter_batches(records, 64, 0, image_size):
        for i in range(len(batch["images"])):
            cset = ConstraintSet(obstacles=batch["obstacles"][i],
                                 prev_control=batch["prev_controls"][i])
            obs = Observation(image=batch["images"][i],
                              measurements=batch["measurements"][i],
                              constraint_set=cset, pose=np.zeros(3))
            states, u = planner.plan_with_controls(obs)
            states = np.asarray(states)
            gt = batch["gt_states"][i]
            d = float(np.sum((states[1:, 0] - gt[:, 0]) ** 2
                             + (states[1:, 1] - gt[:, 1]) ** 2
                             + (np.cos(states[1:, 2]) - np.cos(gt[:, 2])) ** 2
                             + (np.sin(states[1:, 2]) - np.sin(gt[:, 2])) ** 2))
            if u is None:
                u = flatness_controls(states, dt)
            g = eval_inequalities(states, u, cset, dt)
            h = equality_residual(states, u, dt)
            rows.append((d, float(np.mean(g.values > 0)),
                         float(np.mean(np.abs(h)))))
    return np.asarray(rows)


def cmd_eval_open(args):
    planner = Planner.load(args.checkpoint)
    manifest = load_manifest(args.data)
    records = load_split(args.data, args.split)
    if not records:
        _log("error: split %r is empty" % args.split)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = _open_loop_rows(planner, records,
                           manifest["config"]["image_size"],
                           manifest["config"]["world"]["dt"])
    report = {
        "method": planner.spec.kind,
        "split": args.split,
        "samples": int(len(rows)),
        "distance_loss_mean": float(rows[:, 0].mean()),
        "violation_rate_mean": float(rows[:, 1].mean()),
        "equality_residual_mean": float(rows[:, 2].mean()),
    }
    with open(out / "open_loop.json", "w") as f:
        json.dump(report, f, indent=1, sort_keys=True)
    with open(out / "open_loop.csv", "w") as f:
        f.write("method,split,samples,distance_loss_mean,"
                "violation_rate_mean,equality_residual_mean\n")
        f.write("%s,%s,%d,%s,%s,%s\n"
                % (report["method"], args.split, report["samples"],
                   _num(report["distance_loss_mean"]),
                   _num(report["violation_rate_mean"]),
                   _num(report["equality_residual_mean"])))
    _log("open-loop: distance %.4f, violation rate %.4f, |h| %.2e"
         % (report["distance_loss_mean"], report["violation_rate_mean"],
            report["equality_residual_mean"]))
    return 0


def _world_config_from_dict(d):
    from .world import WorldConfig
    return WorldConfig(**{k: tuple(v) if isinstance(v, list) else v
                          for k, v in d.items()})


def _rollout_one(task):
    checkpoint, world_json, expert_time, image_size, resolution, wcfg = task
    world = World.from_json(world_json, _world_config_from_dict(wcfg))
    policy = _load_policy(checkpoint, world)
    result = rollout_closed_loop(policy, world, image_size, resolution)
    return result, expert_time, world_json


def run_eval_closed(checkpoint, data_dir, out_dir, method=None, seed=0,
                    jobs=1, log=_log):
    """Roll out a checkpoint (or 'expert') on the held-out test worlds."""
    manifest = load_manifest(data_dir)
    image_size = manifest["config"]["image_size"]
    resolution = manifest["config"]["resolution"]
    dt = manifest["config"]["world"]["dt"]
    wcfg = manifest["config"]["world"]
    worlds = load_test_worlds(data_dir, _world_config_from_dict(wcfg))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tasks = [(checkpoint, w.to_json(), t, image_size, resolution, wcfg)
             for w, t in worlds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            outputs = list(ex.map(_rollout_one, tasks))
    else:
        outputs = [_rollout_one(t) for t in tasks]
    results = [r for r, _, _ in outputs]
    expert_times = [t for _, t, _ in outputs]
    metrics = compute_metrics(results, expert_times, dt)
    if method is None:
        method = "expert" if checkpoint == "expert" else \
            Planner.load(checkpoint).spec.kind
    with open(out / "metrics.csv", "w") as f:
        f.write(",".join(METRIC_COLUMNS) + "\n")
        f.write("%s,%d,%d,%s,%s,%s,%d,%s,%d\n"
                % (method, seed, len(results),
                   _num(metrics["grr_pct"]), _num(metrics["cr_pct"]),
                   _num(metrics["time_pct"]), metrics["kcv_count"],
                   _num(metrics["kcv_pct"]), metrics["steps"]))
    with open(out / "episodes.jsonl", "w") as f:
        for (result, _, world_json) in outputs:
            f.write(json.dumps({"world": world_json,
                                "episode": result.to_json()}) + "\n")
    if log:
        log("%s: GRR %.1f%%, CR %.1f%%, Time %.1f%%, KCV %d (%.2f%%)"
            % (method, metrics["grr_pct"], metrics["cr_pct"],
               metrics["time_pct"], metrics["kcv_count"],
               metrics["kcv_pct"]))
    return metrics


def cmd_eval_closed(args):
    run_eval_closed(args.checkpoint, args.data, args.out,
                    seed=args.seed or 0, jobs=args.jobs)
    return 0


def cmd_report(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metric_rows = []
    curves = []
    overlays = []
    for run_dir in args.run_dirs:
        run = Path(run_dir)
        mpath = run / "metrics.csv"
        if mpath.exists():
            lines = mpath.read_text().strip().split("\n")
            for line in lines[1:]:
                metric_rows.append(line.split(","))
        for cpath in sorted(run.glob("*_curve.csv")):
            label = cpath.name.replace("_curve.csv", "")
            data = np.genfromtxt(cpath, delimiter=",", names=True)
            data = np.atleast_1d(data)
            curves.append((label, data["epoch"], data["train_loss"]))
        epath = run / "episodes.jsonl"
        if epath.exists() and not overlays:
            with open(epath) as f:
                first = json.loads(f.readline())
            label = metric_rows[-1][0] if metric_rows else run.name
            overlays.append((label, World.from_json(first["world"]),
                             np.asarray(first["episode"]["states"])))
    with open(out / "combined.csv", "w") as f:
        f.write(",".join(METRIC_COLUMNS) + "\n")
        for row in metric_rows:
            f.write(",".join(row) + "\n")
    if curves:
        line_chart(curves, out / "training_curves.svg", xlabel="epoch",
                   ylabel="train loss", title="training curves")
    if metric_rows:
        labels = [r[0] for r in metric_rows]
        bar_chart(labels, [float(r[7]) for r in metric_rows],
                  out / "kcv_bars.svg", ylabel="KCV [%]",
                  title="kinematic constraint violations")
        bar_chart(labels, [float(r[4]) for r in metric_rows],
                  out / "cr_bars.svg", ylabel="CR [%]",
                  title="collision rate")
    for label, world, states in overlays:
        trajectory_overlay(world, [(label, states)],
                           out / ("trace_%s.svg" % label),
                           title="closed-loop trace")
    _log("report written to %s" % out)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(
        prog="cil",
        description="constraint-completion imitation learning pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None,
                        help="INI config file (defaults used if omitted)")
        sp.add_argument("--set", action="append", default=[],
                        metavar="SECTION.KEY=VALUE",
                        help="override a config value")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--jobs", type=int,
                        default=os.cpu_count() or 1)

    sp = sub.add_parser("gen-data", help="generate expert demonstrations")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("train", help="train one method")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--method", required=True, choices=METHOD_KINDS)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval-open", help="open-loop evaluation on a split")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--split", default="test",
                    choices=("train", "val", "test"))
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_eval_open)

    sp = sub.add_parser("eval-closed",
                        help="closed-loop evaluation on test worlds")
    common(sp)
    sp.add_argument("--checkpoint", required=True,
                    help="checkpoint path, or 'expert' for the DWA expert")
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_eval_closed)

    sp = sub.add_parser("report", help="combine runs into CSV + SVG plots")
    sp.add_argument("run_dirs", nargs="+")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (cfgmod.ConfigError, FileNotFoundError) as exc:
        _log("error: %s" % exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())

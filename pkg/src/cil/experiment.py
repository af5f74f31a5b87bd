"""End-to-end experiment drivers built on the CLI building blocks."""

from __future__ import annotations

import time
from pathlib import Path

from .baselines import TrainConfig, train_method
from .cli import METRIC_COLUMNS, _num, run_eval_closed
from .config import dataset_config, default_config
from .data import generate


def directional_comparison(workdir, methods=("il", "dcil"), seeds=(0, 1, 2),
                           episodes=200, test_worlds=20, epochs=2,
                           batch_size=128, jobs=1, log=print):
    """Train and closed-loop-evaluate methods over several seeds.

    One shared dataset; the seed controls network initialization and batch
    shuffling.  Returns a list of metric dicts (one per method per seed)
    and writes a combined ``comparison.csv`` under ``workdir``.
    """
    work = Path(workdir)
    work.mkdir(parents=True, exist_ok=True)
    cfg = default_config()
    cfg["data"]["episodes"] = episodes
    cfg["data"]["test_worlds"] = test_worlds
    data_dir = work / "data"
    if not (data_dir / "manifest.json").exists():
        t0 = time.time()
        generate(dataset_config(cfg), data_dir, log=log)
        log("dataset: %d episodes in %.0fs" % (episodes, time.time() - t0))
    rows = []
    for seed in seeds:
        for method in methods:
            run_dir = work / ("%s_seed%d" % (method, seed))
            ckpt = run_dir / ("%s.npz" % method)
            t0 = time.time()
            if not ckpt.exists():
                train_method(method, data_dir, run_dir,
                             train_config=TrainConfig(
                                 epochs=epochs, batch_size=batch_size,
                                 seed=seed),
                             log=log)
            metrics = run_eval_closed(str(ckpt), data_dir, run_dir,
                                      method=method, seed=seed, jobs=jobs,
                                      log=log)
            metrics.update(method=method, seed=seed)
            rows.append(metrics)
            log("%s seed %d done in %.0fs" % (method, seed,
                                              time.time() - t0))
    with open(work / "comparison.csv", "w") as f:
        f.write(",".join(METRIC_COLUMNS) + "\n")
        for m in rows:
            f.write("%s,%d,%d,%s,%s,%s,%d,%s,%d\n"
                    % (m["method"], m["seed"], test_worlds,
                       _num(m["grr_pct"]), _num(m["cr_pct"]),
                       _num(m["time_pct"]), m["kcv_count"],
                       _num(m["kcv_pct"]), m["steps"]))
    return rows


def directional_criterion(rows, seeds=(0, 1, 2)):
    """Per-seed pass/fail of the safety-direction comparison.

    A seed passes when the corrected planner at least halves the expert
    baseline's kinematic violations without losing goal-reaching ability:
    KCV_dcil <= 0.5 * KCV_il, CR_dcil <= CR_il, GRR_dcil >= GRR_il - 5.
    """
    by = {(m["method"], m["seed"]): m for m in rows}
    verdicts = {}
    for seed in seeds:
        il, dcil = by[("il", seed)], by[("dcil", seed)]
        verdicts[seed] = (dcil["kcv_count"] <= 0.5 * il["kcv_count"]
                          and dcil["cr_pct"] <= il["cr_pct"]
                          and dcil["grr_pct"] >= il["grr_pct"] - 5.0)
    return verdicts

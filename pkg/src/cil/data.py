"""Demonstration dataset generation, storage and splitting.

Samples are JSON Lines, one per line, with occupancy images stored as
run-length encodings.  Splits are at episode granularity so no future leaks
across them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dwa import DwaConfig, dwa_plan
from .dynamics import unicycle_step
from .simulate import EpisodeResult, make_observation
from .world import (World, WorldConfig, spawn_episode,
                    states_world_to_robot)

FORMAT_VERSION = 1
SPLIT_RATIOS = (5 / 6, 1 / 12, 1 / 12)  # train / val / test (83.3/8.3/8.3%)
TEST_WORLD_SEED_OFFSET = 10_000_000   # closed-loop worlds: disjoint seeds


@dataclass
class DatasetConfig:
    episodes: int = 200
    test_worlds: int = 20
    horizon: int = 10
    image_size: int = 64
    resolution: float = 5.0
    seed: int = 0
    expert_failure_budget: int = 5  # discarded episodes allowed per retained
    world: WorldConfig = field(default_factory=WorldConfig)
    dwa: DwaConfig = field(default_factory=DwaConfig)

    def to_json(self):
        d = asdict(self)
        return d


def rle_encode(image):
    """Row-major run lengths, starting with the count of leading zeros."""
    flat = np.asarray(image).ravel().astype(np.uint8)
    if flat.size == 0:
        return []
    changes = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], changes, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0] == 1:
        runs = [0] + runs
    return [int(r) for r in runs]


def rle_decode(runs, shape):
    flat = np.zeros(int(np.prod(shape)), dtype=np.uint8)
    pos, val = 0, 0
    for r in runs:
        if val:
            flat[pos:pos + r] = 1
        pos += r
        val ^= 1
    return flat.reshape(shape)


def run_expert_episode(world, config: DatasetConfig):
    """Closed-loop DWA rollout recording states and applied controls."""
    cfg = world.config
    max_steps = int(round(cfg.timeout / cfg.dt))
    state = world.start.copy()
    control = np.zeros(2)
    states, controls = [state.copy()], []
    outcome = "timeout"
    for _ in range(max_steps):
        if world.at_goal(state):
            outcome = "goal"
            break
        control = dwa_plan(world, state, control, config.dwa, cfg.dt)
        state = unicycle_step(state, control, cfg.dt)
        states.append(state.copy())
        controls.append(control.copy())
        if world.in_collision(state[:2]):
            outcome = "collision"
            break
    else:
        if world.at_goal(state):
            outcome = "goal"
    return EpisodeResult(outcome=outcome, states=np.array(states),
                         controls=np.array(controls).reshape(-1, 2),
                         time=len(controls) * cfg.dt)


def episode_samples(world, result, episode_id, config: DatasetConfig):
    """Slice one expert episode into training samples with H-step futures."""
    h = config.horizon
    t = len(result.controls)
    samples = []
    for s in range(max(0, t - h)):
        pose = result.states[s]
        control = result.controls[s - 1] if s > 0 else np.zeros(2)
        obs = make_observation(world, pose, control, config.image_size,
                               config.resolution)
        future_states = states_world_to_robot(
            result.states[s + 1:s + h + 1], pose)
        future_controls = result.controls[s:s + h]
        samples.append({
            "episode": episode_id,
            "step": s,
            "pose": pose.tolist(),
            "measured_control": control.tolist(),
            "measurements": obs.measurements.tolist(),
            "image_rle": rle_encode(obs.image),
            "constraints": obs.constraint_set.to_json(),
            "y_gt_states": future_states.tolist(),
            "y_gt_controls": future_controls.tolist(),
        })
    return samples


def _split_counts(n, ratios=SPLIT_RATIOS):
    counts = [int(np.floor(n * r)) for r in ratios]
    counts[0] += n - sum(counts)  # remainder goes to train
    return counts


def split_episodes(episode_ids, seed, ratios=SPLIT_RATIOS):
    """Shuffled episode-level split; returns (train, val, test) id lists."""
    if abs(sum(ratios) - 1.0) > 1e-6:
        raise ValueError("split ratios must sum to 1")
    ids = list(episode_ids)
    if len(ids) < len(ratios):
        raise ValueError("fewer episodes than splits")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    n_train, n_val, _ = _split_counts(len(ids), ratios)
    shuffled = [ids[i] for i in order]
    return (sorted(shuffled[:n_train]),
            sorted(shuffled[n_train:n_train + n_val]),
            sorted(shuffled[n_train + n_val:]))


def generate(config: DatasetConfig, out_dir, log=None):
    """Generate expert demonstrations and closed-loop test worlds."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    episodes = {}
    expert_times = []
    seed = config.seed
    discarded = 0
    budget = config.expert_failure_budget * config.episodes
    while len(episodes) < config.episodes:
        world = spawn_episode(seed, config.world)
        result = run_expert_episode(world, config)
        if result.outcome == "goal":
            episodes[len(episodes)] = (world, result)
            expert_times.append(result.time)
            if log and len(episodes) % 25 == 0:
                log("expert episodes: %d/%d" % (len(episodes),
                                                config.episodes))
        else:
            discarded += 1
            if discarded > budget:
                raise RuntimeError("expert failure budget exceeded")
        seed += 1
    train_ids, val_ids, test_ids = split_episodes(
        sorted(episodes), config.seed)
    counts = {}
    for name, ids in (("train", train_ids), ("val", val_ids),
                      ("test", test_ids)):
        n = 0
        with open(out / (name + ".jsonl"), "w") as f:
            for eid in ids:
                world, result = episodes[eid]
                for sample in episode_samples(world, result, eid, config):
                    f.write(json.dumps(sample) + "\n")
                    n += 1
        counts[name] = n

    # unseen worlds for closed-loop evaluation, with expert reference times
    test_worlds = []
    seed = config.seed + TEST_WORLD_SEED_OFFSET
    discarded = 0
    while len(test_worlds) < config.test_worlds:
        world = spawn_episode(seed, config.world)
        result = run_expert_episode(world, config)
        if result.outcome == "goal":
            test_worlds.append({"seed": seed, "world": world.to_json(),
                                "expert_time": result.time})
        else:
            discarded += 1
            if discarded > config.expert_failure_budget * max(
                    config.test_worlds, 1):
                raise RuntimeError("expert failure budget exceeded")
        seed += 1
    with open(out / "worlds_test.jsonl", "w") as f:
        for rec in test_worlds:
            f.write(json.dumps(rec) + "\n")

    cfg_json = config.to_json()
    manifest = {
        "format_version": FORMAT_VERSION,
        "episodes": config.episodes,
        "samples": counts,
        "split_episode_ids": {"train": train_ids, "val": val_ids,
                              "test": test_ids},
        "discarded_expert_episodes": discarded,
        "expert_times": expert_times,
        "seed": config.seed,
        "config": cfg_json,
        "config_hash": hashlib.sha256(
            json.dumps(cfg_json, sort_keys=True).encode()).hexdigest(),
    }
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return manifest


def load_manifest(dataset_dir):
    with open(Path(dataset_dir) / "manifest.json") as f:
        manifest = json.load(f)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError("unsupported dataset format version")
    return manifest


def load_split(dataset_dir, name):
    path = Path(dataset_dir) / (name + ".jsonl")
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def load_test_worlds(dataset_dir, world_config=None):
    path = Path(dataset_dir) / "worlds_test.jsonl"
    worlds = []
    with open(path) as f:
        for line in f:
            rec = json.loads(line)
            worlds.append((World.from_json(rec["world"], world_config),
                           rec["expert_time"]))
    return worlds


def sample_batch(records, image_size):
    """Decode a list of sample records into training arrays."""
    b = len(records)
    images = np.zeros((b, 1, image_size, image_size))
    meas = np.zeros((b, 4))
    gt_states = np.zeros((b, len(records[0]["y_gt_states"]), 3))
    gt_controls = np.zeros((b, len(records[0]["y_gt_controls"]), 2))
    obstacles = np.zeros((b, 3, 3))
    prev_controls = np.zeros((b, 2))
    for i, rec in enumerate(records):
        images[i, 0] = rle_decode(rec["image_rle"],
                                  (image_size, image_size))
        meas[i] = rec["measurements"]
        gt_states[i] = rec["y_gt_states"]
        gt_controls[i] = rec["y_gt_controls"]
        obstacles[i] = rec["constraints"]["obstacles"]
        prev_controls[i] = rec["measured_control"]
    return {"images": images, "measurements": meas, "gt_states": gt_states,
            "gt_controls": gt_controls, "obstacles": obstacles,
            "prev_controls": prev_controls}


def iter_batches(records, batch_size, seed, image_size):
    """Deterministically shuffled minibatches of decoded arrays."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    for start in range(0, len(records), batch_size):
        idx = order[start:start + batch_size]
        yield sample_batch([records[i] for i in idx], image_size)

"""Dataset generation: RLE codec, splits, manifest, batching determinism."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cil.data import (DatasetConfig, FORMAT_VERSION, generate, iter_batches,
                      load_manifest, load_split, load_test_worlds,
                      rle_decode, rle_encode, sample_batch, split_episodes)
from cil.world import WorldConfig


def tiny_config(episodes=12, test_worlds=2):
    return DatasetConfig(episodes=episodes, test_worlds=test_worlds,
                         horizon=10, image_size=32, resolution=2.5, seed=0)


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    manifest = generate(tiny_config(), out)
    return out, manifest


def test_rle_roundtrip_hand_case():
    img = np.array([[0, 0, 1], [1, 1, 0], [0, 0, 0]], dtype=np.uint8)
    runs = rle_encode(img)
    assert runs == [2, 3, 4]
    np.testing.assert_array_equal(rle_decode(runs, (3, 3)), img)


def test_rle_leading_one():
    img = np.array([[1, 0], [0, 1]], dtype=np.uint8)
    runs = rle_encode(img)
    assert runs[0] == 0
    np.testing.assert_array_equal(rle_decode(runs, (2, 2)), img)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=256))
def test_rle_roundtrip_property(bits):
    img = np.array(bits, dtype=np.uint8)
    assert sum(rle_encode(img)) == img.size
    np.testing.assert_array_equal(rle_decode(rle_encode(img), img.shape),
                                  img)


def test_split_disjoint_and_complete():
    train, val, test = split_episodes(range(48), seed=0)
    ids = train + val + test
    assert sorted(ids) == list(range(48))
    assert not (set(train) & set(val)) and not (set(train) & set(test))
    assert not (set(val) & set(test))
    # 5/6 train, 1/12 val, 1/12 test; remainder goes to train
    assert len(val) == 4 and len(test) == 4 and len(train) == 40


def test_split_deterministic_and_seed_sensitive():
    a = split_episodes(range(24), seed=0)
    b = split_episodes(range(24), seed=0)
    c = split_episodes(range(24), seed=1)
    assert a == b
    assert a != c


def test_split_rejects_bad_ratios():
    with pytest.raises(ValueError):
        split_episodes(range(10), seed=0, ratios=(0.5, 0.2, 0.2))
    with pytest.raises(ValueError):
        split_episodes(range(2), seed=0)


def test_manifest_contents(tiny_dataset):
    out, manifest = tiny_dataset
    loaded = load_manifest(out)
    assert loaded == json.loads(json.dumps(manifest))
    assert loaded["format_version"] == FORMAT_VERSION
    assert loaded["episodes"] == 12
    assert len(loaded["config_hash"]) == 64
    split_ids = loaded["split_episode_ids"]
    all_ids = split_ids["train"] + split_ids["val"] + split_ids["test"]
    assert sorted(all_ids) == list(range(12))
    assert len(loaded["expert_times"]) == 12


def test_manifest_version_check(tiny_dataset, tmp_path):
    out, _ = tiny_dataset
    manifest = json.loads((out / "manifest.json").read_text())
    manifest["format_version"] = FORMAT_VERSION + 1
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(ValueError):
        load_manifest(tmp_path)


def test_sample_records_schema(tiny_dataset):
    out, manifest = tiny_dataset
    records = load_split(out, "train")
    assert len(records) == manifest["samples"]["train"] > 0
    rec = records[0]
    assert len(rec["measurements"]) == 4
    assert len(rec["y_gt_states"]) == 10
    assert len(rec["y_gt_controls"]) == 10
    assert len(rec["constraints"]["obstacles"]) == 3
    img = rle_decode(rec["image_rle"], (32, 32))
    assert img.shape == (32, 32)
    # episode ids must come from the declared train split
    eids = {r["episode"] for r in records}
    assert eids <= set(manifest["split_episode_ids"]["train"])


def test_test_worlds_load(tiny_dataset):
    out, _ = tiny_dataset
    worlds = load_test_worlds(out, WorldConfig())
    assert len(worlds) == 2
    world, expert_time = worlds[0]
    assert expert_time > 0
    assert world.obstacles.shape[1] == 3


def test_generate_deterministic(tiny_dataset, tmp_path):
    out, _ = tiny_dataset
    generate(tiny_config(), tmp_path)
    for name in ("train.jsonl", "val.jsonl", "test.jsonl",
                 "worlds_test.jsonl", "manifest.json"):
        assert (out / name).read_bytes() == (tmp_path / name).read_bytes()


def test_batching_deterministic(tiny_dataset):
    out, _ = tiny_dataset
    records = load_split(out, "train")
    a = list(iter_batches(records, 8, seed=3, image_size=32))
    b = list(iter_batches(records, 8, seed=3, image_size=32))
    c = list(iter_batches(records, 8, seed=4, image_size=32))
    assert len(a) == int(np.ceil(len(records) / 8))
    for ba, bb in zip(a, b):
        for key in ba:
            np.testing.assert_array_equal(ba[key], bb[key])
    assert any(not np.array_equal(a[0][k], c[0][k]) for k in a[0])


def test_sample_batch_shapes(tiny_dataset):
    out, _ = tiny_dataset
    records = load_split(out, "train")[:4]
    batch = sample_batch(records, image_size=32)
    assert batch["images"].shape == (4, 1, 32, 32)
    assert batch["measurements"].shape == (4, 4)
    assert batch["gt_states"].shape == (4, 10, 3)
    assert batch["gt_controls"].shape == (4, 10, 2)
    assert batch["obstacles"].shape == (4, 3, 3)
    assert batch["prev_controls"].shape == (4, 2)

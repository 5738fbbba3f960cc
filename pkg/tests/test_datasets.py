import json

import numpy as np
import pytest

from models.errors import ArgumentError, ConfigError
from data.datasets import (SplitSpec, Standardization, dataset_paths, load_dataset, load_splits, save_dataset,
                           standardize_and_split)
from data.generators import generate

@pytest.fixture
def splits():
    raw = generate("pinwheel", 400, seed=7)
    return standardize_and_split(raw, SplitSpec(train=200, val=100, test=60), seed=7, name="pinwheel")


# === SPLITS ===

def test_split_spec_validation():
    with pytest.raises(ConfigError):
        SplitSpec(train=0)
    assert SplitSpec().counts() == (10000, 5000, 5000)
    assert SplitSpec(3, 2, 1).to_dict() == {"train": 3, "val": 2, "test": 1}

def test_split_sizes(splits):
    train, val, test = splits
    assert (len(train), len(val), len(test)) == (200, 100, 60)
    assert [d.split for d in splits] == ["train", "val", "test"]

def test_training_split_is_standardized(splits):
    train = splits[0]
    assert np.allclose(train.points.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(train.points.std(axis=0), 1.0, atol=1e-12)

def test_all_splits_share_training_statistics(splits):
    assert all(d.standardization is splits[0].standardization for d in splits)

def test_splits_are_disjoint_rows_of_raw():
    raw = generate("spiral", 50, seed=1)
    train, val, test = standardize_and_split(raw, SplitSpec(20, 20, 10), seed=3)
    restored = np.concatenate([d.standardization.invert(d.points) for d in (train, val, test)])
    assert np.allclose(np.sort(restored, axis=0), np.sort(raw, axis=0), atol=1e-12)

def test_split_is_seeded():
    raw = generate("spiral", 60, seed=1)
    first = standardize_and_split(raw, SplitSpec(30, 20, 10), seed=4)
    second = standardize_and_split(raw, SplitSpec(30, 20, 10), seed=4)
    assert np.array_equal(first[1].points, second[1].points)

def test_too_few_points():
    with pytest.raises(ArgumentError):
        standardize_and_split(np.ones((5, 2)), SplitSpec(3, 2, 1))

def test_constant_dimension_rejected():
    with pytest.raises(ArgumentError):
        Standardization.fit(np.column_stack([np.arange(10.0), np.full(10, 2.0)]))


# === FILES ===

def test_save_and_load(splits, tmp_path):
    val = splits[1]
    csv_path, meta_path = save_dataset(val, str(tmp_path))
    assert (csv_path, meta_path) == dataset_paths(str(tmp_path), "pinwheel", "val")
    with open(csv_path) as handle:
        assert handle.readline().strip() == "x1,x2"
    with open(meta_path) as handle:
        meta = json.load(handle)
    assert meta["split_sizes"] == {"train": 200, "val": 100, "test": 60}
    assert meta["rows"] == 100
    loaded = load_dataset(csv_path)
    assert np.array_equal(loaded.points, val.points)
    assert np.array_equal(loaded.standardization.mean, val.standardization.mean)
    assert loaded.generator_seed == 7

def test_load_splits(splits, tmp_path):
    for dataset in splits:
        save_dataset(dataset, str(tmp_path))
    loaded = load_splits(str(tmp_path), "pinwheel")
    assert [len(d) for d in loaded] == [200, 100, 60]

def test_sidecar_mismatch_rejected(splits, tmp_path):
    csv_path, meta_path = save_dataset(splits[2], str(tmp_path))
    with open(meta_path) as handle:
        meta = json.load(handle)
    meta["rows"] = 61
    with open(meta_path, "w") as handle:
        json.dump(meta, handle)
    with pytest.raises(ArgumentError):
        load_dataset(csv_path)

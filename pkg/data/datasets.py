"""
Standardization, train/validation/test splits and dataset files.

A split is written as ``<name>_<split>.csv`` (header ``x1,...,xd``, one
point per row, floats at 17 significant digits) next to a
``<name>_<split>.json`` sidecar holding the name, seed, split sizes and
the standardization record.
"""

import json
import sys
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.errors import ArgumentError, ConfigError

STDDEV_FLOOR = 1e-12
SPLIT_NAMES = ("train", "val", "test")


@dataclass
class SplitSpec:
    train: int = 10000
    val: int = 5000
    test: int = 5000

    def __post_init__(self):
        if min(self.train, self.val, self.test) < 1:
            raise ConfigError(f"Split counts must be positive, got {self.counts()}")

    def counts(self) -> Tuple[int, int, int]:
        return (self.train, self.val, self.test)

    @property
    def total(self) -> int:
        return sum(self.counts())

    def to_dict(self) -> Dict[str, int]:
        return dict(zip(SPLIT_NAMES, self.counts()))


@dataclass
class Standardization:
    """Per-dimension mean and stddev of the training split."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, points: np.ndarray) -> "Standardization":
        mean = points.mean(axis=0)
        std = points.std(axis=0)
        flat = np.flatnonzero(std < STDDEV_FLOOR)
        if flat.size:
            raise ArgumentError(f"Dimensions {flat.tolist()} are constant; cannot standardize")
        return cls(mean, std)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (points - self.mean) / self.std

    def invert(self, points: np.ndarray) -> np.ndarray:
        return points * self.std + self.mean

    def to_dict(self) -> Dict:
        return {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, data: Dict) -> "Standardization":
        return cls(np.array(data["mean"], dtype=float), np.array(data["std"], dtype=float))


@dataclass
class Dataset:
    points: np.ndarray
    name: str
    generator_seed: int
    split: str
    standardization: Standardization
    split_sizes: Dict[str, int] = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def metadata(self) -> Dict:
        return {
            "name": self.name,
            "seed": self.generator_seed,
            "split": self.split,
            "split_sizes": dict(self.split_sizes),
            "rows": len(self),
            "dimension": self.dimension,
            "standardization": self.standardization.to_dict(),
        }


def standardize_and_split(raw: np.ndarray, split: Optional[SplitSpec] = None, seed: int = 0,
                          name: str = "dataset") -> Tuple[Dataset, Dataset, Dataset]:
    """Shuffle with ``seed``, split, then standardize all splits with the training statistics."""
    split = split or SplitSpec()
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise ArgumentError("Raw points must be an N x d matrix")
    if raw.shape[0] < split.total:
        raise ArgumentError(f"Need {split.total} points for split {split.counts()}, got {raw.shape[0]}")
    rng = np.random.Generator(np.random.Philox(seed))
    shuffled = raw[rng.permutation(raw.shape[0])[:split.total]]
    bounds = np.cumsum((0,) + split.counts())
    parts = [shuffled[bounds[i]:bounds[i + 1]] for i in range(3)]
    record = Standardization.fit(parts[0])
    return tuple(Dataset(points=record.apply(part), name=name, generator_seed=seed, split=split_name,
                         standardization=record, split_sizes=split.to_dict())
                 for split_name, part in zip(SPLIT_NAMES, parts))


def dataset_paths(directory: str, name: str, split: str) -> Tuple[str, str]:
    stem = os.path.join(directory, f"{name}_{split}")
    return stem + ".csv", stem + ".json"


def save_dataset(dataset: Dataset, directory: str) -> List[str]:
    """Write the CSV and its sidecar; returns both paths."""
    os.makedirs(directory, exist_ok=True)
    csv_path, meta_path = dataset_paths(directory, dataset.name, dataset.split)
    header = ",".join(f"x{i + 1}" for i in range(dataset.dimension))
    np.savetxt(csv_path, dataset.points, fmt="%.17g", delimiter=",", header=header, comments="")
    with open(meta_path, "w", encoding="utf-8") as handle:
        json.dump(dataset.metadata(), handle, indent=2, sort_keys=True)
        handle.write("\n")
    return [csv_path, meta_path]


def load_dataset(csv_path: str) -> Dataset:
    meta_path = os.path.splitext(csv_path)[0] + ".json"
    with open(meta_path, "r", encoding="utf-8") as handle:
        meta = json.load(handle)
    points = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    if points.shape != (meta["rows"], meta["dimension"]):
        raise ArgumentError(f"{csv_path} holds {points.shape}, sidecar promises "
                            f"({meta['rows']}, {meta['dimension']})")
    return Dataset(points=points, name=meta["name"], generator_seed=meta["seed"], split=meta["split"],
                   standardization=Standardization.from_dict(meta["standardization"]),
                   split_sizes=meta.get("split_sizes", {}))


def load_splits(directory: str, name: str) -> Tuple[Dataset, Dataset, Dataset]:
    return tuple(load_dataset(dataset_paths(directory, name, split)[0]) for split in SPLIT_NAMES)

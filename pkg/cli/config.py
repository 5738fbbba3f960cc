"""
Experiment configuration.

One JSON document describes a run; ``--set section.key=value`` overrides
patch it before validation. Values are parsed as JSON literals and fall
back to plain strings. The default output root comes from the
``GEOPC_OUTPUT_ROOT`` environment variable, which may be set in a
``.env`` file.
"""

import dataclasses
import hashlib
import json
import sys
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.errors import ConfigError
from data.datasets import SplitSpec
from data.generators import DATASET_NAMES, dataset_dimension
from inference.refinement import RefinementStrategy
from training.soft_gates import SoftGateConfig
from training.trainer import TrainConfig

OUTPUT_ROOT_ENV = "GEOPC_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"
SAVED_CONFIG_FILE = "config.json"
MODEL_KINDS = ("baseline", "vt", "hfv")
VTREE_KINDS = ("random_binary", "left_linear")


@dataclass
class DatasetConfig:
    name: str = "pinwheel"
    seed: int = 0
    train: int = 10000
    val: int = 5000
    test: int = 5000
    protocol_noise: bool = True

    def __post_init__(self):
        if self.name not in DATASET_NAMES:
            raise ConfigError(f"Unknown dataset '{self.name}' (expected one of {', '.join(DATASET_NAMES)})")
        self.split_spec()

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.train, self.val, self.test)


@dataclass
class ModelConfig:
    kind: str = "vt"
    vtree: str = "random_binary"
    vtree_seed: int = 0
    units: Optional[int] = None
    num_cells: int = 5
    joint_cap: int = 4096
    init_seed: int = 0
    kmeans_iters: int = 100

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"Unknown model kind '{self.kind}' (expected one of {MODEL_KINDS})")
        if self.vtree not in VTREE_KINDS:
            raise ConfigError(f"Unknown vtree kind '{self.vtree}' (expected one of {VTREE_KINDS})")
        if self.units is not None and self.units < 1:
            raise ConfigError(f"Units must be positive, got {self.units}")
        if self.num_cells < 1:
            raise ConfigError(f"Need at least one cell per gate, got {self.num_cells}")
        if self.joint_cap < 1:
            raise ConfigError("Joint cell cap must be positive")

    def units_for(self, dimension: int) -> int:
        if self.units is not None:
            return self.units
        return 5 if dimension <= 2 else 10


@dataclass
class CertifyConfig:
    epsilon: float = 1e-3
    max_iters: int = 10000
    strategy: str = "largest_gap"
    domain_padding: float = 0.5
    cross_check: bool = False
    quadrature_resolution: int = 400
    monte_carlo_samples: int = 1_000_000

    def __post_init__(self):
        try:
            RefinementStrategy(self.strategy)
        except ValueError:
            raise ConfigError(f"Unknown refinement strategy '{self.strategy}'")
        if not self.epsilon > 0.0 or self.max_iters < 0:
            raise ConfigError("Refinement needs epsilon > 0 and a non-negative budget")
        if self.domain_padding < 0.0:
            raise ConfigError("Domain padding must be non-negative")


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    certify: CertifyConfig = field(default_factory=CertifyConfig)
    output_dir: Optional[str] = None

    @property
    def dimension(self) -> int:
        return dataset_dimension(self.dataset.name)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown config sections {sorted(unknown)}")
        try:
            train = dict(data.get("train", {}))
            if "gates" in train:
                train["gates"] = SoftGateConfig(**train["gates"])
            return cls(
                dataset=DatasetConfig(**data.get("dataset", {})),
                model=ModelConfig(**data.get("model", {})),
                train=TrainConfig(**train),
                certify=CertifyConfig(**data.get("certify", {})),
                output_dir=data.get("output_dir"),
            )
        except TypeError as exc:
            raise ConfigError(f"Invalid config field: {exc}") from exc

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(document: Dict[str, Any], assignment: str):
    """Apply one ``dotted.key=value`` override to a config document in place."""
    if "=" not in assignment:
        raise ConfigError(f"Override '{assignment}' is not of the form key=value")
    key, raw = assignment.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"Override '{assignment}' has an empty key")
    target = document
    for part in parts[:-1]:
        child = target.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"Override '{assignment}': '{part}' is not a section")
        target = child
    target[parts[-1]] = parse_value(raw.strip())


def merge_documents(base: Dict[str, Any], top: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive merge; values in ``top`` win."""
    merged = dict(base)
    for key, value in top.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_documents(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: Optional[str] = None, overrides: Optional[List[str]] = None,
                base: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Build a config from ``base``, then the JSON file at ``path``, then the ``--set`` overrides."""
    document: Dict[str, Any] = {}
    if path:
        with open(path, "r", encoding="utf-8") as handle:
            try:
                document = json.load(handle)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if base:
        document = merge_documents(base, document)
    for assignment in overrides or []:
        apply_override(document, assignment)
    return ExperimentConfig.from_dict(document)


def saved_dataset_section(output_dir: str) -> Optional[Dict[str, Any]]:
    """The dataset section of the config an earlier command saved in ``output_dir``, if any."""
    path = os.path.join(output_dir, SAVED_CONFIG_FILE)
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as handle:
        try:
            document = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    section = document.get("dataset")
    return dict(section) if isinstance(section, dict) else None


def resolve_output_dir(config: ExperimentConfig, cli_out: Optional[str] = None) -> str:
    """--out, then the config's output_dir, then $GEOPC_OUTPUT_ROOT/<hash prefix>, then ./runs/<hash prefix>."""
    if cli_out:
        return cli_out
    if config.output_dir:
        return config.output_dir
    load_dotenv()
    root = os.environ.get(OUTPUT_ROOT_ENV) or DEFAULT_OUTPUT_ROOT
    return os.path.join(root, config.config_hash()[:12])

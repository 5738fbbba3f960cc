"""
Maximum-likelihood training with annealed soft gates.

Every epoch sets the inverse temperature from the schedule, shuffles the
training set with the run's seeded generator, and takes one Adam step per
minibatch on the mean soft NLL. Validation log-likelihood is measured
under soft gating every epoch. At snapshot epochs the hard-gated model is
certified and the validation log-likelihood interval recorded.
"""

import csv
import math
import sys
import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.circuit import Circuit
from models.errors import ArgumentError, ConfigError, NumericError, TrainingAborted
from models.events import EventType, default_event_handler
from inference.bounds import DomainSpec
from inference.certified import certify_circuit, log_likelihood_bounds
from inference.evaluator import HARD, GatingMode, eval_log_density_batch
from inference.refinement import RefinementConfig
from training.gradients import backward
from training.optimizer import Adam, AdamConfig
from training.parameters import ParameterLayout
from training.soft_gates import SoftGateConfig, anneal_alpha

TRACE_COLUMNS = ["epoch", "alpha", "train_nll", "val_ll_soft", "val_ll_hard_lo", "val_ll_hard_hi"]
SELECTION_MODES = ("soft", "certified")


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 500
    epochs: int = 100
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    gates: SoftGateConfig = field(default_factory=SoftGateConfig)
    certify_stride: int = 10
    certify_iters: int = 500
    certify_epsilon: float = 1e-3
    selection: str = "soft"
    domain_padding: float = 0.5

    def __post_init__(self):
        if isinstance(self.gates, dict):
            self.gates = SoftGateConfig(**self.gates)
        if not self.learning_rate >= 0.0:
            raise ConfigError(f"Learning rate must be non-negative, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"Batch size must be at least 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"Need at least one epoch, got {self.epochs}")
        if self.certify_stride < 0 or self.certify_iters < 0:
            raise ConfigError("Certification stride and budget must be non-negative")
        if self.selection not in SELECTION_MODES:
            raise ConfigError(f"Unknown selection mode '{self.selection}' (expected one of {SELECTION_MODES})")
        if self.domain_padding < 0.0:
            raise ConfigError("Domain padding must be non-negative")
        AdamConfig(self.learning_rate, self.beta1, self.beta2, self.eps)

    def adam(self) -> AdamConfig:
        return AdamConfig(self.learning_rate, self.beta1, self.beta2, self.eps)


@dataclass
class EpochRecord:
    epoch: int
    alpha: float
    train_nll: float
    val_ll_soft: float
    val_ll_hard_lo: float = math.nan
    val_ll_hard_hi: float = math.nan

    @property
    def certified(self) -> bool:
        return not math.isnan(self.val_ll_hard_lo)


def _cell(value: float) -> str:
    return "" if math.isnan(value) else repr(float(value))


@dataclass
class TrainTrace:
    records: List[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord):
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def rows(self) -> List[List[str]]:
        return [[str(r.epoch), _cell(r.alpha), _cell(r.train_nll), _cell(r.val_ll_soft),
                 _cell(r.val_ll_hard_lo), _cell(r.val_ll_hard_hi)] for r in self.records]

    def write_csv(self, path: str):
        with open(path, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            writer.writerows(self.rows())


@dataclass
class TrainResult:
    circuit: Circuit
    trace: TrainTrace
    best_epoch: int
    domain: DomainSpec


class Trainer:
    """Runs the annealed soft-gating training loop for one circuit."""

    def __init__(self, config: Optional[TrainConfig] = None, emit_event_callback=None):
        self.config = config or TrainConfig()
        self.emit_event = emit_event_callback or default_event_handler

    def _is_snapshot_epoch(self, epoch: int) -> bool:
        stride = self.config.certify_stride
        if stride == 0:
            return False
        return (epoch + 1) % stride == 0 or epoch == self.config.epochs - 1

    def certified_ll(self, circuit: Circuit, data: np.ndarray, domain: DomainSpec) -> Tuple[float, float]:
        """(lower, upper) hard-gated mean log-likelihood of ``data``."""
        refinement = RefinementConfig(epsilon=self.config.certify_epsilon, max_iters=self.config.certify_iters,
                                      progress_every=0)
        result = certify_circuit(circuit, domain, config=refinement, emit_event_callback=self.emit_event)
        mean_log = float(np.mean(eval_log_density_batch(circuit, data, HARD)))
        return log_likelihood_bounds(mean_log, result.bounds)

    def fit(self, circuit: Circuit, train: np.ndarray, val: np.ndarray) -> TrainResult:
        cfg = self.config
        train = np.asarray(train, dtype=float)
        val = np.asarray(val, dtype=float)
        for name, data in (("train", train), ("validation", val)):
            if data.ndim != 2 or data.shape[1] != circuit.num_vars or data.shape[0] == 0:
                raise ArgumentError(f"{name} data must be a non-empty N x {circuit.num_vars} matrix")

        domain = DomainSpec.from_data(train, cfg.domain_padding)
        layout = ParameterLayout(circuit)
        theta = layout.pack(circuit)
        optimizer = Adam(layout.size, cfg.adam())
        rng = np.random.Generator(np.random.Philox(cfg.seed))
        trace = TrainTrace()
        best = circuit
        best_score = -math.inf
        best_epoch = -1

        self.emit_event("trainer", EventType.TRAINING_START,
                        f"Training {layout.size} parameters for {cfg.epochs} epochs", "normal",
                        {"parameters": layout.size, "epochs": cfg.epochs, "train_size": len(train)})

        current = circuit
        for epoch in range(cfg.epochs):
            alpha = anneal_alpha(epoch, cfg.epochs, cfg.gates)
            order = rng.permutation(len(train))
            weighted_nll = 0.0
            for start in range(0, len(train), cfg.batch_size):
                batch = train[order[start:start + cfg.batch_size]]
                try:
                    bundle = backward(current, batch, alpha, layout)
                except NumericError as exc:
                    self._abort(epoch, str(exc), best, trace, exc.parameter)
                if not math.isfinite(bundle.nll):
                    self._abort(epoch, f"training NLL became {bundle.nll}", best, trace, None)
                weighted_nll += bundle.nll * len(batch)
                theta = optimizer.step(theta, bundle.to_vector(layout))
                current = layout.unpack(circuit, theta)

            try:
                val_soft = float(np.mean(eval_log_density_batch(current, val, GatingMode.soft(alpha))))
            except NumericError as exc:
                self._abort(epoch, str(exc), best, trace, exc.parameter)
            if not math.isfinite(val_soft):
                self._abort(epoch, f"validation log-likelihood became {val_soft}", best, trace, None)
            record = EpochRecord(epoch=epoch, alpha=alpha, train_nll=weighted_nll / len(train),
                                 val_ll_soft=val_soft)
            if self._is_snapshot_epoch(epoch):
                record.val_ll_hard_lo, record.val_ll_hard_hi = self.certified_ll(current, val, domain)
                self.emit_event("trainer", EventType.CERTIFY_SNAPSHOT,
                                f"Epoch {epoch}: hard validation LL in "
                                f"[{record.val_ll_hard_lo:.4f}, {record.val_ll_hard_hi:.4f}]", "normal",
                                {"epoch": epoch, "lo": record.val_ll_hard_lo, "hi": record.val_ll_hard_hi})
            trace.append(record)
            self.emit_event("trainer", EventType.EPOCH_COMPLETE,
                            f"Epoch {epoch}: alpha {alpha:.2f}, train NLL {record.train_nll:.4f}, "
                            f"val LL {val_soft:.4f}", "low",
                            {"epoch": epoch, "alpha": alpha, "train_nll": record.train_nll,
                             "val_ll_soft": val_soft})

            score = self._selection_score(record)
            if score is not None and score > best_score:
                best_score = score
                best = current
                best_epoch = epoch
                self.emit_event("trainer", EventType.SNAPSHOT_SAVED,
                                f"New best snapshot at epoch {epoch} ({cfg.selection} score {score:.4f})",
                                "normal", {"epoch": epoch, "score": score})

        if best_epoch < 0:
            best, best_epoch = current, cfg.epochs - 1
        return TrainResult(circuit=best, trace=trace, best_epoch=best_epoch, domain=domain)

    def _selection_score(self, record: EpochRecord) -> Optional[float]:
        if self.config.selection == "certified":
            return record.val_ll_hard_lo if record.certified else None
        return record.val_ll_soft

    def _abort(self, epoch: int, reason: str, snapshot: Circuit, trace: TrainTrace, parameter):
        self.emit_event("trainer", EventType.NUMERIC_ABORT, f"Training aborted at epoch {epoch}: {reason}",
                        "critical", {"epoch": epoch, "parameter": parameter})
        raise TrainingAborted(f"Training aborted at epoch {epoch}: {reason}", snapshot=snapshot,
                              trace=trace, parameter=parameter)


def train(circuit: Circuit, train_data: np.ndarray, val_data: np.ndarray, config: Optional[TrainConfig] = None,
          emit_event_callback=None) -> Tuple[Circuit, TrainTrace]:
    result = Trainer(config, emit_event_callback).fit(circuit, train_data, val_data)
    return result.circuit, result.trace

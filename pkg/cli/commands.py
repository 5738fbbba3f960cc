"""
Command Runner - carries out one CLI subcommand against an output directory.

Each public method is one subcommand. It reads what earlier commands wrote
(dataset CSVs, model.json), writes its own artifacts, and records them in
the run manifest. Progress goes through ``emit_event_callback``.
"""

import json
import sys
import os
from typing import Dict, List, Optional

import numpy as np

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.circuit import Circuit
from models.errors import ArgumentError, ConfigError, TrainingAborted
from models.events import EventType, default_event_handler
from models.serialization import load_circuit, save_circuit
from models.tessellation import Box
from models.vtree import vtree_from_spec
from models.builders import build_baseline, build_hfv, build_vt
from data.datasets import load_splits, save_dataset, standardize_and_split
from data.generators import DatasetGenerator
from inference.bounds import DomainSpec
from inference.certified import (certify_circuit, log_likelihood_bounds, monte_carlo_partition,
                                 quadrature_partition_2d)
from inference.evaluator import HARD, GatingMode, eval_log_density_batch
from inference.refinement import RefinementConfig
from training.kmeans import kmeans_init, per_variable_centroids
from training.trainer import Trainer
from cli.config import SAVED_CONFIG_FILE, ExperimentConfig
from cli.exports import (density_grid, load_overlay, tessellation_overlay, verify_inner_boxes,
                         write_density_grid, write_overlay)
from cli.manifest import RunManifest

MODEL_FILE = "model.json"
TRAIN_TRACE_FILE = "trace.csv"
CERTIFY_REPORT_FILE = "report.json"
CERTIFY_TRACE_FILE = "refinement_trace.csv"
EVAL_REPORT_FILE = "eval.json"
GRID_FILE = "grid.csv"
OVERLAY_FILE = "overlay.json"
CONFIG_FILE = SAVED_CONFIG_FILE


def write_json(path: str, document: Dict):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(document, handle, indent=2, sort_keys=True)
        handle.write("\n")


class CommandRunner:
    """Runs subcommands for one experiment config and output directory."""

    def __init__(self, config: ExperimentConfig, output_dir: str, manifest: Optional[RunManifest] = None,
                 emit_event_callback=None):
        self.config = config
        self.output_dir = output_dir
        self.manifest = manifest or RunManifest("library", config.config_hash(), output_dir)
        self.emit_event = emit_event_callback or default_event_handler
        os.makedirs(output_dir, exist_ok=True)

    def _path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def _wrote(self, path: str):
        self.manifest.add(path)
        self.emit_event("runner", EventType.ARTIFACT_WRITTEN, f"Wrote {path}", "low", {"path": path})

    def write_config(self) -> str:
        path = self._path(CONFIG_FILE)
        write_json(path, self.config.to_dict())
        self._wrote(path)
        return path

    # === generate ===

    def generate(self) -> List[str]:
        ds = self.config.dataset
        split = ds.split_spec()
        generator = DatasetGenerator(ds.seed, ds.protocol_noise, emit_event_callback=self.emit_event)
        with self.manifest.phase("generate"):
            raw = generator.generate(ds.name, split.total)
            splits = standardize_and_split(raw, split, seed=ds.seed, name=ds.name)
        written = []
        with self.manifest.phase("write"):
            for dataset in splits:
                paths = save_dataset(dataset, self.output_dir)
                for path in paths:
                    self._wrote(path)
                written.extend(paths)
                self.emit_event("runner", EventType.DATASET_WRITTEN,
                                f"{dataset.name} {dataset.split}: {len(dataset)} rows", "normal",
                                {"split": dataset.split, "rows": len(dataset), "path": paths[0]})
        return written

    # === train ===

    def build_circuit(self, train_points: np.ndarray) -> Circuit:
        model = self.config.model
        dim = train_points.shape[1]
        vtree = vtree_from_spec(model.vtree, dim, model.vtree_seed)
        units = model.units_for(dim)
        if model.kind == "baseline":
            return build_baseline(vtree, units, seed=model.init_seed, data=train_points)
        if model.kind == "vt":
            centroids = kmeans_init(train_points, model.num_cells, model.kmeans_iters, seed=model.init_seed)
            return build_vt(vtree, units, centroids, seed=model.init_seed, data=train_points)
        centroids = per_variable_centroids(train_points, model.num_cells, model.kmeans_iters, seed=model.init_seed)
        return build_hfv(vtree, centroids, units, seed=model.init_seed, joint_cap=model.joint_cap,
                         data=train_points)

    def _model_metadata(self, train_points: np.ndarray, domain: DomainSpec, best_epoch: int,
                        aborted: bool = False) -> Dict:
        model = self.config.model
        return {
            "kind": model.kind,
            "dataset": self.config.dataset.name,
            "vtree": model.vtree,
            "vtree_seed": model.vtree_seed,
            "units": model.units_for(train_points.shape[1]),
            "num_cells": model.num_cells,
            "config_hash": self.config.config_hash(),
            "best_epoch": best_epoch,
            "aborted": aborted,
            "domain": domain.to_dict(),
            "data_bounds": {"lower": [float(v) for v in train_points.min(axis=0)],
                            "upper": [float(v) for v in train_points.max(axis=0)]},
        }

    def train(self, data_dir: Optional[str] = None) -> Dict:
        data_dir = data_dir or self.output_dir
        name = self.config.dataset.name
        train, val, _ = load_splits(data_dir, name)
        if train.dimension != self.config.dimension:
            raise ArgumentError(f"{name} files hold {train.dimension}-D points, expected {self.config.dimension}")

        with self.manifest.phase("build"):
            circuit = self.build_circuit(train.points)
        trainer = Trainer(self.config.train, emit_event_callback=self.emit_event)
        model_path = self._path(MODEL_FILE)
        trace_path = self._path(TRAIN_TRACE_FILE)
        try:
            with self.manifest.phase("train"):
                result = trainer.fit(circuit, train.points, val.points)
        except TrainingAborted as exc:
            domain = DomainSpec.from_data(train.points, self.config.train.domain_padding)
            if exc.trace is not None:
                exc.trace.write_csv(trace_path)
                self._wrote(trace_path)
            if exc.snapshot is not None:
                save_circuit(exc.snapshot, model_path,
                             self._model_metadata(train.points, domain, -1, aborted=True))
                self._wrote(model_path)
            raise

        with self.manifest.phase("save"):
            save_circuit(result.circuit, model_path,
                         self._model_metadata(train.points, result.domain, result.best_epoch))
            self._wrote(model_path)
            result.trace.write_csv(trace_path)
            self._wrote(trace_path)

        last = result.trace.records[-1]
        return {"model": model_path, "trace": trace_path, "best_epoch": result.best_epoch,
                "epochs": len(result.trace.records), "final_val_ll_soft": last.val_ll_soft}

    # === certify / eval ===

    def model_domain(self, metadata: Dict, padding: Optional[float] = None) -> DomainSpec:
        """Data bounds of the training split padded by ``padding`` (default: the certify config)."""
        padding = self.config.certify.domain_padding if padding is None else padding
        if padding < 0.0:
            raise ConfigError("Domain padding must be non-negative")
        bounds = metadata.get("data_bounds")
        if bounds is not None:
            lower = np.asarray(bounds["lower"], dtype=float) - padding
            upper = np.asarray(bounds["upper"], dtype=float) + padding
            return DomainSpec(Box(lower, upper), "data", padding)
        if "domain" in metadata:
            return DomainSpec.from_dict(metadata["domain"])
        raise ConfigError("Model file records no domain; certified bounds need a bounded domain")

    def _refinement_config(self, epsilon: Optional[float], max_iters: Optional[int]) -> RefinementConfig:
        cert = self.config.certify
        return RefinementConfig(epsilon=cert.epsilon if epsilon is None else epsilon,
                                max_iters=cert.max_iters if max_iters is None else max_iters,
                                strategy=cert.strategy)

    def certify(self, model_path: Optional[str] = None, epsilon: Optional[float] = None,
                max_iters: Optional[int] = None, padding: Optional[float] = None,
                cross_check: Optional[bool] = None) -> Dict:
        circuit, metadata = load_circuit(model_path or self._path(MODEL_FILE))
        domain = self.model_domain(metadata, padding)
        with self.manifest.phase("certify"):
            result = certify_circuit(circuit, domain, config=self._refinement_config(epsilon, max_iters),
                                     emit_event_callback=self.emit_event)
        report = result.to_report()
        report["domain"] = domain.to_dict()

        if self.config.certify.cross_check if cross_check is None else cross_check:
            with self.manifest.phase("cross_check"):
                report["cross_check"] = self._cross_check(circuit, domain, result.bounds)

        report_path = self._path(CERTIFY_REPORT_FILE)
        trace_path = self._path(CERTIFY_TRACE_FILE)
        write_json(report_path, report)
        self._wrote(report_path)
        result.write_trace_csv(trace_path)
        self._wrote(trace_path)
        return report

    def _cross_check(self, circuit: Circuit, domain: DomainSpec, bounds) -> Dict:
        cert = self.config.certify
        if circuit.num_vars == 2:
            estimate = quadrature_partition_2d(circuit, domain, cert.quadrature_resolution)
            method = "quadrature"
            slack = 1e-3 * max(bounds.hi, 1e-12)
        else:
            estimate = monte_carlo_partition(circuit, domain, cert.monte_carlo_samples, seed=self.config.dataset.seed)
            method = "monte_carlo"
            slack = 4.0 * estimate.standard_error
        consistent = estimate.consistent_with(bounds, slack)
        if not consistent:
            self.emit_event("runner", EventType.BOUNDS_COMPUTED,
                            f"{method} estimate {estimate.domain_integral:.6g} falls outside {bounds}", "high",
                            {"method": method, "estimate": estimate.domain_integral})
        return {"method": method, "domain_integral": estimate.domain_integral,
                "tail_upper": estimate.tail_upper, "standard_error": estimate.standard_error,
                "consistent": consistent}

    def evaluate(self, model_path: Optional[str] = None, data_dir: Optional[str] = None,
                 max_iters: Optional[int] = None) -> Dict:
        circuit, metadata = load_circuit(model_path or self._path(MODEL_FILE))
        _, _, test = load_splits(data_dir or self.output_dir, self.config.dataset.name)
        domain = self.model_domain(metadata)
        with self.manifest.phase("eval"):
            result = certify_circuit(circuit, domain, config=self._refinement_config(None, max_iters),
                                     emit_event_callback=self.emit_event)
            mean_log = float(np.mean(eval_log_density_batch(circuit, test.points, HARD)))
        lo, hi = log_likelihood_bounds(mean_log, result.bounds)
        report = {"rows": len(test), "mean_log_density": mean_log, "test_ll_lo": lo, "test_ll_hi": hi,
                  "exact": result.bounds.is_exact, "z_lo": result.bounds.lo, "z_hi": result.bounds.hi,
                  "iters": result.iterations}
        path = self._path(EVAL_REPORT_FILE)
        write_json(path, report)
        self._wrote(path)
        return report

    # === exports ===

    def export_grid(self, model_path: Optional[str] = None, resolution: int = 100, mode: str = "hard",
                    alpha: Optional[float] = None) -> str:
        circuit, metadata = load_circuit(model_path or self._path(MODEL_FILE))
        if mode == "hard":
            gating = HARD
        elif mode == "soft":
            gating = GatingMode.soft(alpha if alpha is not None else self.config.train.gates.alpha_end)
        else:
            raise ArgumentError(f"Unknown gating mode '{mode}' (expected hard or soft)")
        if circuit.num_vars != 2:
            raise ArgumentError(f"Grid export supports two-variable models only; this one has {circuit.num_vars}")
        with self.manifest.phase("export_grid"):
            grid = density_grid(circuit, self.model_domain(metadata), resolution, gating)
            path = self._path(GRID_FILE)
            write_density_grid(path, grid)
        self._wrote(path)
        return path

    def export_tessellation(self, model_path: Optional[str] = None) -> str:
        circuit, metadata = load_circuit(model_path or self._path(MODEL_FILE))
        if circuit.num_vars != 2:
            raise ArgumentError(f"Tessellation export supports two-variable models only; "
                                f"this one has {circuit.num_vars}")
        with self.manifest.phase("export_tessellation"):
            overlay = tessellation_overlay(circuit, self.model_domain(metadata))
            path = self._path(OVERLAY_FILE)
            write_overlay(path, overlay)
        self._wrote(path)
        failures = verify_inner_boxes(load_overlay(path))
        if failures:
            self.emit_event("runner", EventType.BOUNDS_COMPUTED,
                            f"{len(failures)} inner boxes failed re-verification", "high",
                            {"failures": failures})
        return path

"""
Certified bounds on partition functions, marginals and conditionals, and
independent numerical cross-checks (midpoint quadrature, Monte Carlo).
"""

import math
import sys
import os
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.circuit import Circuit
from models.errors import ArgumentError, ConfigError, UndefinedBoundError
from models.events import EventType, default_event_handler
from models.tessellation import Box
from inference.bounds import BoundInterval, DomainSpec, as_domain_box
from inference.box_integrator import (BoxIntegrator, CellApproximation, compute_cell_approximations,
                                      vt_cells_are_boxes)
from inference.evaluator import HARD, eval_log_density_batch
from inference.refinement import CertifiedRefiner, RefinementConfig, RefinementResult, TraceRecord


def _needs_domain(circuit: Circuit) -> bool:
    return any(not vt_cells_are_boxes(circuit.nodes[nid]) for nid in circuit.vt_nodes())


def _require_domain(circuit: Circuit, domain) -> Optional[Box]:
    box = as_domain_box(domain, circuit.num_vars)
    if _needs_domain(circuit) and (box is None or not box.is_bounded()):
        raise ConfigError("Certified bounds for VT-gated circuits require a bounded domain")
    return box


def certified_partition_bounds(circuit: Circuit, cell_boxes: Optional[Dict[int, CellApproximation]] = None,
                               domain=None) -> BoundInterval:
    """
    Bounds on Z over all of R^D from per-cell inner/outer boxes, including
    the out-of-domain tail in the upper bound. Circuits without VT gates get
    their exact integral.
    """
    box = _require_domain(circuit, domain)
    if cell_boxes is None:
        cell_boxes = compute_cell_approximations(circuit, box) if box is not None else {}
    integrator = BoxIntegrator(circuit, cell_boxes, domain=box)
    return integrator.integrate(circuit.root, integrator.full_box())


def certified_domain_bounds(circuit: Circuit, cell_boxes: Optional[Dict[int, CellApproximation]] = None,
                            domain=None) -> BoundInterval:
    """Bounds on the integral of f over the domain only (no tail term)."""
    box = _require_domain(circuit, domain)
    if box is None:
        raise ConfigError("Domain-restricted bounds need a domain")
    if cell_boxes is None:
        cell_boxes = compute_cell_approximations(circuit, box)
    integrator = BoxIntegrator(circuit, cell_boxes, domain=box)
    return integrator.integrate(circuit.root, box)


def evidence_outside_domain(evidence: Dict[int, float], domain: Optional[Box]) -> Dict[int, float]:
    if domain is None:
        return {}
    return {var: value for var, value in evidence.items()
            if not domain.lower[var] <= value <= domain.upper[var]}


def marginal_bounds(circuit: Circuit, evidence: Dict[int, float], domain=None, max_iters: int = 0,
                    epsilon: float = 1e-3, emit_event_callback=None) -> BoundInterval:
    """
    Bounds on the marginal of the observed variables: observed leaves give
    their density, every other variable is integrated out. ``max_iters`` > 0
    refines the cell partitions first.
    """
    emit = emit_event_callback or default_event_handler
    box = _require_domain(circuit, domain)
    outside = evidence_outside_domain(evidence, box)
    if outside:
        emit("certified", EventType.EVIDENCE_OUTSIDE_DOMAIN,
             f"Evidence {outside} lies outside the domain; bounds stay valid but may be loose",
             "high", {"variables": sorted(outside)})
    if box is None or not _needs_domain(circuit):
        integrator = BoxIntegrator(circuit, {}, domain=box, evidence=evidence)
        return integrator.integrate(circuit.root, integrator.full_box())
    config = RefinementConfig(epsilon=epsilon, max_iters=max_iters, progress_every=0)
    refiner = CertifiedRefiner(circuit, box, evidence=evidence, config=config, emit_event_callback=emit)
    return refiner.run().bounds


def conditional_bounds(joint: BoundInterval, evidence: BoundInterval) -> BoundInterval:
    """Interval quotient [joint.lo / evidence.hi, joint.hi / evidence.lo]."""
    if not evidence.lo > 0.0:
        raise UndefinedBoundError(
            "Evidence lower bound is zero; refine the evidence bounds further before conditioning")
    return BoundInterval(joint.lo / evidence.hi, joint.hi / evidence.lo)


def log_likelihood_bounds(mean_log_density: float, z_bounds: BoundInterval):
    """(lower, upper) of mean log f(x) - log Z given bounds on Z."""
    log_lo, log_hi = z_bounds.log_bounds()
    lower = mean_log_density - log_hi
    upper = mean_log_density - log_lo if log_lo > -math.inf else math.inf
    return lower, upper


# === Numerical cross-checks ===

@dataclass
class NumericalEstimate:
    """Estimate of the domain integral plus an upper bound on the mass outside the domain."""

    domain_integral: float
    tail_upper: float
    standard_error: float = 0.0

    @property
    def total(self) -> float:
        return self.domain_integral

    def consistent_with(self, bounds: BoundInterval, slack: float) -> bool:
        return (bounds.lo - slack <= self.domain_integral + self.tail_upper
                and self.domain_integral - slack <= bounds.hi)


def tail_upper_bound(circuit: Circuit, domain: Box) -> float:
    """
    Upper bound on the integral of f outside the domain. Gates are at most
    one pointwise, so the ungated circuit's mass outside the domain bounds it.
    """
    ungated = BoxIntegrator(circuit, {}, domain=domain, ignore_gates=True)
    everything = ungated.integrate(circuit.root, ungated.full_box()).hi
    inside = ungated.integrate(circuit.root, domain).lo
    return max(everything - inside, 0.0)


def quadrature_partition_2d(circuit: Circuit, domain, resolution: int = 400) -> NumericalEstimate:
    """Composite midpoint rule for the integral of hard-gated f over a 2-D domain."""
    box = as_domain_box(domain, circuit.num_vars)
    if circuit.num_vars != 2:
        raise ArgumentError("Quadrature cross-check is only available for two variables")
    if box is None or not box.is_bounded():
        raise ConfigError("Quadrature cross-check needs a bounded domain")
    xs = box.lower[0] + (np.arange(resolution) + 0.5) * (box.upper[0] - box.lower[0]) / resolution
    ys = box.lower[1] + (np.arange(resolution) + 0.5) * (box.upper[1] - box.lower[1]) / resolution
    grid = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    cell_area = box.volume() / (resolution * resolution)
    values = np.exp(eval_log_density_batch(circuit, grid, HARD))
    return NumericalEstimate(domain_integral=float(np.sum(values) * cell_area),
                             tail_upper=tail_upper_bound(circuit, box))


def monte_carlo_partition(circuit: Circuit, domain, samples: int = 1_000_000, seed: int = 0,
                          chunk: int = 100_000) -> NumericalEstimate:
    """Uniform Monte-Carlo estimate of the integral of hard-gated f over the domain."""
    box = as_domain_box(domain, circuit.num_vars)
    if box is None or not box.is_bounded():
        raise ConfigError("Monte-Carlo estimate needs a bounded domain")
    rng = np.random.Generator(np.random.Philox(seed))
    total = 0.0
    total_sq = 0.0
    remaining = samples
    while remaining > 0:
        n = min(chunk, remaining)
        values = np.exp(eval_log_density_batch(circuit, box.sample_uniform(rng, n), HARD))
        total += float(np.sum(values))
        total_sq += float(np.sum(values * values))
        remaining -= n
    volume = box.volume()
    mean = total / samples
    variance = max(total_sq / samples - mean * mean, 0.0)
    return NumericalEstimate(domain_integral=volume * mean,
                             tail_upper=tail_upper_bound(circuit, box),
                             standard_error=volume * math.sqrt(variance / samples))


def certify_circuit(circuit: Circuit, domain=None, epsilon: float = 1e-3, max_iters: int = 10000,
                    config: Optional[RefinementConfig] = None, emit_event_callback=None) -> RefinementResult:
    """
    Certified bounds on Z for any circuit. Circuits whose gates are all
    boxes integrate exactly and report a zero-width interval after zero
    iterations; the rest go through anytime refinement.
    """
    emit = emit_event_callback or default_event_handler
    box = _require_domain(circuit, domain)
    if not _needs_domain(circuit):
        integrator = BoxIntegrator(circuit, {}, domain=box)
        z = integrator.integrate(circuit.root, integrator.full_box())
        domain_z = integrator.integrate(circuit.root, box) if box is not None else z
        result = RefinementResult(bounds=z, domain_bounds=domain_z, converged=True, iterations=0,
                                  trace=[TraceRecord(0, z.lo, z.hi, z.gap, 0, 0, domain_z.lo, domain_z.hi)])
    else:
        config = config or RefinementConfig(epsilon=epsilon, max_iters=max_iters)
        result = CertifiedRefiner(circuit, box, config=config, emit_event_callback=emit).run()
    emit("certified", EventType.BOUNDS_COMPUTED, f"Z in {result.bounds} after {result.iterations} iterations",
         "normal", result.to_report())
    return result

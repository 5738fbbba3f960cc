import csv
from unittest.mock import Mock

import numpy as np
import pytest

from models.errors import ConfigError
from models.events import EventType
from models.tessellation import Box
from inference.box_integrator import BoxIntegrator
from inference.refinement import (CertifiedRefiner, RefinementConfig, RefinementStrategy, gap_contribution,
                                  path_weights, refine)
from tests.oracles import random_vt_2d, two_cell_vt, vt_2d_partition

UNIT_SQUARE = Box([-1, -1], [1, 1])


@pytest.fixture
def quiet():
    return Mock()


def uniform_config(**overrides):
    settings = dict(epsilon=1e-3, max_iters=20, strategy="uniform", stop_on_domain_gap=True, progress_every=0)
    settings.update(overrides)
    return RefinementConfig(**settings)


# === CONFIGURATION ===

def test_strategy_parsed_from_string():
    assert RefinementConfig(strategy="uniform").strategy == RefinementStrategy.UNIFORM

def test_unknown_strategy_rejected():
    with pytest.raises(ConfigError):
        RefinementConfig(strategy="random")

def test_epsilon_must_be_positive():
    with pytest.raises(ConfigError):
        RefinementConfig(epsilon=0.0)

def test_negative_budget_rejected():
    with pytest.raises(ConfigError):
        RefinementConfig(max_iters=-1)

def test_refiner_needs_bounded_domain(quiet):
    with pytest.raises(ConfigError):
        CertifiedRefiner(two_cell_vt(), None, emit_event_callback=quiet)
    with pytest.raises(ConfigError):
        CertifiedRefiner(two_cell_vt(), Box([-1, -np.inf], [1, 1]), emit_event_callback=quiet)


# === CONVERGENCE ===

def test_uniform_bisection_converges_on_unit_square(quiet):
    result = CertifiedRefiner(two_cell_vt(), UNIT_SQUARE, config=uniform_config(),
                              emit_event_callback=quiet).run()
    assert result.converged
    assert result.iterations <= 20
    assert result.domain_bounds.gap <= 1e-3

def test_domain_gap_halves_every_two_levels(quiet):
    result = CertifiedRefiner(two_cell_vt(), UNIT_SQUARE, config=uniform_config(epsilon=1e-12, max_iters=8),
                              emit_event_callback=quiet).run()
    gaps = [rec.domain_hi - rec.domain_lo for rec in result.trace]
    assert gaps[0] > 0.0
    for t in range(3, 9):
        assert gaps[t] <= 4.0 * 2.0 ** (-t / 2.0) * gaps[0]

def test_refinement_is_monotone_and_sound(quiet):
    rng = np.random.Generator(np.random.Philox(8))
    for _ in range(10):
        circuit = random_vt_2d(rng, int(rng.integers(2, 6)))
        exact = vt_2d_partition(circuit)
        config = RefinementConfig(epsilon=1e-9, max_iters=200, progress_every=0)
        result = CertifiedRefiner(circuit, Box([-4, -4], [4, 4]), config=config,
                                  emit_event_callback=quiet).run()
        lows = [rec.z_lo for rec in result.trace]
        highs = [rec.z_hi for rec in result.trace]
        assert all(b >= a for a, b in zip(lows, lows[1:]))
        assert all(b <= a for a, b in zip(highs, highs[1:]))
        assert result.bounds.contains(exact, abs_tol=1e-5)
        first = result.trace[0]
        assert result.domain_bounds.gap < first.domain_hi - first.domain_lo

def test_loose_epsilon_converges_immediately(quiet):
    circuit = two_cell_vt()
    result = refine(circuit, Box([-8, -8], [8, 8]), epsilon=2.0, max_iters=0, emit_event_callback=quiet)
    assert result.converged
    assert result.iterations == 0
    assert len(result.trace) == 1


# === BOOKKEEPING ===

def test_running_sums_match_recomputation(quiet):
    circuit = random_vt_2d(np.random.Generator(np.random.Philox(4)), 4)
    refiner = CertifiedRefiner(circuit, Box([-3, -3], [3, 3]),
                               config=RefinementConfig(max_iters=150, resync_every=1000, progress_every=0),
                               emit_event_callback=quiet)
    for _ in range(150):
        if not refiner.step():
            break
    refiner.integrator.invalidate()
    running = refiner.integrator.integrate(circuit.root, refiner.integrator.full_box())
    recomputed = refiner.full_partition_bounds()
    assert running.lo == pytest.approx(recomputed.lo, rel=1e-9, abs=1e-15)
    assert running.hi == pytest.approx(recomputed.hi, rel=1e-9)

def test_partitions_stay_disjoint_and_covering(quiet):
    circuit = random_vt_2d(np.random.Generator(np.random.Philox(6)), 5)
    refiner = CertifiedRefiner(circuit, Box([-3, -3], [3, 3]),
                               config=RefinementConfig(max_iters=100, progress_every=0),
                               emit_event_callback=quiet)
    refiner.run()
    for partition in refiner.partitions.values():
        assert partition.check_integrity() is None
        assert partition.total_volume() == pytest.approx(36.0, rel=1e-12)

def test_path_weights_follow_mixture():
    circuit = two_cell_vt(weights=(0.25, 0.75))
    weights = path_weights(circuit)
    experts = circuit.nodes[circuit.root].experts
    assert weights[circuit.root] == 1.0
    assert weights[experts[0]] == pytest.approx(0.25)
    assert weights[experts[1]] == pytest.approx(0.75)

def test_gap_contribution_is_weighted_upper_mass():
    circuit = two_cell_vt(weights=(0.25, 0.75))
    integrator = BoxIntegrator(circuit)
    quarter = 0.3413447460685429 ** 2
    assert gap_contribution(integrator, circuit.root, Box([0, 0], [1, 1]), 1, 2.0) == pytest.approx(
        0.75 * quarter * 2.0, rel=1e-12)
    assert gap_contribution(integrator, circuit.root, Box.empty(2), 0) == 0.0

def test_cold_start_is_still_sound(quiet):
    circuit = two_cell_vt(expert_means=((0.0, 1.0), (1.0, 0.0)), weights=(0.3, 0.7))
    config = RefinementConfig(max_iters=100, warm_start=False, progress_every=0)
    result = CertifiedRefiner(circuit, Box([-5, -5], [5, 5]), config=config, emit_event_callback=quiet).run()
    assert result.bounds.contains(vt_2d_partition(circuit), abs_tol=1e-5)


# === EVENTS AND TRACES ===

def test_budget_exhaustion_is_reported(quiet):
    refine(two_cell_vt(), UNIT_SQUARE, epsilon=1e-9, max_iters=3, emit_event_callback=quiet)
    last = quiet.call_args_list[-1].args
    assert last[1] == EventType.REFINEMENT_BUDGET_EXHAUSTED
    assert last[3] == "high"

def test_progress_events_follow_stride(quiet):
    config = RefinementConfig(epsilon=1e-9, max_iters=10, progress_every=5)
    CertifiedRefiner(two_cell_vt(), UNIT_SQUARE, config=config, emit_event_callback=quiet).run()
    progress = [c for c in quiet.call_args_list if c.args[1] == EventType.REFINEMENT_PROGRESS]
    assert [c.args[4]["iteration"] for c in progress] == [5, 10]

def test_trace_csv(quiet, tmp_path):
    result = refine(two_cell_vt(), UNIT_SQUARE, epsilon=1e-9, max_iters=5, emit_event_callback=quiet)
    path = tmp_path / "trace.csv"
    result.write_trace_csv(str(path))
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["iter", "z_lo", "z_hi", "gap", "boxes_total", "boxes_boundary"]
    assert len(rows) == len(result.trace) + 1
    assert [int(r[0]) for r in rows[1:]] == list(range(len(result.trace)))

def test_evidence_refinement_contains_marginal(quiet):
    circuit = two_cell_vt()
    expected = 0.5 * np.exp(-0.5 * 0.7 ** 2) / np.sqrt(2 * np.pi)
    result = refine(circuit, Box([-6, -6], [6, 6]), epsilon=1e-6, max_iters=100, evidence={1: 0.7},
                    emit_event_callback=quiet)
    assert result.bounds.contains(expected, abs_tol=1e-12)

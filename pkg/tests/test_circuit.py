import math

import numpy as np
import pytest
from scipy.special import logsumexp

from models.circuit import (Circuit, ProductNode, SumNode, VTSumNode, reduce_single_cell_gates, relabel,
                            validate_structure)
from models.errors import ArgumentError, StructureError
from models.leaves import GaussianLeaf
from models.tessellation import Box
from inference.evaluator import (GatingMode, determinism_report, eval_log_density, eval_log_density_batch,
                                 is_deterministic_at)
from training.soft_gates import soft_weights
from tests.oracles import midpoint_grid_integral, mixture_of_products, random_vt_2d, two_cell_vt

# === HELPERS ===

def leaf(var, mean=0.0, stddev=1.0):
    return GaussianLeaf(var=var, mean=mean, stddev=stddev)


@pytest.fixture
def shifted_vt():
    return two_cell_vt(expert_means=((0.0, 1.0), (1.0, 0.0)), weights=(0.3, 0.7))


# === STRUCTURE ===

def test_single_leaf_is_valid():
    report = validate_structure(Circuit([leaf(0)], 0, 1))
    assert report.smooth and report.decomposable
    assert report.scopes[0] == frozenset([0])

def test_product_over_same_variable_not_decomposable():
    circuit = Circuit([leaf(0), leaf(0, 1.0), ProductNode(children=[0, 1])], 2, 1)
    report = validate_structure(circuit)
    assert not report.decomposable
    assert report.non_decomposable == [2]

def test_sum_over_different_variables_not_smooth():
    circuit = Circuit([leaf(0), leaf(1), SumNode(children=[0, 1], log_weights=np.log([0.5, 0.5]))], 2, 2)
    report = validate_structure(circuit)
    assert not report.smooth
    assert report.non_smooth == [2]

def test_cycle_detected():
    with pytest.raises(StructureError):
        Circuit([ProductNode(children=[1]), ProductNode(children=[0])], 0, 1)

def test_dangling_child_detected():
    with pytest.raises(StructureError) as info:
        Circuit([leaf(0), ProductNode(children=[0, 5])], 1, 1)
    assert info.value.node_id == 1

def test_unnormalized_weights_rejected():
    with pytest.raises(StructureError):
        SumNode(children=[0, 1], log_weights=np.log([0.5, 0.6]))

def test_root_must_cover_all_variables():
    with pytest.raises(StructureError):
        Circuit([leaf(0)], 0, 2)

def test_vt_circuit_is_valid(shifted_vt):
    report = validate_structure(shifted_vt)
    assert report.is_valid
    assert shifted_vt.vt_nodes() == [shifted_vt.root]

def test_coincident_vt_centroids_flagged(shifted_vt):
    gate = shifted_vt.nodes[shifted_vt.root]
    gate.centroids = np.array([[0.5, 0.5], [0.5, 0.5 + 1e-10]])
    report = validate_structure(shifted_vt)
    assert report.smooth and report.decomposable
    assert report.coincident_centroids == [shifted_vt.root]
    assert not report.is_valid

def test_nearby_vt_centroids_accepted(shifted_vt):
    gate = shifted_vt.nodes[shifted_vt.root]
    gate.centroids = np.array([[0.5, 0.5], [0.5, 0.5 + 1e-6]])
    assert validate_structure(shifted_vt).coincident_centroids == []


# === EVALUATION ===

def test_standard_leaf_at_mode():
    assert eval_log_density(Circuit([leaf(0)], 0, 1), [0.0]) == pytest.approx(-0.9189385332046727, abs=1e-15)

def test_hard_gate_picks_cell_above_diagonal(shifted_vt):
    x = np.array([0.0, 0.5])
    p0 = leaf(0, 0.0).log_density(x[0]) + leaf(1, 1.0).log_density(x[1])
    assert eval_log_density(shifted_vt, x) == pytest.approx(math.log(0.3) + p0, abs=1e-12)

def test_soft_gate_equidistant_point_is_uniform(shifted_vt):
    x = np.array([0.0, 0.0])
    for alpha in (0.1, 1.0, 50.0):
        assert np.allclose(soft_weights(x, shifted_vt.nodes[shifted_vt.root].centroids, alpha), [0.5, 0.5])
    p0 = leaf(0, 0.0).log_density(0.0) + leaf(1, 1.0).log_density(0.0)
    p1 = leaf(0, 1.0).log_density(0.0) + leaf(1, 0.0).log_density(0.0)
    expected = logsumexp([math.log(0.5 * 0.3) + p0, math.log(0.5 * 0.7) + p1])
    assert eval_log_density(shifted_vt, x, GatingMode.soft(3.0)) == pytest.approx(expected, abs=1e-12)

def test_soft_mode_needs_positive_alpha():
    with pytest.raises(ArgumentError):
        GatingMode.soft(0.0)

def test_non_finite_input_rejected(shifted_vt):
    with pytest.raises(ArgumentError):
        eval_log_density(shifted_vt, [math.nan, 0.0])

def test_hard_gating_matches_enumeration():
    rng = np.random.Generator(np.random.Philox(11))
    for _ in range(20):
        circuit = random_vt_2d(rng, int(rng.integers(2, 6)))
        vt = circuit.nodes[circuit.root]
        X = rng.uniform(-4.0, 4.0, size=(50, 2))
        got = eval_log_density_batch(circuit, X)
        sq = ((X[:, None, :] - vt.centroids[None, :, :]) ** 2).sum(axis=2)
        cells = np.argmin(sq, axis=1)
        for row, k in enumerate(cells):
            expert = circuit.nodes[vt.experts[k]]
            log_p = sum(circuit.nodes[c].log_density(X[row, circuit.nodes[c].var]) for c in expert.children)
            assert got[row] == pytest.approx(vt.log_mixture[k] + log_p, rel=1e-12)

def test_classical_circuit_integrates_to_one():
    circuit = mixture_of_products(np.random.Generator(np.random.Philox(3)))
    assert midpoint_grid_integral(circuit, Box([-10, -10], [10, 10]), 400) == pytest.approx(1.0, abs=1e-4)

def test_relabeling_preserves_output():
    rng = np.random.Generator(np.random.Philox(5))
    circuit = random_vt_2d(rng, 4)
    permuted = relabel(circuit, [int(i) for i in rng.permutation(len(circuit))])
    X = rng.normal(size=(100, 2))
    assert np.array_equal(eval_log_density_batch(circuit, X), eval_log_density_batch(permuted, X))

def test_single_cell_vt_reduces_to_plain_circuit():
    nodes = [leaf(0, 0.3), leaf(1, -0.2), ProductNode(children=[0, 1]),
             VTSumNode(scope_vars=[0, 1], centroids=[[0.0, 0.0]], log_mixture=[0.0], experts=[2])]
    circuit = Circuit(nodes, 3, 2)
    reduced = reduce_single_cell_gates(circuit)
    assert not reduced.has_gates()
    X = np.random.Generator(np.random.Philox(0)).normal(size=(1000, 2))
    for mode in (GatingMode.hard(), GatingMode.soft(2.0)):
        assert np.allclose(eval_log_density_batch(circuit, X, mode), eval_log_density_batch(reduced, X),
                           rtol=1e-12, atol=0.0)


# === DETERMINISM ===

def test_off_boundary_point_is_deterministic(shifted_vt):
    assert is_deterministic_at(shifted_vt, [0.1, 0.7])

def test_boundary_tie_goes_to_lowest_cell(shifted_vt):
    report = determinism_report(shifted_vt, [0.5, 0.5])
    assert not report.deterministic
    assert report.boundary_hits == [shifted_vt.root]
    assert report.active_cells[shifted_vt.root] == (0,)

def test_plain_sum_with_two_positive_children_is_not_deterministic():
    circuit = Circuit([leaf(0), leaf(0, 1.0), SumNode(children=[0, 1], log_weights=np.log([0.5, 0.5]))], 2, 1)
    assert not is_deterministic_at(circuit, [0.2])

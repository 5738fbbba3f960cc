import math

import numpy as np
import pytest
from scipy.special import ndtr

from models.circuit import Circuit, VTSumNode
from models.errors import ArgumentError
from models.leaves import GaussianLeaf
from models.tessellation import Box
from inference.bounds import BoundInterval
from inference.box_integrator import BoxIntegrator, compute_cell_approximations, integrate_box
from tests.oracles import factorized_gaussian, midpoint_grid_integral, two_cell_vt

ONE_SIGMA = 0.6826894921370859


@pytest.fixture
def standard():
    return factorized_gaussian()


def line_vt(weights=(0.4, 0.6)):
    nodes = [GaussianLeaf(var=0, mean=-1.0, stddev=1.0), GaussianLeaf(var=0, mean=1.0, stddev=1.0),
             VTSumNode(scope_vars=[0], centroids=[[-1.0], [1.0]], log_mixture=np.log(weights), experts=[0, 1])]
    return Circuit(nodes, 2, 1)


# === FACTORIZED CIRCUITS ===

def test_unit_square_mass(standard):
    result = integrate_box(standard, standard.root, Box([-1, -1], [1, 1]))
    assert result.is_exact
    assert result.lo == pytest.approx(ONE_SIGMA ** 2, abs=1e-14)

def test_empty_box_integrates_to_zero(standard):
    assert integrate_box(standard, standard.root, Box.empty(2)) == BoundInterval.zero()

def test_box_dimension_must_match_scope(standard):
    with pytest.raises(ArgumentError):
        integrate_box(standard, standard.root, Box([0], [1]))

def test_leaf_scope_box(standard):
    result = integrate_box(standard, 0, Box([-math.inf], [0.0]))
    assert result.lo == pytest.approx(0.5, abs=1e-15)

def test_evidence_contributes_density(standard):
    integrator = BoxIntegrator(standard, evidence={0: 0.5})
    result = integrator.integrate(standard.root, integrator.full_box())
    assert result.lo == pytest.approx(float(standard.nodes[0].density(0.5)), rel=1e-14)

def test_evidence_outside_box_gives_zero(standard):
    integrator = BoxIntegrator(standard, evidence={0: 3.0})
    assert integrator.integrate(standard.root, Box([-1, -1], [1, 1])) == BoundInterval.zero()


# === BOX-SHAPED GATES ===

def test_one_dimensional_gate_is_exact():
    circuit = line_vt()
    result = integrate_box(circuit, circuit.root, Box([-math.inf], [math.inf]))
    assert result.is_exact
    assert result.lo == pytest.approx(float(ndtr(1.0)), abs=1e-14)

def test_one_dimensional_gate_on_sub_box():
    circuit = line_vt((0.5, 0.5))
    result = integrate_box(circuit, circuit.root, Box([-1.0], [1.0]))
    expected = 0.5 * (ndtr(1.0) - ndtr(0.0)) + 0.5 * (ndtr(0.0) - ndtr(-1.0))
    assert result.lo == pytest.approx(float(expected), abs=1e-14)


# === OBLIQUE GATES ===

def test_identical_experts_give_exact_enclosure():
    circuit = two_cell_vt()
    result = integrate_box(circuit, circuit.root, Box([-1, -1], [1, 1]))
    assert result.contains(0.5 * ONE_SIGMA ** 2, abs_tol=1e-12)
    assert result.gap < 0.5

def test_shifted_experts_contain_quadrature():
    circuit = two_cell_vt(expert_means=((0.0, 1.0), (1.0, 0.0)), weights=(0.3, 0.7))
    box = Box([-1, -1], [1, 1])
    result = integrate_box(circuit, circuit.root, box)
    assert result.contains(midpoint_grid_integral(circuit, box, 400), abs_tol=1e-5)

def test_expert_subnode_ignores_gate():
    circuit = two_cell_vt()
    expert = circuit.nodes[circuit.root].experts[0]
    assert integrate_box(circuit, expert, Box([-1, -1], [1, 1])).lo == pytest.approx(ONE_SIGMA ** 2, abs=1e-14)

def test_missing_geometry_drops_lower_bound():
    circuit = two_cell_vt()
    integrator = BoxIntegrator(circuit)
    result = integrator.integrate(circuit.root, Box([-1, -1], [1, 1]))
    assert result.lo == 0.0
    assert result.hi == pytest.approx(ONE_SIGMA ** 2, abs=1e-14)

def test_cell_approximations_skip_box_gates():
    assert compute_cell_approximations(line_vt(), Box([-3], [3])) == {}
    approx = compute_cell_approximations(two_cell_vt(), Box([-3, -3], [3, 3]))
    assert list(approx) == [two_cell_vt().root]
    assert len(approx[two_cell_vt().root].inner) == 2

def test_cache_invalidation_keeps_static_entries(standard):
    integrator = BoxIntegrator(standard)
    box = Box([-1, -1], [1, 1])
    first = integrator.integrate(standard.root, box)
    integrator.invalidate()
    assert integrator.integrate(standard.root, box) is first

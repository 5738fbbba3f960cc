import numpy as np
import pytest

from models.builders import build_baseline, build_hfv, build_vt
from models.circuit import HFVSumNode, ProductNode, SumNode, VTSumNode, reduce_single_cell_gates, validate_structure
from models.errors import ArgumentError, StructureError
from models.leaves import GaussianLeaf
from models.vtree import Vtree, left_linear, random_binary, vtree_from_spec
from inference.evaluator import eval_log_density_batch

# === VTREES ===

def test_left_linear_shape():
    tree = left_linear(3)
    assert str(tree) == "((X0 X1) X2)"
    assert tree.variables() == [0, 1, 2]
    assert tree.depth() == 2
    assert [str(n) for n in tree.internal_nodes()] == ["(X0 X1)", "((X0 X1) X2)"]

def test_random_binary_is_seeded():
    assert str(random_binary(6, seed=4)) == str(random_binary(6, seed=4))
    assert sorted(random_binary(6, seed=4).variables()) == list(range(6))

def test_vtree_dict_round_trip():
    tree = random_binary(5, seed=1)
    assert str(Vtree.from_dict(tree.to_dict())) == str(tree)

def test_vtree_children_must_be_disjoint():
    with pytest.raises(ArgumentError):
        Vtree(left=Vtree(var=0), right=Vtree(var=0))

def test_vtree_validate_needs_all_variables():
    with pytest.raises(ArgumentError):
        left_linear(2).validate(3)

def test_unknown_vtree_kind():
    with pytest.raises(ArgumentError):
        vtree_from_spec("balanced", 4)


# === BASELINE AND VT ===

def test_baseline_is_smooth_and_decomposable():
    circuit = build_baseline(left_linear(3), units=2, seed=0)
    assert validate_structure(circuit).is_valid
    assert not circuit.has_gates()
    assert sum(isinstance(n, GaussianLeaf) for n in circuit.nodes) == 6

def test_baseline_is_seeded():
    X = np.random.Generator(np.random.Philox(0)).normal(size=(20, 3))
    first = build_baseline(random_binary(3, 2), units=3, seed=7)
    second = build_baseline(random_binary(3, 2), units=3, seed=7)
    assert np.array_equal(eval_log_density_batch(first, X), eval_log_density_batch(second, X))

def test_vt_root_gate():
    centroids = np.array([[0.0, 0.0], [1.0, 1.0], [-1.0, 2.0]])
    circuit = build_vt(left_linear(2), units=2, centroids=centroids, seed=1)
    root = circuit.nodes[circuit.root]
    assert isinstance(root, VTSumNode)
    assert root.num_cells == 3
    assert np.allclose(np.exp(root.log_mixture), 1.0 / 3.0)
    assert all(isinstance(circuit.nodes[e], SumNode) for e in root.experts)
    assert validate_structure(circuit).is_valid

def test_vt_centroid_shape_checked():
    with pytest.raises(ArgumentError):
        build_vt(left_linear(2), units=1, centroids=np.zeros((2, 3)))

def test_units_must_be_positive():
    with pytest.raises(ArgumentError):
        build_baseline(left_linear(2), units=0)

def test_leaf_means_drawn_from_data():
    data = np.array([[5.0, -5.0], [6.0, -6.0]])
    circuit = build_baseline(left_linear(2), units=2, seed=3, data=data)
    for node in circuit.nodes:
        if isinstance(node, GaussianLeaf):
            assert node.mean in data[:, node.var]


# === HFV ===

def test_two_variable_hfv_joint_cells():
    circuit = build_hfv(left_linear(2), [[-1.0, 1.0], [-0.5, 0.5]], units=1, seed=0)
    (nid,) = circuit.hfv_nodes()
    node = circuit.nodes[nid]
    assert node.joint_shape == (2, 2)
    assert [b.variables for b in node.blocks] == [[0], [1]]
    assert validate_structure(circuit).is_valid

def test_three_variable_hfv_chains():
    circuit = build_hfv(left_linear(3), [[-1.0, 1.0], [0.0, 1.0], [-2.0, 0.0, 2.0]], units=1, seed=0)
    shapes = {tuple(tuple(b.variables) for b in circuit.nodes[nid].blocks): circuit.nodes[nid].joint_shape
              for nid in circuit.hfv_nodes()}
    assert shapes == {((0,), (1,)): (2, 2), ((0, 1), (2,)): (4, 3)}

def test_joint_cap_enforced():
    with pytest.raises(StructureError):
        build_hfv(left_linear(2), [[0.0, 1.0, 2.0], [0.0, 1.0, 2.0]], units=1, joint_cap=8)

def test_hfv_needs_sorted_distinct_centroids():
    with pytest.raises(ArgumentError):
        build_hfv(left_linear(2), [[1.0, 0.0], [0.0]], units=1)

def test_hfv_needs_one_list_per_variable():
    with pytest.raises(ArgumentError):
        build_hfv(left_linear(3), [[0.0], [0.0]], units=1)

def test_single_cell_hfv_reduces_to_baseline():
    X = np.random.Generator(np.random.Philox(2)).normal(size=(200, 3))
    for tree in (left_linear(3), random_binary(3, 5)):
        hfv = build_hfv(tree, [[0.0], [0.3], [-0.1]], units=2, seed=11)
        baseline = build_baseline(tree, units=2, seed=11)
        reduced = reduce_single_cell_gates(hfv)
        assert not reduced.has_gates()
        assert all(isinstance(n, ProductNode) for n in reduced.nodes
                   if not isinstance(n, (GaussianLeaf, SumNode)))
        assert np.allclose(eval_log_density_batch(reduced, X), eval_log_density_batch(baseline, X),
                           rtol=1e-12, atol=0.0)
        assert np.allclose(eval_log_density_batch(hfv, X), eval_log_density_batch(baseline, X),
                           rtol=1e-12, atol=0.0)

def test_hfv_nodes_are_hfv_sums():
    circuit = build_hfv(random_binary(4, 1), [[0.0, 1.0]] * 4, units=1, seed=0)
    assert len(circuit.hfv_nodes()) == 3
    assert all(isinstance(circuit.nodes[nid], HFVSumNode) for nid in circuit.hfv_nodes())

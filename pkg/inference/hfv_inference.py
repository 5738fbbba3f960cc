"""
Exact inference for circuits whose gates factor into univariate intervals.

HFV sums, one-dimensional VT sums and single-cell VT sums restrict their
experts to axis-aligned boxes, so box integration is exact all the way
down to the leaves. A VT sum over two or more variables with two or more
cells has oblique cells; it is reported, never approximated.
"""

import sys
import os
from typing import Dict, Optional

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.circuit import Circuit
from models.errors import ArgumentError, TractabilityError, UndefinedBoundError
from inference.box_integrator import BoxIntegrator, vt_cells_are_boxes


def check_tractable(circuit: Circuit):
    """Raise TractabilityError at the first gate whose cells are not products of intervals."""
    for nid in circuit.vt_nodes():
        node = circuit.nodes[nid]
        if not vt_cells_are_boxes(node):
            raise TractabilityError(
                f"VT node {nid} gates {len(node.scope_vars)} variables with {node.num_cells} cells; "
                f"its cells do not factor into intervals", node_id=nid)


def is_tractable(circuit: Circuit) -> bool:
    try:
        check_tractable(circuit)
    except TractabilityError:
        return False
    return True


def _exact(circuit: Circuit, evidence: Optional[Dict[int, float]]) -> float:
    check_tractable(circuit)
    integrator = BoxIntegrator(circuit, {}, evidence=evidence)
    result = integrator.integrate(circuit.root, integrator.full_box())
    return result.hi


def hfv_partition_function(circuit: Circuit) -> float:
    """Exact integral of the circuit over all of R^D."""
    return _exact(circuit, None)


def hfv_marginal(circuit: Circuit, evidence: Optional[Dict[int, float]] = None) -> float:
    """
    Density of the observed variables at their values with every other
    variable integrated out. An observed value selects the univariate cell
    that contains it, so only compatible joint cells contribute.
    """
    return _exact(circuit, evidence or {})


def hfv_conditional(circuit: Circuit, target: Dict[int, float],
                    evidence: Optional[Dict[int, float]] = None) -> float:
    """marginal(target and evidence) / marginal(evidence)."""
    evidence = evidence or {}
    shared = set(target) & set(evidence)
    if shared:
        raise ArgumentError(f"Target and evidence share variables {sorted(shared)}")
    denominator = hfv_marginal(circuit, evidence)
    if not denominator > 0.0:
        raise UndefinedBoundError(f"Evidence {evidence} has zero marginal density; conditional undefined")
    return hfv_marginal(circuit, {**target, **evidence}) / denominator

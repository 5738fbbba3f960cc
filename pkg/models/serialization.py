"""
Model documents: circuits as JSON.

Floats are written with ``repr``: the shortest decimal that parses back to
the same double, never more than 17 significant digits, so it reads back
exactly like ``format(x, ".17g")`` does. Keys are sorted, so
save -> load -> save reproduces the file byte for byte.
"""

import json
import sys
import os
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.circuit import (Circuit, HFVBlock, HFVSumNode, Node, ProductNode, SumNode, VTSumNode,
                            validate_structure)
from models.errors import StructureError
from models.leaves import GaussianLeaf

FORMAT_NAME = "geopc-circuit"
FORMAT_VERSION = 1


def _floats(values) -> List[float]:
    return [float(v) for v in np.asarray(values, dtype=float).reshape(-1)]


def node_record(circuit: Circuit, nid: int) -> Dict[str, Any]:
    node = circuit.nodes[nid]
    scope = circuit.scope_list(nid) if nid in circuit.scopes else None
    record: Dict[str, Any] = {"id": nid, "scope": scope}
    if isinstance(node, GaussianLeaf):
        record["type"] = "gaussian"
        record["params"] = {"var": node.var, "mean": float(node.mean), "stddev": float(node.stddev)}
    elif isinstance(node, ProductNode):
        record["type"] = "product"
        record["children"] = list(node.children)
        record["params"] = {}
    elif isinstance(node, SumNode):
        record["type"] = "sum"
        record["children"] = list(node.children)
        record["params"] = {"log_weights": _floats(node.log_weights)}
    elif isinstance(node, VTSumNode):
        record["type"] = "vt_sum"
        record["children"] = list(node.experts)
        record["params"] = {
            "scope_vars": list(node.scope_vars),
            "centroids": [_floats(row) for row in node.centroids],
            "log_mixture": _floats(node.log_mixture),
        }
    elif isinstance(node, HFVSumNode):
        record["type"] = "hfv_sum"
        record["children"] = node.children
        record["params"] = {
            "blocks": [{"variables": list(b.variables),
                        "centroids": [_floats(c) for c in b.centroids],
                        "experts": list(b.experts)} for b in node.blocks],
            "log_joint_mixture": _floats(node.log_joint_mixture),
        }
    else:
        raise StructureError(f"Cannot serialize node {nid} of type {type(node).__name__}", node_id=nid)
    return record


def circuit_to_document(circuit: Circuit, metadata: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "num_vars": circuit.num_vars,
        "root": circuit.root,
        "nodes": [node_record(circuit, nid) for nid in range(len(circuit.nodes))],
        "metadata": metadata or {},
    }


def _node_from_record(record: Dict[str, Any]) -> Node:
    kind = record.get("type")
    params = record.get("params", {})
    nid = record.get("id")
    try:
        if kind == "gaussian":
            return GaussianLeaf(var=int(params["var"]), mean=float(params["mean"]), stddev=float(params["stddev"]))
        if kind == "product":
            return ProductNode(children=[int(c) for c in record["children"]])
        if kind == "sum":
            return SumNode(children=[int(c) for c in record["children"]],
                           log_weights=np.array(params["log_weights"], dtype=float))
        if kind == "vt_sum":
            return VTSumNode(scope_vars=[int(v) for v in params["scope_vars"]],
                             centroids=np.array(params["centroids"], dtype=float),
                             log_mixture=np.array(params["log_mixture"], dtype=float),
                             experts=[int(c) for c in record["children"]])
        if kind == "hfv_sum":
            blocks = [HFVBlock(variables=[int(v) for v in b["variables"]],
                               centroids=[np.array(c, dtype=float) for c in b["centroids"]],
                               experts=[int(e) for e in b["experts"]]) for b in params["blocks"]]
            return HFVSumNode(blocks=blocks, log_joint_mixture=np.array(params["log_joint_mixture"], dtype=float))
    except KeyError as exc:
        raise StructureError(f"Node {nid} record is missing field {exc}", node_id=nid) from exc
    except StructureError as exc:
        raise StructureError(str(exc), node_id=nid) from exc
    raise StructureError(f"Node {nid} has unknown type '{kind}'", node_id=nid)


def circuit_from_document(document: Dict[str, Any]) -> Tuple[Circuit, Dict[str, Any]]:
    if document.get("format") != FORMAT_NAME:
        raise StructureError(f"Not a circuit document (format {document.get('format')!r})")
    if document.get("version") != FORMAT_VERSION:
        raise StructureError(f"Unsupported circuit document version {document.get('version')}")
    records = document["nodes"]
    for position, record in enumerate(records):
        if record.get("id") != position:
            raise StructureError(f"Node record {position} carries id {record.get('id')}", node_id=position)
    nodes = [_node_from_record(record) for record in records]
    circuit = Circuit(nodes, int(document["root"]), int(document["num_vars"]))
    coincident = validate_structure(circuit).coincident_centroids
    if coincident:
        raise StructureError(f"VT node {coincident[0]} has coincident centroids", node_id=coincident[0])
    return circuit, dict(document.get("metadata", {}))


def dumps(circuit: Circuit, metadata: Optional[Dict[str, Any]] = None) -> str:
    return json.dumps(circuit_to_document(circuit, metadata), sort_keys=True, indent=1) + "\n"


def loads(text: str) -> Tuple[Circuit, Dict[str, Any]]:
    return circuit_from_document(json.loads(text))


def save_circuit(circuit: Circuit, path: str, metadata: Optional[Dict[str, Any]] = None):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(dumps(circuit, metadata))


def load_circuit(path: str) -> Tuple[Circuit, Dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as handle:
        return loads(handle.read())

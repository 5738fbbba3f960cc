"""
Variable trees: binary trees whose leaves are variables.

Internal vtree nodes dictate how a scope splits into a left and a right
block at product and HFV nodes.
"""

import sys
import os
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

# Add the project root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.errors import ArgumentError


@dataclass
class Vtree:
    """A leaf (``var`` set) or an internal node with ``left`` and ``right`` subtrees."""

    var: Optional[int] = None
    left: Optional["Vtree"] = None
    right: Optional["Vtree"] = None

    def __post_init__(self):
        if self.var is None:
            if self.left is None or self.right is None:
                raise ArgumentError("Internal vtree node needs both a left and a right child")
            overlap = set(self.left.variables()) & set(self.right.variables())
            if overlap:
                raise ArgumentError(f"Vtree children share variables {sorted(overlap)}")
        elif self.left is not None or self.right is not None:
            raise ArgumentError("Vtree leaf must not have children")

    @property
    def is_leaf(self) -> bool:
        return self.var is not None

    def variables(self) -> List[int]:
        """Variables in left-to-right leaf order."""
        if self.is_leaf:
            return [self.var]
        return self.left.variables() + self.right.variables()

    def internal_nodes(self) -> List["Vtree"]:
        """Internal nodes, children before parents."""
        if self.is_leaf:
            return []
        return self.left.internal_nodes() + self.right.internal_nodes() + [self]

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def validate(self, num_vars: int):
        """Leaves must be exactly 0..num_vars-1."""
        found = self.variables()
        if sorted(found) != list(range(num_vars)):
            raise ArgumentError(f"Vtree leaves {sorted(found)} do not partition 0..{num_vars - 1}")

    def to_dict(self) -> Dict:
        if self.is_leaf:
            return {"var": self.var}
        return {"left": self.left.to_dict(), "right": self.right.to_dict()}

    @classmethod
    def from_dict(cls, data: Dict) -> "Vtree":
        if "var" in data:
            return cls(var=int(data["var"]))
        return cls(left=cls.from_dict(data["left"]), right=cls.from_dict(data["right"]))

    def __str__(self):
        if self.is_leaf:
            return f"X{self.var}"
        return f"({self.left} {self.right})"


def left_linear(num_vars: int) -> Vtree:
    """(((X0 X1) X2) ... X{D-1})"""
    if num_vars < 1:
        raise ArgumentError("A vtree needs at least one variable")
    tree = Vtree(var=0)
    for var in range(1, num_vars):
        tree = Vtree(left=tree, right=Vtree(var=var))
    return tree


def random_binary(num_vars: int, seed: int) -> Vtree:
    """Shuffle the variables, then split each block at a uniformly drawn point."""
    if num_vars < 1:
        raise ArgumentError("A vtree needs at least one variable")
    rng = np.random.Generator(np.random.Philox(seed))
    order = [int(v) for v in rng.permutation(num_vars)]

    def build(variables: List[int]) -> Vtree:
        if len(variables) == 1:
            return Vtree(var=variables[0])
        cut = int(rng.integers(1, len(variables)))
        return Vtree(left=build(variables[:cut]), right=build(variables[cut:]))

    return build(order)


def vtree_from_spec(kind: str, num_vars: int, seed: int = 0) -> Vtree:
    if kind == "left_linear":
        return left_linear(num_vars)
    if kind == "random_binary":
        return random_binary(num_vars, seed)
    raise ArgumentError(f"Unknown vtree kind '{kind}' (expected left_linear or random_binary)")

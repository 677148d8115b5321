"""Index arithmetic on the infinite dyadic tree.

Nodes are addressed by (s, h): s >= 0 is the scale (depth) and h is the
1-based position within the scale, 1 <= h <= 2^s.  The whole module is
pure arithmetic on immutable values; nothing here stores weights or
parameters.

Dense per-tree arrays elsewhere in the package use the heap layout
flat = 2^s - 1 + (h - 1), for which the children of flat index i are
2i + 1 and 2i + 2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class Direction(enum.Enum):
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True)
class NodeId:
    """Address (s, h) of a tree node; validated on construction."""

    s: int
    h: int

    def __post_init__(self):
        if self.s < 0:
            raise ValueError(f"scale must be nonnegative, got {self.s}")
        if not 1 <= self.h <= 2 ** self.s:
            raise ValueError(f"index h={self.h} out of range [1, 2^{self.s}]")

    def children(self):
        """(left, right) = ((s+1, 2h-1), (s+1, 2h))."""
        return children(self)

    def flat(self):
        """Heap index within a dense tree: 2^s - 1 + (h - 1)."""
        return (1 << self.s) - 1 + (self.h - 1)


@dataclass(frozen=True)
class PathStep:
    """An ancestor together with the branch taken when leaving it."""

    node: NodeId
    direction: Direction


def ancestor(node: NodeId, r: int) -> NodeId:
    """The scale-r ancestor (r, ceil(h * 2^(r-s))) of ``node``.

    ancestor(node, node.s) is the node itself; ancestor(node, 0) is the root.
    """
    if not 0 <= r <= node.s:
        raise ValueError(f"ancestor scale r={r} must lie in [0, {node.s}]")
    # ceil(h * 2^(r-s)) without floats: shift count is nonnegative
    shift = node.s - r
    return NodeId(r, -((-node.h) >> shift))


def children(node: NodeId) -> tuple[NodeId, NodeId]:
    """Left and right daughters of ``node``."""
    return NodeId(node.s + 1, 2 * node.h - 1), NodeId(node.s + 1, 2 * node.h)


def path(node: NodeId) -> list[PathStep]:
    """Root-first steps leading to ``node``; empty for the root.

    Step r records the scale-r ancestor and whether the path continues to
    its left or right daughter.
    """
    steps = []
    for r in range(node.s):
        anc = ancestor(node, r)
        nxt = ancestor(node, r + 1)
        direction = Direction.RIGHT if nxt.h == 2 * anc.h else Direction.LEFT
        steps.append(PathStep(anc, direction))
    return steps


def n_nodes(depth: int) -> int:
    """Number of nodes in the dense tree truncated at ``depth`` (inclusive)."""
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    return (1 << (depth + 1)) - 1


def flat_index(s: int, h: int) -> int:
    """Heap index of node (s, h)."""
    return NodeId(s, h).flat()


def node_of_flat(i: int) -> NodeId:
    """Inverse of ``flat_index``."""
    if i < 0:
        raise ValueError("flat index must be nonnegative")
    s = int(math.floor(math.log2(i + 1)))
    # guard against log2 rounding at powers of two
    while (1 << (s + 1)) - 1 <= i:
        s += 1
    while (1 << s) - 1 > i:
        s -= 1
    return NodeId(s, i - ((1 << s) - 1) + 1)

"""Plane trees stored as depth-first outdegree sequences.

A tree with ``n`` vertices is the array ``k_1, ..., k_n`` of outdegrees in
depth-first (lexicographic) order; ``k_i - 1`` is its Lukasiewicz excursion.
Vertex indices are 0-based in depth-first order, so the root is vertex 0.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class PlaneTree:
    outdegrees: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.outdegrees, dtype=np.int64)
        object.__setattr__(self, "outdegrees", k)
        if k.size and not _valid_excursion(k - 1):
            raise ValueError("outdegrees do not code a plane tree")

    @property
    def n(self) -> int:
        return int(self.outdegrees.size)

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        return isinstance(other, PlaneTree) and np.array_equal(self.outdegrees, other.outdegrees)

    def __hash__(self) -> int:
        return hash(self.outdegrees.tobytes())


@dataclass
class TreeStats:
    n: int
    delta: int
    delta2: int
    h_delta: int
    height: int
    star_index: int  # 0-based depth-first index of the first max-outdegree vertex

    def as_dict(self) -> dict:
        return asdict(self)


def _valid_excursion(x: np.ndarray) -> bool:
    if x.size == 0 or x.min() < -1:
        return False
    w = np.cumsum(x)
    return w[-1] == -1 and bool(np.all(w[:-1] >= 0))


def decode(excursion) -> PlaneTree:
    x = np.asarray(excursion, dtype=np.int64)
    if not _valid_excursion(x):
        raise ValueError("not a Lukasiewicz excursion")
    return PlaneTree(x + 1)


def encode(tree: PlaneTree) -> np.ndarray:
    return tree.outdegrees - 1


def depths(tree: PlaneTree) -> np.ndarray:
    """Depth of every vertex, by one pass with a stack of open child slots."""
    deg = tree.outdegrees.tolist()
    out = [0] * len(deg)
    stack = []
    for i, k in enumerate(deg):
        out[i] = len(stack)
        if stack:
            stack[-1] -= 1
        if k:
            stack.append(k)
        else:
            while stack and stack[-1] == 0:
                stack.pop()
    return np.array(out, dtype=np.int64)


def stats(tree: PlaneTree) -> TreeStats:
    deg = tree.outdegrees
    n = tree.n
    if n == 0:
        raise ValueError("empty tree has no statistics")
    star = int(np.argmax(deg))
    delta = int(deg[star])
    if n == 1:
        return TreeStats(1, 0, 0, 0, 0, 0)
    delta2 = int(max(deg[:star].max(initial=0), deg[star + 1:].max(initial=0)))
    d = depths(tree)
    return TreeStats(n, delta, delta2, int(d[star]), int(d.max()), star)


def children_spans(tree: PlaneTree, v: int) -> list[tuple[int, int]]:
    """Half-open index ranges of the subtrees rooted at the children of ``v``."""
    deg = tree.outdegrees
    k = int(deg[v])
    if k == 0:
        return []
    w = np.cumsum(deg[v + 1:] - 1)
    runmin = np.minimum.accumulate(w)
    # the r-th child subtree closes when the walk first reaches -r
    idx = np.searchsorted(-runmin, np.arange(1, k + 1), side="left")
    ends = (v + 2 + idx).tolist()
    starts = [v + 1] + ends[:-1]
    return list(zip(starts, ends))


def subtree(tree: PlaneTree, start: int, end: int) -> PlaneTree:
    return PlaneTree(tree.outdegrees[start:end])


EMPTY = PlaneTree(np.zeros(0, dtype=np.int64))


def graft_forest(tree: PlaneTree, j: int, k: int) -> list[PlaneTree]:
    """Subtrees of children ``j..k`` (1-based) of the first max-outdegree vertex.

    Indices beyond the outdegree give empty trees.
    """
    if not 1 <= j <= k:
        raise ValueError("need 1 <= j <= k")
    star = int(np.argmax(tree.outdegrees))
    spans = children_spans(tree, star)
    out = []
    for i in range(j, k + 1):
        if i <= len(spans):
            s, e = spans[i - 1]
            out.append(subtree(tree, s, e))
        else:
            out.append(EMPTY)
    return out


def height(tree: PlaneTree) -> int:
    return int(depths(tree).max()) if tree.n else 0


def forest_height(forest) -> int:
    """Largest height among the nonempty components; 0 for an empty forest."""
    hs = [height(t) for t in forest if t.n]
    return max(hs) if hs else 0


def star_height(tree: PlaneTree) -> int:
    """Height of the forest of subtrees hanging from the first max-outdegree vertex."""
    deg = tree.outdegrees
    star = int(np.argmax(deg))
    if deg[star] == 0:
        return 0
    # the subtree of the star closes when the walk started after it first hits -deg
    w = np.cumsum(deg[star + 1:] - 1)
    end = star + 2 + int(np.argmax(w == -int(deg[star])))
    d = depths(tree)
    return int(d[star + 1:end].max() - d[star] - 1)


def stats_array(excursions: np.ndarray) -> np.ndarray:
    """Stats of each row of a ``(count, n)`` excursion array as a structured array."""
    fields = [("n", np.int64), ("delta", np.int64), ("delta2", np.int64),
              ("h_delta", np.int64), ("height", np.int64), ("star_index", np.int64)]
    out = np.empty(len(excursions), dtype=fields)
    for i, row in enumerate(excursions):
        s = stats(decode(row))
        out[i] = (s.n, s.delta, s.delta2, s.h_delta, s.height, s.star_index)
    return out

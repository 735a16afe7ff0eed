"""Fringe machinery: canonical rooted-tree encoding and fringe statistics.

Rooted trees are canonicalized AHU-style: the key of a leaf is ``()`` and the
key of an internal vertex wraps the lexicographically sorted keys of its
children, so two trees get the same key exactly when a root-preserving
isomorphism maps one onto the other.  Keys double as the serialization format
for fringe histograms.

All functions accept either a grown `TreeRecord` or a `BranchingTree`
genealogy; both store parents so that every child has a larger index than its
parent, which lets all subtree quantities be computed in one reverse sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .growth import TreeRecord
from .limits import BranchingTree, sample_edge_bp, sample_memory_bp
from .rng import CounterRng

LEAF_KEY = "()"
OTHER_KEY = "(other)"

TreeLike = Union[TreeRecord, BranchingTree, Sequence[Optional[int]]]


def _parents_of(tree: TreeLike) -> list[Optional[int]]:
    if isinstance(tree, TreeRecord):
        return [None] + tree.parent[1:]
    if isinstance(tree, BranchingTree):
        return list(tree.parents)
    parents = list(tree)
    if not parents or parents[0] is not None:
        raise ValueError("parents[0] must be None (the root)")
    return parents


def _children_lists(parents: Sequence[Optional[int]]) -> list[list[int]]:
    children: list[list[int]] = [[] for _ in parents]
    for v in range(1, len(parents)):
        p = parents[v]
        if p is None or not 0 <= p < v:
            raise ValueError("non-root vertices need a parent with smaller index")
        children[p].append(v)
    return children


def _subtree_sizes(children: list[list[int]]) -> list[int]:
    n = len(children)
    sizes = [1] * n
    for v in range(n - 1, -1, -1):
        for c in children[v]:
            sizes[v] += sizes[c]
    return sizes


def _canonical_keys(
    children: list[list[int]], max_size: Optional[int] = None
) -> tuple[list[Optional[str]], list[int]]:
    """Bottom-up canonical keys; vertices above `max_size` get key None."""
    sizes = _subtree_sizes(children)
    keys: list[Optional[str]] = [None] * len(children)
    for v in range(len(children) - 1, -1, -1):
        if max_size is not None and sizes[v] > max_size:
            continue
        kid_keys = [keys[c] for c in children[v]]
        keys[v] = "(" + "".join(sorted(kid_keys)) + ")"  # type: ignore[arg-type]
    return keys, sizes


def key_size(key: str) -> int:
    """Vertex count encoded by a canonical key."""
    if len(key) % 2 or not key:
        raise ValueError(f"malformed key {key!r}")
    return len(key) // 2


def decode_key(key: str) -> list[str]:
    """Top-level child keys of a canonical key (empty list for a leaf)."""
    if not key.startswith("(") or not key.endswith(")"):
        raise ValueError(f"malformed key {key!r}")
    inner = key[1:-1]
    parts = []
    depth = 0
    start = 0
    for i, ch in enumerate(inner):
        if ch == "(":
            if depth == 0:
                start = i
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                parts.append(inner[start : i + 1])
            if depth < 0:
                raise ValueError(f"malformed key {key!r}")
        else:
            raise ValueError(f"malformed key {key!r}")
    if depth != 0:
        raise ValueError(f"malformed key {key!r}")
    return parts


def reencode_key(key: str) -> str:
    """Canonical fixed point: decode and rebuild the key (validates it)."""
    return "(" + "".join(sorted(reencode_key(c) for c in decode_key(key))) + ")"


def fringe(tree: TreeLike, v: int) -> str:
    """Canonical key of the subtree of all descendants of v, rooted at v."""
    parents = _parents_of(tree)
    if not 0 <= v < len(parents):
        raise IndexError(f"vertex {v} not in tree")
    children = _children_lists(parents)
    keys, _ = _canonical_keys(children)
    return keys[v]  # type: ignore[return-value]


def extended_fringe(tree: TreeLike, v: int, k: int) -> list[str]:
    """Keys (f_0, ..., f_k) of the fringe decomposition along the root path.

    f_0 is the descendant subtree of v; f_i is the subtree hanging off the
    i-th vertex on the path to the root once the branch containing v is
    removed.  Requires depth(v) >= k.
    """
    parents = _parents_of(tree)
    if not 0 <= v < len(parents):
        raise IndexError(f"vertex {v} not in tree")
    path = [v]
    while len(path) <= k:
        p = parents[path[-1]]
        if p is None:
            raise ValueError(f"vertex {v} has depth {len(path) - 1} < k={k}")
        path.append(p)
    children = _children_lists(parents)
    keys, _ = _canonical_keys(children)
    out = [keys[v]]
    for i in range(1, k + 1):
        u, skip = path[i], path[i - 1]
        kid_keys = sorted(keys[c] for c in children[u] if c != skip)
        out.append("(" + "".join(kid_keys) + ")")
    return out  # type: ignore[return-value]


def q_count(s: str, t: str) -> int:
    """Number of root-children subtrees of s isomorphic to t."""
    t_canon = reencode_key(t)
    return sum(1 for c in decode_key(s) if reencode_key(c) == t_canon)


@dataclass
class FringeHistogram:
    """Counts of canonical fringe keys, with an overflow bin for large fringes."""

    counts: dict[str, int]
    other: int
    total: int
    truncation: int
    k: int = 0
    excluded_shallow: int = 0

    def __post_init__(self):
        if sum(self.counts.values()) + self.other != self.total:
            raise ValueError("counts + other must equal total")

    def frequency(self, key: str) -> float:
        if key == OTHER_KEY:
            return self.other / self.total
        return self.counts.get(key, 0) / self.total

    def frequencies(self) -> dict[str, float]:
        out = {key: c / self.total for key, c in self.counts.items()}
        if self.other:
            out[OTHER_KEY] = self.other / self.total
        return out

    def merged(self, other: "FringeHistogram") -> "FringeHistogram":
        """Associative, commutative merge of two compatible histograms."""
        if (self.truncation, self.k) != (other.truncation, other.k):
            raise ValueError("histograms must share truncation and k")
        counts = dict(self.counts)
        for key, c in other.counts.items():
            counts[key] = counts.get(key, 0) + c
        return FringeHistogram(
            counts=counts,
            other=self.other + other.other,
            total=self.total + other.total,
            truncation=self.truncation,
            k=self.k,
            excluded_shallow=self.excluded_shallow + other.excluded_shallow,
        )


def empirical_fringe_distribution(
    tree: TreeLike, k: int = 0, truncation: int = 12
) -> FringeHistogram:
    """Histogram of (extended) fringe keys over all vertices of the tree.

    For k = 0 this scans every vertex in O(n) total, memoizing canonical keys
    bottom-up; fringes larger than `truncation` vertices land in the overflow
    bin.  For k >= 1 the key is the '|'-joined decomposition (f_0|...|f_k);
    vertices of depth < k are excluded and counted in `excluded_shallow`
    (their padded decompositions carry o(1) mass).
    """
    parents = _parents_of(tree)
    children = _children_lists(parents)
    keys, sizes = _canonical_keys(children, max_size=truncation)
    if k == 0:
        counts: dict[str, int] = {}
        other = 0
        for v in range(len(parents)):
            if sizes[v] > truncation:
                other += 1
            else:
                key = keys[v]
                counts[key] = counts.get(key, 0) + 1
        return FringeHistogram(
            counts=counts, other=other, total=len(parents), truncation=truncation
        )
    depth = [0] * len(parents)
    for v in range(1, len(parents)):
        depth[v] = depth[parents[v]] + 1
    counts = {}
    other = 0
    scanned = 0
    excluded = 0
    for v in range(len(parents)):
        if depth[v] < k:
            excluded += 1
            continue
        scanned += 1
        path = [v]
        for _ in range(k):
            path.append(parents[path[-1]])
        total_size = sizes[path[-1]]
        if total_size > truncation:
            other += 1
            continue
        parts = [keys[v]]
        for i in range(1, k + 1):
            u, skip = path[i], path[i - 1]
            parts.append("(" + "".join(sorted(keys[c] for c in children[u] if c != skip)) + ")")
        key = "|".join(parts)  # type: ignore[arg-type]
        counts[key] = counts.get(key, 0) + 1
    return FringeHistogram(
        counts=counts,
        other=other,
        total=scanned,
        truncation=truncation,
        k=k,
        excluded_shallow=excluded,
    )


def bp_fringe_sample(
    delta: float,
    rng: CounterRng,
    method: str = "nested",
    max_nodes: int = 10_000_000,
) -> str:
    """One sample from the limiting fringe law, as a canonical key.

    Runs the memory branching process up to an independent exp(1) horizon
    and returns the canonical key of its genealogy.  ``method="edge"``
    substitutes the edge branching process, which matches in population size
    but not necessarily in genealogy; it is exposed for cross-validation of
    size statistics only.
    """
    if method == "nested":
        bp = sample_memory_bp(delta, rng, exp1=True, max_nodes=max_nodes)
    elif method == "edge":
        bp = sample_edge_bp(delta, rng, exp1=True, max_nodes=max_nodes)
    else:
        raise ValueError("method must be 'nested' or 'edge'")
    return fringe(bp, 0)


def degree_counts(tree: TreeRecord) -> dict[int, int]:
    """Empirical degree counts N_k: how many vertices have degree exactly k."""
    counts: dict[int, int] = {}
    for d in tree.degree:
        counts[d] = counts.get(d, 0) + 1
    return dict(sorted(counts.items()))

"""Trees, BFS layouts, generators and the two tree decompositions.

Vertices are always ``0..m-1``. Children are visited in ascending vertex id,
so every layout is a deterministic function of ``(tree, root)``.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "TreeError",
    "InfeasibleTreeSpec",
    "Tree",
    "BfsLayout",
    "SubTree",
    "TreeSpec",
    "bfs_order",
    "partition_tree",
    "partition_tree_k",
    "count_leaves",
    "find_bare_paths",
    "tree_from_prufer",
    "gen_tree",
    "parse_tree_spec",
    "dump_tree",
    "load_tree",
]


class TreeError(ValueError):
    """Input is not a tree (disconnected, cyclic, bad ids)."""


class InfeasibleTreeSpec(ValueError):
    """No tree satisfies the requested family contract."""


class Tree:
    """Undirected tree on vertices ``0..m-1`` with sorted adjacency lists."""

    __slots__ = ("m", "adj", "root")

    def __init__(self, m: int, edges: Iterable[tuple[int, int]], root: int | None = None):
        if m < 1:
            raise TreeError("a tree needs at least one vertex")
        nbrs: list[list[int]] = [[] for _ in range(m)]
        count = 0
        for u, w in edges:
            u, w = int(u), int(w)
            if not (0 <= u < m and 0 <= w < m) or u == w:
                raise TreeError(f"bad edge ({u}, {w}) for m={m}")
            nbrs[u].append(w)
            nbrs[w].append(u)
            count += 1
        if count != m - 1:
            raise TreeError(f"{count} edges for {m} vertices")
        self.m = m
        self.adj = tuple(tuple(sorted(a)) for a in nbrs)
        if any(len(set(a)) != len(a) for a in self.adj):
            raise TreeError("parallel edges")
        # m-1 edges + connected => acyclic
        seen = [False] * m
        seen[0] = True
        stack = [0]
        reached = 1
        while stack:
            x = stack.pop()
            for y in self.adj[x]:
                if not seen[y]:
                    seen[y] = True
                    reached += 1
                    stack.append(y)
        if reached != m:
            raise TreeError("graph is disconnected (or has a cycle)")
        if root is not None and not 0 <= root < m:
            raise TreeError(f"root {root} out of range")
        self.root = root

    def edges(self) -> list[tuple[int, int]]:
        return [(u, w) for u in range(self.m) for w in self.adj[u] if u < w]

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    def degrees(self) -> list[int]:
        return [len(a) for a in self.adj]

    @property
    def max_degree(self) -> int:
        return max((len(a) for a in self.adj), default=0)

    def __eq__(self, other):
        return isinstance(other, Tree) and self.m == other.m and self.adj == other.adj

    def __hash__(self):
        return hash((self.m, self.adj))

    def __repr__(self):
        return f"Tree(m={self.m}, max_degree={self.max_degree})"


@dataclass(frozen=True)
class BfsLayout:
    """BFS ordering ``v_0..v_{m-1}`` and the index sets built on it.

    Everything except ``order``/``position``/``parent`` is indexed by BFS
    label, not by vertex id. ``d``, ``ch``, ``pre`` and ``suc`` are dicts
    keyed by the labels in ``J``; ``pre``/``suc`` hold ``None`` at the ends.
    """

    order: tuple[int, ...]
    position: tuple[int, ...]
    parent: tuple[int | None, ...]
    J: tuple[int, ...]
    d: dict
    ch: dict
    pre: dict
    suc: dict

    @property
    def m(self) -> int:
        return len(self.order)

    def children(self, i: int) -> range:
        """Labels of the children of ``v_i``."""
        if i not in self.d:
            return range(0)
        return range(self.ch[i], self.ch[i] + self.d[i])


def bfs_order(tree: Tree, root: int | None = None) -> BfsLayout:
    if not isinstance(tree, Tree):
        raise TreeError("bfs_order expects a Tree")
    if root is None:
        root = tree.root if tree.root is not None else 0
    if not 0 <= root < tree.m:
        raise TreeError(f"root {root} out of range")
    m = tree.m
    parent: list[int | None] = [None] * m
    position = [-1] * m
    order = [root]
    position[root] = 0
    queue = deque([root])
    while queue:
        x = queue.popleft()
        for y in tree.adj[x]:
            if position[y] < 0:
                position[y] = len(order)
                parent[y] = x
                order.append(y)
                queue.append(y)
    if len(order) != m:
        raise TreeError("BFS did not reach every vertex")

    J: list[int] = []
    d: dict = {}
    ch: dict = {}
    for i, x in enumerate(order):
        kids = len(tree.adj[x]) - (0 if i == 0 else 1)
        if i == 0 or kids > 0:
            J.append(i)
            d[i] = kids
    nxt = 1
    for i in J:
        ch[i] = nxt
        nxt += d[i]
    pre = {j: (J[k - 1] if k > 0 else None) for k, j in enumerate(J)}
    suc = {j: (J[k + 1] if k + 1 < len(J) else None) for k, j in enumerate(J)}
    return BfsLayout(tuple(order), tuple(position), tuple(parent), tuple(J), d, ch, pre, suc)


@dataclass(frozen=True)
class SubTree:
    """A subtree of a host tree, kept in the host's vertex ids."""

    vertices: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]

    def compact(self, root: int | None = None) -> tuple[Tree, dict]:
        """Relabel to ``0..k-1``; returns the tree and the host->local map."""
        local = {v: k for k, v in enumerate(self.vertices)}
        t = Tree(len(self.vertices), [(local[a], local[b]) for a, b in self.edges],
                 root=None if root is None else local[root])
        return t, local


def _subtree_sizes(tree: Tree, root: int):
    lay = bfs_order(tree, root)
    size = [1] * tree.m
    depth = [0] * tree.m
    for x in lay.order[1:]:
        depth[x] = depth[lay.parent[x]] + 1
    for x in reversed(lay.order[1:]):
        size[lay.parent[x]] += size[x]
    return lay, size, depth


def partition_tree_k(tree: Tree, k: int, root: int = 0) -> tuple[SubTree, SubTree, int]:
    """Split ``tree`` into ``S`` and ``L`` sharing one vertex, ``k+1 <= |S| <= 2k``.

    Descends to the deepest vertex whose subtree has more than ``k`` vertices
    and takes the shortest prefix of its children (ascending id) whose
    subtrees hold at least ``k`` vertices. ``k = 0`` gives ``S = {root}``.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    if k >= tree.m:
        raise ValueError(f"k={k} needs a tree with more than k vertices")
    all_edges = tuple(tree.edges())
    if k == 0:
        return SubTree((root,), ()), SubTree(tuple(range(tree.m)), all_edges), root

    lay, size, depth = _subtree_sizes(tree, root)
    v = max((x for x in range(tree.m) if size[x] > k), key=lambda x: (depth[x], -x))
    kids = [y for y in tree.adj[v] if lay.parent[y] == v]
    taken: list[int] = []
    total = 0
    for y in kids:
        taken.append(y)
        total += size[y]
        if total >= k:
            break

    s_vertices = {v}
    stack = list(taken)
    while stack:
        x = stack.pop()
        s_vertices.add(x)
        stack.extend(y for y in tree.adj[x] if lay.parent[y] == x)
    s_edges = tuple(e for e in all_edges if e[0] in s_vertices and e[1] in s_vertices)
    l_vertices = set(range(tree.m)) - (s_vertices - {v})
    l_edges = tuple(e for e in all_edges if e[0] in l_vertices and e[1] in l_vertices)
    S = SubTree(tuple(sorted(s_vertices)), s_edges)
    L = SubTree(tuple(sorted(l_vertices)), l_edges)
    return S, L, v


def partition_tree(tree: Tree, alpha: float) -> tuple[SubTree, SubTree, int]:
    if not 0 <= alpha < 1:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    return partition_tree_k(tree, int(np.floor(alpha * tree.m)))


def count_leaves(tree: Tree) -> int:
    return sum(1 for a in tree.adj if len(a) == 1)


def _bare_segments(tree: Tree) -> list[list[int]]:
    """Maximal bare paths, as vertex lists, covering every edge exactly once."""
    deg = tree.degrees()
    if tree.m == 1:
        return []
    segments = []
    seen_edge = set()
    starts = [x for x in range(tree.m) if deg[x] != 2]
    if not starts:  # unreachable for trees, kept for safety
        starts = [0]
    for a in starts:
        for y in tree.adj[a]:
            if (min(a, y), max(a, y)) in seen_edge:
                continue
            seg = [a, y]
            seen_edge.add((min(a, y), max(a, y)))
            prev, cur = a, y
            while deg[cur] == 2:
                nxt = tree.adj[cur][0] if tree.adj[cur][0] != prev else tree.adj[cur][1]
                seen_edge.add((min(cur, nxt), max(cur, nxt)))
                seg.append(nxt)
                prev, cur = cur, nxt
            segments.append(seg)
    return segments


def find_bare_paths(tree: Tree, k: int, avoid: Iterable[int] = ()) -> list[tuple[int, ...]]:
    """Greedy vertex-disjoint bare paths with ``k`` edges each.

    Each maximal bare segment is cut into consecutive windows of ``k+1``
    vertices; a window is skipped past a segment endpoint that an earlier
    window (or ``avoid``) already claimed.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    used = set(avoid)
    paths = []
    for seg in _bare_segments(tree):
        pos = 0
        while pos + k < len(seg):
            window = seg[pos:pos + k + 1]
            clash = [j for j, x in enumerate(window) if x in used]
            if clash:
                pos += clash[-1] + 1
                continue
            paths.append(tuple(window))
            used.update(window)
            pos += k + 1
    return paths


def tree_from_prufer(seq: Sequence[int], m: int | None = None) -> Tree:
    """Decode a Prüfer sequence of length ``m-2``."""
    if m is None:
        m = len(seq) + 2
    if len(seq) != m - 2:
        raise ValueError("Prüfer sequence must have length m-2")
    if m == 1:
        return Tree(1, [])
    degree = [1] * m
    for x in seq:
        if not 0 <= x < m:
            raise ValueError(f"label {x} out of range")
        degree[x] += 1
    leaves = [x for x in range(m) if degree[x] == 1]
    heapq.heapify(leaves)
    edges = []
    for x in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, x))
        degree[x] -= 1
        if degree[x] == 1:
            heapq.heappush(leaves, x)
    a, b = heapq.heappop(leaves), heapq.heappop(leaves)
    edges.append((a, b))
    return Tree(m, edges)


FAMILIES = ("path", "star", "caterpillar", "spider", "random-prufer", "degree-one-or-delta")


@dataclass(frozen=True)
class TreeSpec:
    family: str
    m: int
    max_degree: int | None = None
    params: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown tree family {self.family!r}")
        if self.m < 1:
            raise ValueError("tree size must be positive")


def degree_one_or_delta_feasible(m: int, delta: int) -> bool:
    if m == 2:
        return delta >= 1
    if delta < 2 or m < 2:
        return False
    return m >= delta + 1 and (m - 2) % (delta - 1) == 0


def _gen_degree_one_or_delta(m, delta, rng):
    if not degree_one_or_delta_feasible(m, delta):
        raise InfeasibleTreeSpec(
            f"no tree on {m} vertices has all degrees in {{1, {delta}}}"
            " (need m = 2, or m >= delta+1 with m = 2 mod delta-1)")
    if m == 2:
        return Tree(2, [(0, 1)])
    edges = [(0, j) for j in range(1, delta + 1)]
    leaves = list(range(1, delta + 1))
    nxt = delta + 1
    while nxt < m:
        pick = int(rng.integers(len(leaves)))
        x = leaves[pick]
        leaves[pick] = leaves[-1]
        leaves.pop()
        for _ in range(delta - 1):
            edges.append((x, nxt))
            leaves.append(nxt)
            nxt += 1
    return Tree(m, edges)


def _cap(spec: TreeSpec) -> int:
    return spec.max_degree if spec.max_degree is not None else max(spec.m - 1, 1)


def _gen_caterpillar(spec, rng):
    m, cap = spec.m, _cap(spec)
    if m <= 2:
        return Tree(m, [(0, 1)] if m == 2 else [])
    if cap < 2:
        raise InfeasibleTreeSpec("a caterpillar on more than 2 vertices needs max degree >= 2")
    spine = int(spec.params.get("spine", max(2, m // 2)))
    spine = min(max(spine, 1), m)
    # spine ends take cap-1 legs, inner spine vertices cap-2
    if spine == 1:
        free = [cap]
    else:
        free = [cap - 1] + [cap - 2] * (spine - 2) + [cap - 1]
    legs = m - spine
    if legs > sum(free):
        raise InfeasibleTreeSpec(f"spine of {spine} cannot carry {legs} legs under degree cap {cap}")
    edges = [(j, j + 1) for j in range(spine - 1)]
    nxt = spine
    for _ in range(legs):
        options = [j for j in range(spine) if free[j] > 0]
        j = options[int(rng.integers(len(options)))]
        free[j] -= 1
        edges.append((j, nxt))
        nxt += 1
    return Tree(m, edges)


def _gen_spider(spec, rng):
    m, cap = spec.m, _cap(spec)
    if m == 1:
        return Tree(1, [])
    legs = int(spec.params.get("legs", min(cap, 3)))
    legs = max(1, min(legs, m - 1))
    if legs > cap:
        raise InfeasibleTreeSpec(f"{legs} legs exceed degree cap {cap}")
    edges = []
    nxt = 1
    body = m - 1
    for j in range(legs):
        length = body // legs + (1 if j < body % legs else 0)
        prev = 0
        for _ in range(length):
            edges.append((prev, nxt))
            prev = nxt
            nxt += 1
    return Tree(m, edges)


def _gen_prufer(spec, rng):
    m, cap = spec.m, _cap(spec)
    if m <= 2:
        return Tree(m, [(0, 1)] if m == 2 else [])
    if cap < 2:
        raise InfeasibleTreeSpec("trees on more than 2 vertices need max degree >= 2")
    seq = spec.params.get("sequence")
    if seq is not None:
        t = tree_from_prufer(list(seq), m)
        if t.max_degree > cap:
            raise InfeasibleTreeSpec("given Prüfer sequence exceeds the degree cap")
        return t
    # label x appears deg(x)-1 times; sample each position among labels below the cap
    counts = np.zeros(m, dtype=np.int64)
    seq = []
    for _ in range(m - 2):
        open_labels = np.flatnonzero(counts < cap - 1)
        x = int(open_labels[int(rng.integers(len(open_labels)))])
        counts[x] += 1
        seq.append(x)
    return tree_from_prufer(seq, m)


def gen_tree(spec: TreeSpec, rng: np.random.Generator) -> Tree:
    """Generate a tree for ``spec``; raises InfeasibleTreeSpec, never approximates."""
    m, cap = spec.m, _cap(spec)
    if m == 2:
        if cap < 1:
            raise InfeasibleTreeSpec("degree cap below 1")
        return Tree(2, [(0, 1)])
    if spec.family == "path":
        if m > 2 and cap < 2:
            raise InfeasibleTreeSpec("a path on more than 2 vertices has max degree 2")
        return Tree(m, [(j, j + 1) for j in range(m - 1)])
    if spec.family == "star":
        if m - 1 > cap:
            raise InfeasibleTreeSpec(f"star on {m} vertices exceeds degree cap {cap}")
        return Tree(m, [(0, j) for j in range(1, m)])
    if spec.family == "caterpillar":
        return _gen_caterpillar(spec, rng)
    if spec.family == "spider":
        return _gen_spider(spec, rng)
    if spec.family == "random-prufer":
        return _gen_prufer(spec, rng)
    if spec.family == "degree-one-or-delta":
        if spec.max_degree is None:
            raise InfeasibleTreeSpec("degree-one-or-delta needs an explicit Delta")
        return _gen_degree_one_or_delta(m, spec.max_degree, rng)
    raise ValueError(spec.family)


_ALIASES = {"random": "random-prufer", "prufer": "random-prufer", "onedelta": "degree-one-or-delta",
            "delta": "degree-one-or-delta"}


def parse_tree_spec(text: str) -> TreeSpec:
    """Parse ``family:size[:param...]``, e.g. ``random:100:deg5`` or ``spider:50:deg4:legs4``.

    Parameters are ``degN`` (degree cap), ``legsN``, ``spineN``.
    """
    parts = text.strip().split(":")
    if len(parts) < 2:
        raise ValueError(f"tree spec {text!r} must look like family:size[:params]")
    family = _ALIASES.get(parts[0], parts[0])
    try:
        m = int(parts[1])
    except ValueError:
        raise ValueError(f"bad tree size in {text!r}") from None
    cap = None
    params = {}
    for token in parts[2:]:
        key = token.rstrip("0123456789")
        value = token[len(key):]
        if not value:
            raise ValueError(f"bad tree parameter {token!r}")
        if key == "deg":
            cap = int(value)
        elif key in ("legs", "spine"):
            params[key] = int(value)
        else:
            raise ValueError(f"unknown tree parameter {token!r}")
    return TreeSpec(family, m, cap, params)


def dump_tree(tree: Tree) -> str:
    lines = [f"tree m={tree.m}"]
    lines += [f"{u} {w}" for u, w in tree.edges()]
    return "\n".join(lines) + "\n"


def load_tree(text: str) -> Tree:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith("tree m="):
        raise TreeError("missing 'tree m=<m>' header")
    m = int(lines[0].split("=", 1)[1])
    edges = []
    for ln in lines[1:]:
        a, b = ln.split()
        edges.append((int(a), int(b)))
    return Tree(m, edges)

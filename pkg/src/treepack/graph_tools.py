"""Host graphs, random subgraphs, expansion checks, generalized matching, path connector.

Graphs here are small (desk scale), so adjacency is a list of Python sets
plus lazily built integer bitmask rows for the subset enumerations.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

__all__ = [
    "HostGraph",
    "sample_subgraph",
    "gnp",
    "ExpansionVerdict",
    "check_expansion",
    "EXACT_THRESHOLD",
    "MatchingInstance",
    "generalized_matching",
    "check_generalized_matching",
    "ConnectorFailure",
    "connect_pairs",
    "check_paths",
    "dump_graph",
    "load_graph",
]

EXACT_THRESHOLD = 16


class HostGraph:
    """Simple undirected graph on ``0..n-1``."""

    def __init__(self, n: int, edges: Iterable[tuple[int, int]] = ()):
        if n < 0:
            raise ValueError("n must be non-negative")
        self.n = n
        self.adj: list[set[int]] = [set() for _ in range(n)]
        self._masks = None
        for u, w in edges:
            self.add_edge(u, w)

    @classmethod
    def complete(cls, n: int) -> "HostGraph":
        g = cls(n)
        for u in range(n):
            g.adj[u] = set(range(n)) - {u}
        return g

    def add_edge(self, u: int, w: int) -> None:
        u, w = int(u), int(w)
        if u == w:
            raise ValueError(f"loop at {u}")
        if not (0 <= u < self.n and 0 <= w < self.n):
            raise ValueError(f"edge ({u}, {w}) out of range for n={self.n}")
        self.adj[u].add(w)
        self.adj[w].add(u)
        self._masks = None

    def remove_edge(self, u: int, w: int) -> None:
        self.adj[u].discard(w)
        self.adj[w].discard(u)
        self._masks = None

    def has_edge(self, u: int, w: int) -> bool:
        return w in self.adj[u]

    def edges(self) -> list[tuple[int, int]]:
        return [(u, w) for u in range(self.n) for w in sorted(self.adj[u]) if u < w]

    @property
    def num_edges(self) -> int:
        return sum(len(a) for a in self.adj) // 2

    def degree(self, u: int) -> int:
        return len(self.adj[u])

    def min_degree(self) -> int:
        return min((len(a) for a in self.adj), default=0)

    def max_degree(self) -> int:
        return max((len(a) for a in self.adj), default=0)

    @property
    def masks(self) -> list[int]:
        if self._masks is None:
            self._masks = [sum(1 << w for w in a) for a in self.adj]
        return self._masks

    def induced(self, vertices) -> tuple["HostGraph", list[int]]:
        """Induced subgraph relabelled to ``0..k-1``; returns it and the local->host list."""
        verts = [int(v) for v in vertices]
        local = {v: k for k, v in enumerate(verts)}
        h = HostGraph(len(verts))
        for k, v in enumerate(verts):
            h.adj[k] = {local[w] for w in self.adj[v] if w in local}
        return h, verts

    def copy(self) -> "HostGraph":
        h = HostGraph(self.n)
        h.adj = [set(a) for a in self.adj]
        return h

    def union(self, other: "HostGraph") -> "HostGraph":
        if other.n != self.n:
            raise ValueError("union needs graphs on the same vertex set")
        h = HostGraph(self.n)
        h.adj = [a | b for a, b in zip(self.adj, other.adj)]
        return h

    def __eq__(self, other):
        return isinstance(other, HostGraph) and self.n == other.n and self.adj == other.adj

    def __repr__(self):
        return f"HostGraph(n={self.n}, edges={self.num_edges})"


def sample_subgraph(g: HostGraph, p: float, rng: np.random.Generator) -> HostGraph:
    """Keep every edge of ``g`` independently with probability ``p``."""
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    edges = g.edges()
    keep = rng.random(len(edges)) < p
    return HostGraph(g.n, (e for e, k in zip(edges, keep) if k))


def gnp(n: int, p: float, rng: np.random.Generator) -> HostGraph:
    return sample_subgraph(HostGraph.complete(n), p, rng)


# ---------------------------------------------------------------------------
# expansion

@dataclass
class ExpansionVerdict:
    status: str  # "holds" | "fails" | "sampled-no-counterexample"
    condition: str | None = None  # "E1" or "E2" when failing
    witness: tuple | None = None
    detail: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.status == "holds"

    @property
    def fails(self) -> bool:
        return self.status == "fails"


def _bits(mask: int) -> tuple[int, ...]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return tuple(out)


def _expansion_sizes(wsize: int, d: float) -> tuple[int, int]:
    """Largest ``|X|`` tested by E1 and the set size at which E2 is tested."""
    bound = wsize / (2.0 * d)
    e1_max = math.ceil(bound) - 1
    e2_size = max(1, math.ceil(bound))
    return e1_max, e2_size


def _e1_bad(g: HostGraph, xmask: int, wmask: int, d: float) -> bool:
    nb = 0
    for x in _bits(xmask):
        nb |= g.masks[x]
    nb &= ~xmask & wmask
    return bin(nb).count("1") < d * bin(xmask).count("1")


def _e2_partner(g: HostGraph, xmask: int, size: int, full: int) -> int | None:
    # vertices outside X with no neighbour in X
    nb = 0
    for x in _bits(xmask):
        nb |= g.masks[x]
    far = full & ~xmask & ~nb
    if bin(far).count("1") < size:
        return None
    y = 0
    for b in _bits(far)[:size]:
        y |= 1 << b
    return y


def check_expansion(g: HostGraph, W, d: float, mode: str = "exact", trials: int = 1000,
                    rng: np.random.Generator | None = None) -> ExpansionVerdict:
    """Test whether ``g`` d-expands into ``W``.

    E1: ``|N(X) \\ X| \\cap W`` has at least ``d|X|`` vertices for ``1 <= |X| < |W|/(2d)``.
    E2: some edge joins any two disjoint sets of size at least ``|W|/(2d)``;
    E2 is monotone under growing the sets, so only the smallest size is checked.

    ``exact`` enumerates every candidate set (vertex count at most
    ``EXACT_THRESHOLD``). ``sampled`` tries ``trials`` random sets per condition
    and can only refute: when nothing is found the verdict is
    ``sampled-no-counterexample``, never ``holds``.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    W = sorted({int(w) for w in W})
    if any(not 0 <= w < g.n for w in W):
        raise ValueError("W must be a subset of the vertex set")
    wmask = sum(1 << w for w in W)
    full = (1 << g.n) - 1
    e1_max, e2_size = _expansion_sizes(len(W), d)
    info = {"e1_max_size": e1_max, "e2_size": e2_size, "mode": mode}

    if mode == "exact":
        if g.n > EXACT_THRESHOLD:
            raise ValueError(f"exact expansion check refused for n={g.n} > {EXACT_THRESHOLD}")
        verts = range(g.n)
        for size in range(1, e1_max + 1):
            for X in itertools.combinations(verts, size):
                xmask = sum(1 << x for x in X)
                if _e1_bad(g, xmask, wmask, d):
                    return ExpansionVerdict("fails", "E1", (X,), info)
        if 2 * e2_size <= g.n:
            for X in itertools.combinations(verts, e2_size):
                xmask = sum(1 << x for x in X)
                y = _e2_partner(g, xmask, e2_size, full)
                if y is not None:
                    return ExpansionVerdict("fails", "E2", (X, _bits(y)), info)
        return ExpansionVerdict("holds", None, None, info)

    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    if rng is None:
        raise ValueError("sampled mode needs an rng")
    info["trials"] = trials
    if e1_max >= 1:
        for _ in range(trials):
            size = int(rng.integers(1, min(e1_max, g.n) + 1))
            X = tuple(sorted(rng.choice(g.n, size=size, replace=False).tolist()))
            if _e1_bad(g, sum(1 << x for x in X), wmask, d):
                return ExpansionVerdict("fails", "E1", (X,), info)
    if 2 * e2_size <= g.n:
        for _ in range(trials):
            X = tuple(sorted(rng.choice(g.n, size=e2_size, replace=False).tolist()))
            y = _e2_partner(g, sum(1 << x for x in X), e2_size, full)
            if y is not None:
                return ExpansionVerdict("fails", "E2", (X, _bits(y)), info)
    return ExpansionVerdict("sampled-no-counterexample", None, None, info)


# ---------------------------------------------------------------------------
# generalized matching

@dataclass
class MatchingInstance:
    """Left vertices with demands, right vertices, and bipartite edges ``(y, z)``."""

    demands: dict
    right: tuple
    edges: frozenset

    def __init__(self, demands: dict, right: Iterable, edges: Iterable[tuple]):
        self.demands = {y: int(k) for y, k in demands.items()}
        if any(k < 0 for k in self.demands.values()):
            raise ValueError("demands must be non-negative")
        self.right = tuple(right)
        rset = set(self.right)
        es = frozenset((y, z) for y, z in edges)
        for y, z in es:
            if y not in self.demands or z not in rset:
                raise ValueError(f"edge ({y!r}, {z!r}) leaves the instance")
        self.edges = es

    def neighbours(self) -> dict:
        nb: dict = {y: [] for y in self.demands}
        for y, z in sorted(self.edges, key=repr):
            nb[y].append(z)
        return nb


def _hopcroft_karp(adj: list[list[int]], n_right: int) -> list[int]:
    """Maximum matching; returns ``match_left`` (right index or -1)."""
    n_left = len(adj)
    match_l = [-1] * n_left
    match_r = [-1] * n_right
    inf = n_left + 1
    while True:
        dist = [inf] * n_left
        q = deque()
        for a in range(n_left):
            if match_l[a] < 0:
                dist[a] = 0
                q.append(a)
        found = False
        while q:
            a = q.popleft()
            for b in adj[a]:
                a2 = match_r[b]
                if a2 < 0:
                    found = True
                elif dist[a2] == inf:
                    dist[a2] = dist[a] + 1
                    q.append(a2)
        if not found:
            return match_l
        # layered DFS, iterative to stay clear of the recursion limit
        it = [0] * n_left
        for root in range(n_left):
            if match_l[root] >= 0:
                continue
            stack = [root]
            while stack:
                a = stack[-1]
                if it[a] < len(adj[a]):
                    b = adj[a][it[a]]
                    it[a] += 1
                    a2 = match_r[b]
                    if a2 < 0:
                        # augment along the stack
                        for k in range(len(stack) - 1, -1, -1):
                            x = stack[k]
                            prev = match_l[x]
                            match_l[x] = b
                            match_r[b] = x
                            b = prev
                        stack = []
                    elif dist[a2] == dist[a] + 1:
                        stack.append(a2)
                else:
                    dist[a] = inf
                    stack.pop()


def generalized_matching(inst: MatchingInstance) -> dict | None:
    """Give every left ``y`` exactly ``demands[y]`` distinct right neighbours, or ``None``.

    Each ``y`` is blown up into ``demands[y]`` copies with ``y``'s neighbourhood;
    a perfect matching of the copies is the assignment.
    """
    total = sum(inst.demands.values())
    if total > len(inst.right):
        return None
    ridx = {z: k for k, z in enumerate(inst.right)}
    nb = inst.neighbours()
    owners = []
    adj = []
    for y, k in inst.demands.items():
        row = [ridx[z] for z in nb[y]]
        for _ in range(k):
            owners.append(y)
            adj.append(row)
    match = _hopcroft_karp(adj, len(inst.right))
    if any(b < 0 for b in match):
        return None
    out: dict = {y: [] for y in inst.demands}
    for a, b in enumerate(match):
        out[owners[a]].append(inst.right[b])
    return {y: tuple(zs) for y, zs in out.items()}


def check_generalized_matching(inst: MatchingInstance, assignment: dict) -> bool:
    seen = set()
    for y, k in inst.demands.items():
        zs = assignment.get(y, ())
        if len(zs) != k or len(set(zs)) != k:
            return False
        for z in zs:
            if (y, z) not in inst.edges or z in seen:
                return False
            seen.add(z)
    return set(assignment) <= set(inst.demands)


# ---------------------------------------------------------------------------
# connecting pairs by paths

class ConnectorFailure(RuntimeError):
    pass


def _search_path(g: HostGraph, x: int, y: int, inner: int, avail: set, rng, budget: int):
    """DFS for an ``x``-``y`` path with exactly ``inner`` interior vertices from ``avail``.

    Candidates are tried fewest-available-neighbours first (random tie
    break), which keeps the remaining pool connected for later pairs.
    """
    if inner == 0:
        return [x, y] if g.has_edge(x, y) else None
    path = [x]
    on_path = set()
    stack = [None]
    expansions = 0

    def options(v):
        cand = [w for w in g.adj[v] if w in avail and w not in on_path]
        key = rng.random(len(cand))
        deg = [sum(1 for z in g.adj[w] if z in avail and z not in on_path) for w in cand]
        return [w for _, _, w in sorted(zip(deg, key, cand))]

    stack[0] = options(x)
    while stack:
        if expansions > budget:
            return None
        opts = stack[-1]
        if not opts:
            stack.pop()
            last = path.pop()
            on_path.discard(last)
            continue
        w = opts.pop(0)
        expansions += 1
        path.append(w)
        on_path.add(w)
        if len(path) - 1 == inner:
            if g.has_edge(w, y):
                return path + [y]
            path.pop()
            on_path.discard(w)
            continue
        stack.append(options(w))
    return None


def connect_pairs(g: HostGraph, pairs: list[tuple[int, int]], ell: int, W, rng: np.random.Generator,
                  cover: bool = True, restarts: int = 200, budget: int | None = None) -> list[list[int]]:
    """Vertex-disjoint paths on ``ell`` vertices (``ell - 1`` edges) joining each pair.

    Interiors come from ``W``; with ``cover`` they must use all of ``W``.
    Randomized DFS with backtracking, pair order reshuffled on each restart.
    Raises ``ConnectorFailure`` once the restart budget is spent.
    """
    if ell < 2:
        raise ValueError("paths need at least 2 vertices")
    W = {int(w) for w in W}
    ends = [v for pr in pairs for v in pr]
    if len(set(ends)) != len(ends):
        raise ValueError("pairs must be pairwise disjoint")
    if W & set(ends):
        raise ValueError("W must avoid the pair endpoints")
    inner = ell - 2
    if cover and len(W) != inner * len(pairs):
        raise ValueError(f"|W|={len(W)} cannot be covered by {len(pairs)} paths with {inner} "
                         "interior vertices each")
    if not cover and len(W) < inner * len(pairs):
        raise ValueError("W too small for the requested paths")
    if not pairs:
        return []
    if budget is None:
        budget = 50 * (len(W) + 2) * max(1, inner)
    order = list(range(len(pairs)))
    for _ in range(max(1, restarts)):
        rng.shuffle(order)
        avail = set(W)
        found: dict = {}
        for k in order:
            x, y = pairs[k]
            path = _search_path(g, x, y, inner, avail, rng, budget)
            if path is None:
                break
            avail.difference_update(path[1:-1])
            found[k] = path
        else:
            paths = [found[k] for k in range(len(pairs))]
            if not check_paths(g, pairs, ell, W, paths, cover):  # defensive
                raise AssertionError("connector produced an invalid path system")
            return paths
    raise ConnectorFailure(f"no path system found after {restarts} restarts")


def check_paths(g: HostGraph, pairs, ell: int, W, paths, cover: bool = True) -> bool:
    W = set(W)
    used = set()
    if len(paths) != len(pairs):
        return False
    for (x, y), path in zip(pairs, paths):
        if len(path) != ell or path[0] != x or path[-1] != y:
            return False
        if any(not g.has_edge(a, b) for a, b in zip(path, path[1:])):
            return False
        for v in path[1:-1]:
            if v not in W or v in used:
                return False
            used.add(v)
    return used == W if cover else True


def dump_graph(g: HostGraph) -> str:
    lines = [f"graph n={g.n}"] + [f"{u} {w}" for u, w in g.edges()]
    return "\n".join(lines) + "\n"


def load_graph(text: str) -> HostGraph:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith("graph n="):
        raise ValueError("missing 'graph n=<n>' header")
    n = int(lines[0].split("=", 1)[1])
    g = HostGraph(n)
    for ln in lines[1:]:
        u, w = ln.split()
        if g.has_edge(int(u), int(w)):
            raise ValueError(f"duplicate edge {u} {w}")
        g.add_edge(int(u), int(w))
    return g

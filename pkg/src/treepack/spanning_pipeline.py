"""Spanning-tree packing: colour-class batches and the partition + completion pipeline.

The pipeline splits each spanning tree into a large part ``L_s`` and a small
part ``S_s`` sharing ``v_s``. The large parts go through the clock packer at
``p'``; each small part is then embedded into the leftover set ``W_s`` of its
tree, in a fresh ``q_s``-random subgraph of the still-unused host edges.

Desk-scale regime notes (all recorded on the outcome, never hidden):

* ``alpha n`` is usually below 1, so ``|S_s|`` is floored at two vertices;
* ``q_s`` is usually above 1; with ``q_s_policy="clamp"`` the subgraph is
  sampled at probability 1 and the tree is listed in ``regime_violations``,
  with ``"abort"`` the run stops there;
* the single-tree embedder falls back to plain greedy when the bare-path
  length rounds below 2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .graph_tools import (ConnectorFailure, HostGraph, MatchingInstance, connect_pairs,
                          generalized_matching, sample_subgraph)
from .sprinkle_engine import SCHEMA, PackingOutcome, pack
from .tree_core import Tree, bfs_order, count_leaves, find_bare_paths, partition_tree_k

__all__ = [
    "SpanningConfig",
    "batch_count",
    "batch_split",
    "EmbedResult",
    "greedy_bfs_embed",
    "embed_tree_two_stage",
    "SpanningOutcome",
    "pack_spanning",
]


@dataclass(frozen=True)
class SpanningConfig:
    n: int
    p: float
    eps: float
    Delta: int
    K: int = 1

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if not 0 < self.eps < 1:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if self.Delta < 1 or self.K < 1:
            raise ValueError("Delta and K must be positive")

    @property
    def logn(self) -> float:
        return math.log(self.n)

    @property
    def alpha(self) -> float:
        return self.eps / (8.0 * self.Delta * self.logn ** 5)

    @property
    def q(self) -> float:
        return self.eps * self.p / 2.0

    @property
    def p_prime(self) -> float:
        # 1 - p = (1 - q)(1 - p')
        return 1.0 - (1.0 - self.p) / (1.0 - self.q)

    @property
    def split_residual(self) -> float:
        return abs((1.0 - self.p) - (1.0 - self.q) * (1.0 - self.p_prime))

    def q_s(self, w: int) -> float:
        return self.Delta * self.logn ** 5 / w

    @property
    def small_part_target(self) -> int:
        """``floor(alpha n)``, floored at 1 so ``S_s`` keeps an edge."""
        return max(1, math.floor(self.alpha * self.n))


def batch_count(p: float, eps: float) -> int:
    """Smallest ``K`` with ``p / K <= eps^5 / 2^12``."""
    return max(1, math.ceil(p / (eps ** 5 / 2 ** 12) - 1e-12))


def batch_split(trees: list, n: int, K: int, rng: np.random.Generator) -> tuple[list[list], np.ndarray]:
    """Split ``trees`` into ``K`` contiguous batches; colour every edge of ``K_n`` uniformly.

    The first ``N mod K`` batches get the extra tree. Colours are indexed like
    the clock store: upper-triangle edge order.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    N = len(trees)
    base, extra = divmod(N, K)
    batches = []
    start = 0
    for i in range(K):
        size = base + (1 if i < extra else 0)
        batches.append(list(trees[start:start + size]))
        start += size
    colours = rng.integers(0, K, size=n * (n - 1) // 2)
    return batches, colours


# ---------------------------------------------------------------------------
# single-tree embedding

@dataclass
class EmbedResult:
    phi: dict | None
    route: str
    stage: str | None = None  # failing stage, None on success
    deviations: list = field(default_factory=list)
    detail: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.phi is not None


def greedy_bfs_embed(tree: Tree, g: HostGraph, x: int, v: int, rng: np.random.Generator,
                     forbidden=()) -> tuple[dict | None, dict]:
    """Embed ``tree`` with ``v -> x`` by placing children on random free neighbours, BFS order."""
    lay = bfs_order(tree, v)
    free = np.ones(g.n, dtype=bool)
    free[list(forbidden)] = False
    if not free[x]:
        return None, {"step": 0, "reason": "root image not free"}
    img = [0] * tree.m
    img[0] = x
    free[x] = False
    for i in lay.J:
        d = lay.d[i]
        if d == 0:
            continue
        u = img[i]
        cand = np.array(sorted(w for w in g.adj[u] if free[w]), dtype=np.int64)
        if cand.size < d:
            return None, {"step": i, "available": int(cand.size), "needed": d}
        kids = rng.choice(cand, size=d, replace=False)
        first = lay.ch[i]
        for k, w in enumerate(kids.tolist()):
            img[first + k] = w
            free[w] = False
    return {lay.order[i]: img[i] for i in range(tree.m)}, {}


def _split_q(p: float) -> float:
    # 1 - p = (1 - q)^2
    return 1.0 - math.sqrt(1.0 - p)


def _matching_route(tree, g, p, x, v, rng, L_size):
    q = _split_q(p)
    g1 = sample_subgraph(g, q, rng)
    g2 = sample_subgraph(g, q, rng)
    leaves = [u for u in range(tree.m) if tree.degree(u) == 1 and u != v]
    chosen = set(rng.choice(leaves, size=L_size, replace=False).tolist())
    keep = [u for u in range(tree.m) if u not in chosen]
    local = {u: k for k, u in enumerate(keep)}
    t_prime = Tree(len(keep), [(local[a], local[b]) for a, b in tree.edges()
                               if a in local and b in local])
    phi_l, info = greedy_bfs_embed(t_prime, g1, x, local[v], rng)
    if phi_l is None:
        return None, "greedy", info
    phi = {keep[k]: w for k, w in phi_l.items()}
    parent_of = {leaf: tree.adj[leaf][0] for leaf in chosen}
    demands: dict = {}
    for leaf, par in parent_of.items():
        demands[phi[par]] = demands.get(phi[par], 0) + 1
    right = sorted(set(range(g.n)) - set(phi.values()))
    rset = set(right)
    edges = [(y, z) for y in demands for z in g2.adj[y] if z in rset]
    assign = generalized_matching(MatchingInstance(demands, right, edges))
    if assign is None:
        return None, "matching", {"leaves": len(chosen), "parents": len(demands)}
    pools = {y: list(zs) for y, zs in assign.items()}
    for leaf in sorted(chosen):
        phi[leaf] = pools[phi[parent_of[leaf]]].pop()
    return phi, None, {"leaves": len(chosen)}


def _connector_route(tree, g, p, x, v, rng, ell, count, restarts):
    q = _split_q(p)
    g1 = sample_subgraph(g, q, rng)
    g2 = sample_subgraph(g, q, rng)
    paths = find_bare_paths(tree, ell, avoid=(v,))[:count]
    interior = {u for P in paths for u in P[1:-1]}
    keep = [u for u in range(tree.m) if u not in interior]
    local = {u: k for k, u in enumerate(keep)}
    edges = [(local[a], local[b]) for a, b in tree.edges() if a in local and b in local]
    edges += [(local[P[0]], local[P[-1]]) for P in paths]
    t_prime = Tree(len(keep), edges)
    phi_l, info = greedy_bfs_embed(t_prime, g1, x, local[v], rng)
    if phi_l is None:
        return None, "greedy", info
    phi = {keep[k]: w for k, w in phi_l.items()}
    rest = set(range(g.n)) - set(phi.values())
    pairs = [(phi[P[0]], phi[P[-1]]) for P in paths]
    try:
        host_paths = connect_pairs(g2, pairs, ell + 1, rest, rng, cover=True, restarts=restarts)
    except ConnectorFailure as exc:
        return None, "connector", {"paths": len(paths), "error": str(exc)}
    for P, H in zip(paths, host_paths):
        for a, b in zip(P[1:-1], H[1:-1]):
            phi[a] = b
    return phi, None, {"paths": len(paths), "path_length": ell}


def embed_tree_two_stage(tree: Tree, g: HostGraph, p: float, x: int, v: int,
                         rng: np.random.Generator, restarts: int = 200, attempts: int = 4) -> EmbedResult:
    """Embed a spanning tree into ``g_p`` with ``v -> x`` using two independent ``q``-copies.

    Many leaves (at least ``n/(log n)^3``): strip ``ceil(n/(2 (log n)^3))``
    leaves, embed the rest greedily into copy one, attach the leaves by a
    generalized matching in copy two. Otherwise contract
    ``ceil(n/(log n)^3)`` bare paths of length ``ceil((log n)^3/5)``, embed
    greedily, and rebuild the paths with the connector in copy two.

    Each attempt redraws both copies; success after the first attempt is
    flagged ``retried`` (at small ``n`` the end of the greedy stage often
    runs out of neighbours).
    """
    n = g.n
    if tree.m != n:
        raise ValueError(f"tree has {tree.m} vertices, host {n}; a spanning embedding needs equality")
    if not 0 <= x < n or not 0 <= v < tree.m:
        raise ValueError("x or v out of range")
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if n == 1:
        return EmbedResult({v: x}, "trivial")
    if attempts < 1:
        raise ValueError("attempts must be at least 1")
    for k in range(attempts):
        res = _embed_once(tree, g, p, x, v, rng, restarts)
        res.detail["attempts"] = k + 1
        if res.ok:
            if k:
                res.deviations.append("retried")
            break
    return res


def _embed_once(tree, g, p, x, v, rng, restarts) -> EmbedResult:
    n = g.n
    logn3 = math.log(n) ** 3
    leaves = count_leaves(tree)
    if leaves >= n / logn3:
        L_size = min(math.ceil(n / (2.0 * logn3)), leaves - (1 if tree.degree(v) == 1 else 0))
        res = EmbedResult(None, "matching", detail={"L": L_size})
        phi, stage, info = _matching_route(tree, g, p, x, v, rng, L_size)
    else:
        ell = math.ceil(logn3 / 5.0)
        count = math.ceil(n / logn3)
        res = EmbedResult(None, "connector", detail={"ell": ell, "paths_needed": count})
        found = len(find_bare_paths(tree, ell, avoid=(v,))) if ell >= 2 else 0
        if ell < 2 or found < count:
            res.deviations.append("direct-greedy" if ell < 2 else "too-few-bare-paths")
            res.detail["paths_found"] = found
            phi, info = greedy_bfs_embed(tree, sample_subgraph(g, p, rng), x, v, rng)
            stage = None if phi is not None else "greedy"
        else:
            phi, stage, info = _connector_route(tree, g, p, x, v, rng, ell, count, restarts)
    res.phi = phi
    res.stage = stage
    res.detail.update(info)
    return res


# ---------------------------------------------------------------------------
# spanning pipeline

@dataclass
class SpanningOutcome:
    config: SpanningConfig
    stage1: PackingOutcome | None
    embeddings: list = field(default_factory=list)
    parts: list = field(default_factory=list)
    leftovers: list = field(default_factory=list)
    connectors: list = field(default_factory=list)
    routes: list = field(default_factory=list)
    q_s: list = field(default_factory=list)
    deviations: list = field(default_factory=list)
    regime_violations: list = field(default_factory=list)
    failure: dict | None = None
    h2_max_degree: int = 0
    num_trees: int = 0
    disjoint: bool = True

    @property
    def success(self) -> bool:
        return self.failure is None and len(self.embeddings) == self.num_trees and self.disjoint

    def to_dict(self) -> dict:
        c = self.config
        return {
            "schema": SCHEMA,
            "pipeline": {
                "n": c.n, "p": c.p, "eps": c.eps, "Delta": c.Delta,
                "alpha": c.alpha, "q": c.q, "p_prime": c.p_prime,
                "small_part_target": c.small_part_target,
            },
            "stage1": None if self.stage1 is None else self.stage1.to_dict(),
            "embeddings": [[int(e[v]) for v in range(len(e))] for e in self.embeddings],
            "leftover_sizes": [len(w) for w in self.leftovers],
            "routes": list(self.routes),
            "q_s": list(self.q_s),
            "deviations": list(self.deviations),
            "regime_violations": list(self.regime_violations),
            "failure": self.failure,
            "h2_max_degree": self.h2_max_degree,
            "success": self.success,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def pack_spanning(trees: list[Tree], n: int, p: float, eps: float, rng: np.random.Generator | int | None,
                  Delta: int | None = None, backend: str = "lazy", q_s_policy: str = "clamp",
                  restarts: int = 200, attempts: int = 4) -> SpanningOutcome:
    """Pack spanning trees: large parts by the clock packer, small parts one by one."""
    if q_s_policy not in ("clamp", "abort"):
        raise ValueError("q_s_policy must be 'clamp' or 'abort'")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    for k, t in enumerate(trees):
        if t.m != n:
            raise ValueError(f"tree {k} has {t.m} vertices; spanning trees need exactly {n}")
    if Delta is None:
        Delta = max((t.max_degree for t in trees), default=1)
    elif any(t.max_degree > Delta for t in trees):
        raise ValueError("a tree exceeds the declared maximum degree")
    cfg = SpanningConfig(n, p, eps, max(1, Delta))
    out = SpanningOutcome(cfg, None, num_trees=len(trees))
    if not trees:
        return out

    k = cfg.small_part_target
    if k != math.floor(cfg.alpha * n):
        out.deviations.append({"kind": "alpha-floor", "alpha_n": cfg.alpha * n, "k": k})
    large, small, shared = [], [], []
    for t in trees:
        S, L, v = partition_tree_k(t, k)
        L_tree, L_local = L.compact()
        large.append((L_tree, L_local, L))
        small.append(S)
        shared.append(v)
        out.parts.append({"shared": v, "S": len(S.vertices), "L": len(L.vertices)})

    # stage 1: large parts through the clock packer at p'
    st1 = pack([lt for lt, _, _ in large], n, cfg.p_prime, backend=backend, rng=rng,
               connectors=[loc[v] for (_, loc, _), v in zip(large, shared)])
    out.stage1 = st1
    if not st1.success:
        kind = "stage1-label" if st1.completed else "stage1-" + st1.failure["kind"]
        out.failure = {"kind": kind, "detail": st1.failure, "max_label": st1.max_label}
        return out

    used: set = set()
    for phi_l, (lt, _, _) in zip(st1.embeddings, large):
        for a, b in lt.edges():
            e = (int(phi_l[a]), int(phi_l[b]))
            used.add(e if e[0] < e[1] else (e[1], e[0]))
    h2_deg = np.zeros(n, dtype=np.int64)
    h2_edges: set = set()
    cap2 = n * p
    for s, t in enumerate(trees):
        if h2_deg.max() > cap2:
            out.failure = {"kind": "h2-degree", "round": s + 1, "max_degree": int(h2_deg.max())}
            return out
        lt, loc, L = large[s]
        phi_l = st1.embeddings[s]
        v_s = shared[s]
        x = int(phi_l[loc[v_s]])
        W = st1.leftovers[s]
        out.leftovers.append(W)
        out.connectors.append(v_s)
        S = small[s]
        if len(W) != len(S.vertices):
            raise AssertionError("leftover size differs from the small part")
        Wl = [int(w) for w in W]
        g_s = HostGraph(len(Wl))
        for i in range(len(Wl)):
            for j in range(i + 1, len(Wl)):
                e = (Wl[i], Wl[j]) if Wl[i] < Wl[j] else (Wl[j], Wl[i])
                if e not in used and e not in h2_edges:
                    g_s.add_edge(i, j)
        qs = cfg.q_s(len(Wl))
        out.q_s.append(qs)
        if qs > 1:
            out.regime_violations.append({"round": s + 1, "q_s": qs})
            if q_s_policy == "abort":
                out.failure = {"kind": "q_s-exceeds-one", "round": s + 1, "q_s": qs}
                return out
        S_tree, S_local = S.compact()
        xl = Wl.index(x)
        res = embed_tree_two_stage(S_tree, g_s, min(1.0, qs), xl, S_local[v_s], rng,
                                   restarts=restarts, attempts=attempts)
        out.routes.append(res.route)
        for dev in res.deviations:
            out.deviations.append({"kind": dev, "round": s + 1})
        if not res.ok:
            out.failure = {"kind": "stage2-" + (res.stage or "unknown"), "round": s + 1,
                           "route": res.route, "detail": res.detail}
            return out
        phi = np.full(n, -1, dtype=np.int64)
        for host_v in L.vertices:
            phi[host_v] = int(phi_l[loc[host_v]])
        inv_s = {li: hv for hv, li in S_local.items()}
        for li, wl in res.phi.items():
            phi[inv_s[li]] = Wl[wl]
        for a, b in S.edges:
            e = (int(phi[a]), int(phi[b]))
            e = e if e[0] < e[1] else (e[1], e[0])
            if e in used or e in h2_edges:
                out.disjoint = False
            h2_edges.add(e)
            h2_deg[e[0]] += 1
            h2_deg[e[1]] += 1
        out.embeddings.append(phi)
    out.h2_max_degree = int(h2_deg.max())
    return out

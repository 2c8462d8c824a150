"""Online-sprinkling packer: edge clocks on K_n, trees embedded in BFS order.

Every edge ``e`` of ``K_n`` carries a clock ``c_e`` (starts at 0) and a
hidden label ``t_e``. To embed the ``d`` children of a tree vertex sitting
at host vertex ``u``, the clocks of all not-yet-rung edges from ``u`` into
the unused part of the host run until ``d`` of them ring; the ringing
edges receive the children in ringing order. Edge ``uw`` enters at time
``(t - c) / (1 - c)``, so every running clock has the same chance to ring.

Two backends share all bookkeeping:

``eager``
    labels ``t_e`` exist up front (a keyed counter-based hash, so every
    label is fixed at store creation without storing ``n^2`` floats and
    dense/sparse stores agree bit for bit). The run is deterministic given
    the labels and the root choices.
``lazy``
    labels are never drawn. Given the past, a running clock's label is
    uniform on ``(c, 1]``, so the step time is the ``d``-th order statistic
    of ``r`` uniforms and the children are a uniform ordered ``d``-subset.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import betaincinv

from .tree_core import BfsLayout, Tree, bfs_order

__all__ = [
    "SCHEMA",
    "DENSE_LIMIT",
    "ClockStore",
    "StepFailure",
    "StepResult",
    "RoundOutcome",
    "PackingOutcome",
    "sample_step",
    "run_round",
    "check_degree_cap",
    "pack",
]

SCHEMA = "treepack-outcome/1"
DENSE_LIMIT = 4096
BACKENDS = ("eager", "lazy")

# test hook: lazy backend draws the (d + shift)-th order statistic
_ORDER_STAT_SHIFT = 0

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def _hash_uniform(key: int, idx: np.ndarray) -> np.ndarray:
    """SplitMix64 over ``key + idx * golden``, mapped into the open interval (0, 1)."""
    z = np.uint64(key) + np.asarray(idx, dtype=np.uint64) * _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


class ClockStore:
    """Per-edge clock state for ``K_n``.

    Edges are addressed by their index in the upper triangle. Dense storage
    (numpy arrays) is used up to ``DENSE_LIMIT`` vertices, dicts above; only
    touched edges live in the dicts, untouched ones read as ``c = 0``.
    """

    def __init__(self, n: int, backend: str = "eager", key: int = 0,
                 sparse: bool | None = None, labels: np.ndarray | None = None):
        if backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {backend!r}")
        if n < 1:
            raise ValueError("host needs at least one vertex")
        self.n = n
        self.backend = backend
        self.key = int(key) & 0xFFFFFFFFFFFFFFFF
        self.sparse = n > DENSE_LIMIT if sparse is None else bool(sparse)
        self.num_edges = n * (n - 1) // 2
        if labels is not None:
            if backend != "eager":
                raise ValueError("explicit labels only make sense for the eager backend")
            labels = np.asarray(labels, dtype=np.float64)
            if labels.shape != (self.num_edges,):
                raise ValueError("labels must cover every edge of K_n")
        self._labels = labels
        if self.sparse:
            self._c: dict | np.ndarray = {}
            self._used: set | np.ndarray = set()
        else:
            self._c = np.zeros(self.num_edges)
            self._used = np.zeros(self.num_edges, dtype=bool)

    def reset(self, key: int | None = None) -> None:
        """Back to fresh clocks (``c = 0``, nothing used); optionally re-key the labels."""
        if key is not None:
            self.key = int(key) & 0xFFFFFFFFFFFFFFFF
        if self.sparse:
            self._c = {}
            self._used = set()
        else:
            self._c[:] = 0.0
            self._used[:] = False

    def index(self, u: int, ws) -> np.ndarray:
        ws = np.asarray(ws, dtype=np.int64)
        a = np.minimum(ws, u)
        b = np.maximum(ws, u)
        return a * self.n - (a * (a + 1)) // 2 + (b - a - 1)

    def pair(self, idx: int) -> tuple[int, int]:
        n = self.n
        # row a holds n-1-a edges; invert the triangular offset
        a = int((2 * n - 1 - math.isqrt((2 * n - 1) ** 2 - 8 * idx)) // 2)
        while a * n - a * (a + 1) // 2 > idx:
            a -= 1
        while (a + 1) * n - (a + 1) * (a + 2) // 2 <= idx:
            a += 1
        b = idx - (a * n - a * (a + 1) // 2) + a + 1
        return a, int(b)

    def labels(self, idx) -> np.ndarray:
        if self.backend != "eager":
            raise RuntimeError("the lazy backend never materializes labels")
        idx = np.asarray(idx, dtype=np.int64)
        if self._labels is not None:
            return self._labels[idx]
        return _hash_uniform(self.key, idx)

    def get_c(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        if self.sparse:
            get = self._c.get
            return np.fromiter((get(int(i), 0.0) for i in idx), dtype=np.float64, count=idx.size)
        return self._c[idx]

    def set_c(self, idx, values) -> None:
        idx = np.asarray(idx, dtype=np.int64)
        if self.sparse:
            for i, v in zip(idx.tolist(), np.asarray(values, dtype=np.float64).tolist()):
                self._c[i] = v
        else:
            self._c[idx] = values

    def is_used(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        if self.sparse:
            used = self._used
            return np.fromiter((int(i) in used for i in idx), dtype=bool, count=idx.size)
        return self._used[idx]

    def mark_used(self, idx) -> None:
        idx = np.asarray(idx, dtype=np.int64)
        if self.sparse:
            self._used.update(idx.tolist())
        else:
            self._used[idx] = True

    def max_clock(self) -> float:
        if self.sparse:
            return max(self._c.values(), default=0.0)
        return float(self._c.max()) if self.num_edges else 0.0

    def used_indices(self) -> np.ndarray:
        if self.sparse:
            return np.array(sorted(self._used), dtype=np.int64)
        return np.flatnonzero(self._used)

    def check_invariants(self) -> bool:
        """``0 <= c <= t`` everywhere and ``c == t`` exactly on used edges (eager only)."""
        if self.backend != "eager":
            raise RuntimeError("invariants reference labels; eager backend only")
        if self.sparse:
            idx = np.array(sorted(set(self._c) | self._used), dtype=np.int64)
        else:
            idx = np.arange(self.num_edges)
        c = self.get_c(idx)
        t = self.labels(idx)
        used = self.is_used(idx)
        return bool(np.all(c >= 0) and np.all(c <= t) and np.array_equal(c == t, used))


class StepFailure(Exception):
    """Fewer running clocks than children to place."""

    def __init__(self, available: int, needed: int):
        super().__init__(f"only {available} eligible neighbours for {needed} children")
        self.available = available
        self.needed = needed


@dataclass
class StepResult:
    tau: float
    children: np.ndarray
    ring_values: np.ndarray
    available: int


def sample_step(clocks: ClockStore, u: int, U, d: int, rng: np.random.Generator | None = None,
                backend: str | None = None) -> StepResult:
    """Run the clocks ``u -> U`` until ``d`` ring; updates ``clocks`` in place."""
    backend = backend or clocks.backend
    if d < 1:
        raise ValueError("d must be at least 1")
    U = np.asarray(U, dtype=np.int64)
    idx = clocks.index(u, U)
    live = ~clocks.is_used(idx)
    cand = U[live]
    cidx = idx[live]
    r = cand.size
    if r < d:
        raise StepFailure(r, d)
    c = clocks.get_c(cidx)

    if backend == "eager":
        t = clocks.labels(cidx)
        entry = (t - c) / (1.0 - c)
        if d < r:
            cut = np.partition(entry, d - 1)[d - 1]
            pool = np.flatnonzero(entry <= cut)
        else:
            pool = np.arange(r)
        pos = pool[np.lexsort((cand[pool], entry[pool]))][:d]
        tau = float(entry[pos[-1]])
        ring = t[pos]
        newc = np.minimum(c + (1.0 - c) * tau, np.nextafter(t, 0.0))
    else:
        if rng is None:
            raise ValueError("the lazy backend needs an rng")
        draws = rng.random(2 * d)
        k = d + _ORDER_STAT_SHIFT
        tau = float(betaincinv(k, r - k + 1, draws[0]))
        entries = np.empty(d)
        entries[:d - 1] = np.sort(draws[1:d] * tau)
        entries[d - 1] = tau
        # partial Fisher-Yates over candidate positions
        swap: dict = {}
        picked = []
        for j in range(d):
            z = j + int(draws[d + j] * (r - j))
            if z >= r:
                z = r - 1
            picked.append(swap.get(z, z))
            swap[z] = swap.get(j, j)
        pos = np.array(picked, dtype=np.int64)
        ring = c[pos] + (1.0 - c[pos]) * entries
        newc = c + (1.0 - c) * tau

    newc[pos] = ring
    clocks.set_c(cidx, newc)
    clocks.mark_used(cidx[pos])
    return StepResult(tau, cand[pos], ring, r)


def check_degree_cap(degrees, cap: float) -> bool:
    """True iff the union of images has maximum degree at most ``cap``."""
    degrees = np.asarray(degrees)
    return bool(degrees.size == 0 or degrees.max() <= cap)


@dataclass
class RoundOutcome:
    phi: np.ndarray
    ok: bool
    failure_step: int | None = None
    available: int | None = None
    needed: int | None = None
    steps: int = 0
    avail_violations: int = 0
    avail_min_slack: float = math.inf
    taus: list = field(default_factory=list)
    new_edges: list = field(default_factory=list)


def run_round(clocks: ClockStore, tree: Tree | BfsLayout, rng: np.random.Generator,
              degrees: np.ndarray | None = None, cap: float | None = None,
              root_image: int | None = None, record_taus: bool = False) -> RoundOutcome:
    """Embed one tree. ``degrees``/``cap`` enable the per-step size check.

    ``degrees`` is the host degree in the union of earlier images; on return
    it is *not* updated (the caller owns it).
    """
    lay = tree if isinstance(tree, BfsLayout) else bfs_order(tree)
    n = clocks.n
    m = lay.m
    if m > n:
        raise ValueError(f"tree with {m} vertices does not fit in a host of {n}")
    order = lay.order
    phi = np.full(m, -1, dtype=np.int64)
    free = np.ones(n, dtype=bool)
    root = int(rng.integers(n)) if root_image is None else int(root_image)
    phi[order[0]] = root
    free[root] = False
    out = RoundOutcome(phi, True)
    label_img = [root] + [0] * (m - 1)
    for i in lay.J:
        d = lay.d[i]
        if d == 0:
            continue
        u = label_img[i]
        U = np.flatnonzero(free)
        first = lay.ch[i]
        try:
            res = sample_step(clocks, u, U, d, rng)
        except StepFailure as exc:
            out.ok = False
            out.failure_step = i
            out.available = exc.available
            out.needed = exc.needed
            if cap is not None:
                _record_availability(out, exc.available, n, first, cap)
            return out
        out.steps += 1
        if cap is not None:
            _record_availability(out, res.available, n, first, cap)
        if record_taus:
            out.taus.append((i, res.tau, res.available, d))
        kids = res.children
        free[kids] = False
        for k, w in enumerate(kids.tolist()):
            label_img[first + k] = w
            phi[order[first + k]] = w
            out.new_edges.append((u, w, float(res.ring_values[k])))
    return out


@lru_cache(maxsize=4096)
def _layout(tree: Tree) -> BfsLayout:
    return bfs_order(tree)


def _record_availability(out: RoundOutcome, available: int, n: int, first_child: int, cap: float) -> None:
    slack = available - (n - first_child - cap)
    out.avail_min_slack = min(out.avail_min_slack, slack)
    if slack < 0:
        out.avail_violations += 1


@dataclass
class PackingOutcome:
    n: int
    p: float
    backend: str
    embeddings: list = field(default_factory=list)
    connectors: list = field(default_factory=list)
    leftovers: list = field(default_factory=list)
    alive_trace: list = field(default_factory=list)
    failure: dict | None = None
    edge_labels: dict = field(default_factory=dict)
    edge_uses: Counter = field(default_factory=Counter)
    max_clock: float = 0.0
    max_label: float = 0.0
    max_degree: int = 0
    num_trees: int = 0
    avail_steps: int = 0
    avail_violations: int = 0
    avail_min_slack: float = math.inf
    label_check: dict = field(default_factory=dict)
    seed: int | None = None

    @property
    def completed(self) -> bool:
        return self.failure is None and len(self.embeddings) == self.num_trees

    @property
    def success(self) -> bool:
        return self.completed and self.max_label <= self.p

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "n": self.n,
            "p": self.p,
            "backend": self.backend,
            "seed": self.seed,
            "num_trees": self.num_trees,
            "embeddings": [e.tolist() for e in self.embeddings],
            "connectors": list(self.connectors),
            "leftover_sizes": [int(len(w)) for w in self.leftovers],
            "alive_trace": list(self.alive_trace),
            "failure": self.failure,
            "max_clock": self.max_clock,
            "max_label": self.max_label,
            "max_degree": self.max_degree,
            "edges_used": len(self.edge_labels),
            "availability": {"steps": self.avail_steps, "violations": self.avail_violations,
                        "min_slack": None if math.isinf(self.avail_min_slack)
                        else self.avail_min_slack},
            "label_check": self.label_check,
            "completed": self.completed,
            "success": self.success,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def pack(trees: list[Tree], n: int, p: float, backend: str = "lazy",
         rng: np.random.Generator | int | None = None, connectors: list[int] | None = None,
         sparse: bool | None = None, labels: np.ndarray | None = None) -> PackingOutcome:
    """Pack ``trees`` into ``K_n`` with edge clocks; success means all labels used are ``<= p``.

    Rounds stop at the first tree that cannot be placed, or after the round
    in which the union of images exceeds degree ``2np``. Both are recorded in
    ``failure``, never raised.
    """
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    if backend not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}")
    for k, t in enumerate(trees):
        if t.m > n:
            raise ValueError(f"tree {k} has {t.m} vertices, host only {n}")
    seed = None
    if not isinstance(rng, np.random.Generator):
        seed = rng
        rng = np.random.default_rng(rng)
    if connectors is not None and len(connectors) != len(trees):
        raise ValueError("need one connector vertex per tree")
    key = int(rng.integers(0, 2 ** 63)) if backend == "eager" and labels is None else 0
    clocks = ClockStore(n, backend, key=key, sparse=sparse, labels=labels)
    cap = 2.0 * n * p
    degrees = np.zeros(n, dtype=np.int64)
    out = PackingOutcome(n, p, backend, num_trees=len(trees), seed=seed)
    for s, tree in enumerate(trees, start=1):
        lay = _layout(tree)
        rnd = run_round(clocks, lay, rng, degrees=degrees, cap=cap)
        out.avail_steps += rnd.steps + (0 if rnd.ok else 1)
        out.avail_violations += rnd.avail_violations
        out.avail_min_slack = min(out.avail_min_slack, rnd.avail_min_slack)
        for u, w, lab in rnd.new_edges:
            e = (u, w) if u < w else (w, u)
            out.edge_uses[e] += 1
            out.edge_labels[e] = lab
            degrees[u] += 1
            degrees[w] += 1
        if not rnd.ok:
            out.failure = {"kind": "embedding", "round": s, "step": rnd.failure_step,
                           "available": rnd.available, "needed": rnd.needed}
            break
        out.embeddings.append(rnd.phi)
        v_s = lay.order[0] if connectors is None else int(connectors[s - 1])
        out.connectors.append(v_s)
        covered = np.zeros(n, dtype=bool)
        covered[rnd.phi] = True
        covered[rnd.phi[v_s]] = False
        out.leftovers.append(np.flatnonzero(~covered))
        alive = check_degree_cap(degrees, cap)
        out.alive_trace.append(alive)
        if not alive:
            out.failure = {"kind": "degree_cap", "round": s, "max_degree": int(degrees.max())}
            break
    out.max_clock = clocks.max_clock()
    out.max_label = max(out.edge_labels.values(), default=0.0)
    out.max_degree = int(degrees.max()) if n else 0
    out.label_check = _check_labels(clocks, out)
    return out


def _check_labels(clocks: ClockStore, out: PackingOutcome) -> dict:
    used = clocks.used_indices()
    if out.edge_labels:
        ends = np.array(list(out.edge_labels), dtype=np.int64)
        recorded = np.fromiter(out.edge_labels.values(), dtype=np.float64, count=len(ends))
        a, b = ends[:, 0], ends[:, 1]
        idx = a * clocks.n - (a * (a + 1)) // 2 + (b - a - 1)
        c = clocks.get_c(idx)
        label_recorded = bool(np.array_equal(c, recorded))
        if clocks.backend == "eager":
            clock_is_label = bool(np.array_equal(c, clocks.labels(idx)))
        else:
            clock_is_label = label_recorded
        same_set = bool(np.array_equal(np.sort(idx), used))
    else:
        clock_is_label = label_recorded = True
        same_set = used.size == 0
    once = all(v == 1 for v in out.edge_uses.values())
    bounded = out.max_label <= out.max_clock
    ok = clock_is_label and label_recorded and once and same_set and bounded
    return {"clock_equals_label": clock_is_label and label_recorded, "used_once": once,
            "used_set_consistent": same_set, "label_within_max_clock": bounded, "holds": ok}

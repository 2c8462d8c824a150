"""Independent checks of packings and the statistical battery for the clock packer.

``verify_packing`` and ``overlap_statistic`` only look at trees, vertex
maps and (optionally) edge labels; they never touch clock state.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .probability import order_stat_moment
from .sprinkle_engine import ClockStore, run_round, sample_step
from .tree_core import Tree, bfs_order

__all__ = [
    "PackingReport",
    "verify_packing",
    "verify_outcome",
    "OverlapStat",
    "overlap_statistic",
    "BatteryConfig",
    "TestResult",
    "BatteryReport",
    "stat_battery",
    "moment_test",
    "backend_equivalence_test",
    "uniformity_test",
]


def _key(u: int, w: int) -> tuple[int, int]:
    return (u, w) if u < w else (w, u)


@dataclass
class PackingReport:
    per_tree: list
    edge_disjoint: bool
    within_host: bool
    label_bound: bool | None
    max_label: float | None
    max_degree: int
    failures: list = field(default_factory=list)
    count_ok: bool = True

    @property
    def structural(self) -> bool:
        """Every verdict except the label bound."""
        return (self.count_ok and self.edge_disjoint and self.within_host
                and all(t["injective"] and t["adjacency"] and t["total"] for t in self.per_tree))

    @property
    def passed(self) -> bool:
        return self.structural and self.label_bound is not False

    def to_dict(self) -> dict:
        d = asdict(self)
        d["structural"] = self.structural
        d["passed"] = self.passed
        return d


def verify_packing(trees: list[Tree], embeddings, n: int | None = None,
                   host_edge: Callable[[int, int], bool] | None = None,
                   labels: dict | None = None, p: float | None = None) -> PackingReport:
    """Re-check a packing from scratch.

    ``host_edge`` decides host adjacency (default: ``K_n``). With ``labels``
    (edge -> label) and ``p`` the host is the set of edges labelled at most
    ``p`` and the label bound is reported.
    """
    failures = []
    per_tree = []
    owner: dict = {}
    disjoint = True
    within = True
    deg: Counter = Counter()
    used_labels = []
    if len(embeddings) != len(trees):
        failures.append(f"{len(embeddings)} embeddings for {len(trees)} trees")
    for s, (t, phi) in enumerate(zip(trees, embeddings)):
        phi = [int(x) for x in phi]
        total = len(phi) == t.m and all(x >= 0 and (n is None or x < n) for x in phi)
        injective = len(set(phi)) == len(phi)
        adjacency = total
        for a, b in t.edges():
            if not total:
                break
            u, w = phi[a], phi[b]
            if u == w:
                adjacency = False
                continue
            e = _key(u, w)
            if host_edge is not None and not host_edge(u, w):
                adjacency = False
                failures.append(f"tree {s}: edge {a}-{b} -> {e} not in host")
            if labels is not None:
                lab = labels.get(e)
                if lab is None:
                    within = False
                    failures.append(f"tree {s}: edge {e} has no label")
                else:
                    used_labels.append(lab)
            if e in owner:
                disjoint = False
                failures.append(f"trees {owner[e]} and {s} share edge {e}")
            else:
                owner[e] = s
            deg[u] += 1
            deg[w] += 1
        if not total:
            failures.append(f"tree {s}: map is not total on {t.m} vertices")
        if not injective:
            failures.append(f"tree {s}: map is not injective")
        per_tree.append({"tree": s, "total": total, "injective": injective, "adjacency": adjacency})
    max_label = max(used_labels) if used_labels else (0.0 if labels is not None else None)
    label_bound = None
    if labels is not None and p is not None:
        label_bound = within and (max_label is None or max_label <= p)
        if not label_bound:
            failures.append(f"max used label {max_label} exceeds p={p}")
    return PackingReport(per_tree, disjoint, within, label_bound, max_label,
                         max(deg.values(), default=0), failures, len(embeddings) == len(trees))


def verify_outcome(trees: list[Tree], outcome, check_labels: bool = True) -> PackingReport:
    """Verify the embedded prefix of a packer outcome against the labels it revealed."""
    k = len(outcome.embeddings)
    labels = outcome.edge_labels if check_labels else None
    p = outcome.p if check_labels else None
    return verify_packing(trees[:k], outcome.embeddings, n=outcome.n, labels=labels, p=p)


# ---------------------------------------------------------------------------
# leftover overlap statistic

@dataclass
class OverlapStat:
    n: int
    p: float
    max_value: float
    bound: float
    max_ratio: float
    holds: bool
    symmetric: bool
    finite: bool
    argmax: tuple | None
    precondition: bool | None
    precondition_rhs: float | None
    max_leftover: int
    matrix: np.ndarray | None = None

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "matrix"}
        d["soft"] = self.precondition is not True
        return d


def overlap_statistic(leftovers, n: int, p: float, alpha: float | None = None,
                      keep_matrix: bool = False) -> OverlapStat:
    """``sum_s 1[{u,w} in W_s] / |W_s|`` over all pairs, against ``(2p/n) max_s |W_s|``.

    Trees are grouped by ``|W_s|``; inside a group the pair counts are an
    integer matrix product, so each entry is a short exact sum of ``c / w``.
    Cost ``O(N n^2)`` worst case.
    """
    if hasattr(leftovers, "leftovers"):
        leftovers = leftovers.leftovers
    sets = [np.unique(np.asarray(w, dtype=np.int64)) for w in leftovers]
    if any(s.size == 0 for s in sets):
        raise ValueError("leftover sets must be non-empty")
    groups: dict = {}
    for s in sets:
        groups.setdefault(int(s.size), []).append(s)
    S = np.zeros((n, n))
    for w, members in sorted(groups.items()):
        X = np.zeros((len(members), n), dtype=np.int64)
        for r, s in enumerate(members):
            X[r, s] = 1
        S += (X.T @ X) / w
    np.fill_diagonal(S, 0.0)
    max_w = max((s.size for s in sets), default=0)
    bound = 2.0 * p / n * max_w
    if n >= 2:
        iu = np.triu_indices(n, 1)
        vals = S[iu]
        k = int(np.argmax(vals)) if vals.size else 0
        max_value = float(vals[k]) if vals.size else 0.0
        argmax = (int(iu[0][k]), int(iu[1][k])) if vals.size else None
    else:
        max_value, argmax = 0.0, None
    pre = rhs = None
    if alpha is not None:
        rhs = 30.0 * math.log(n) / (alpha ** 2 * n)
        pre = p >= rhs
    return OverlapStat(n, p, max_value, bound, max_value / bound if bound > 0 else math.inf,
                       max_value <= bound, bool(np.array_equal(S, S.T)),
                       bool(np.all(np.isfinite(S))), argmax, pre, rhs, int(max_w),
                       S if keep_matrix else None)


# ---------------------------------------------------------------------------
# statistical battery

@dataclass(frozen=True)
class BatteryConfig:
    seed: int = 20240611
    level: float = 1e-3
    se_band: float = 4.0
    moment_grid: tuple = ((1, 10), (3, 50), (5, 20))
    moment_trials: int = 100_000
    backend_d: int = 3
    backend_r: int = 50
    backend_trials: int = 100_000
    uniformity_n: int = 8
    uniformity_trials: int = 1_000_000
    # below these budgets a test lacks power and is reported as skipped
    min_moment_trials: int = 2_000
    min_backend_trials: int = 2_000
    min_uniformity_per_cell: int = 100


@dataclass
class TestResult:
    name: str
    statistic: float | None
    threshold: float
    passed: bool
    skipped: bool = False
    p_value: float | None = None
    detail: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def __post_init__(self):
        self.passed = bool(self.passed)
        if self.statistic is not None:
            self.statistic = float(self.statistic)


@dataclass
class BatteryReport:
    config: BatteryConfig
    results: list

    @property
    def passed(self) -> bool:
        return all(r.passed or r.skipped for r in self.results)

    def to_dict(self) -> dict:
        ran = [r for r in self.results if not r.skipped]
        return {
            "config": asdict(self.config),
            "passed": self.passed,
            "note": (f"each test at level {self.config.level}; {len(ran)} tests ran, "
                     f"Bonferroni family-wise level {self.config.level * max(1, len(ran)):.3g}"),
            "results": [asdict(r) for r in self.results],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "statistic", "threshold", "pass"])
        for r in self.results:
            status = "skip" if r.skipped else ("pass" if r.passed else "fail")
            w.writerow([r.name, "" if r.statistic is None else repr(r.statistic), r.threshold, status])
        return buf.getvalue()


def _fresh(store: ClockStore, key: int | None = None) -> ClockStore:
    store.reset(key)
    return store


def draw_taus(d: int, r: int, trials: int, rng: np.random.Generator, backend: str = "lazy"):
    """``trials`` single steps on fresh clocks: host ``0..r``, centre 0, candidates ``1..r``."""
    store = ClockStore(r + 1, backend)
    U = np.arange(1, r + 1)
    taus = np.empty(trials)
    first = np.empty(trials, dtype=np.int64)
    for k in range(trials):
        _fresh(store, int(rng.integers(0, 2 ** 63)) if backend == "eager" else None)
        res = sample_step(store, 0, U, d, rng)
        taus[k] = res.tau
        first[k] = res.children[0]
    return taus, first


def moment_test(d: int, r: int, taus: np.ndarray, k: int, band: float) -> TestResult:
    mean = float(np.mean(taus ** k))
    target = order_stat_moment(d, r, k)
    var = order_stat_moment(d, r, 2 * k) - target ** 2
    se = math.sqrt(var / taus.size)
    z = (mean - target) / se
    return TestResult(f"moment_k{k}_d{d}_r{r}", abs(z), band, abs(z) <= band,
                      detail={"mean": mean, "target": target, "se": se, "trials": int(taus.size)})


def backend_equivalence_test(d: int, r: int, trials: int, rng: np.random.Generator,
                             level: float) -> list[TestResult]:
    tl, fl = draw_taus(d, r, trials, rng, "lazy")
    te, fe = draw_taus(d, r, trials, rng, "eager")
    ks = stats.ks_2samp(tl, te)
    table = np.vstack([np.bincount(fl, minlength=r + 1)[1:], np.bincount(fe, minlength=r + 1)[1:]])
    chi2, pval, dof, _ = stats.chi2_contingency(table)
    return [
        TestResult(f"backend_ks_tau_d{d}_r{r}", float(ks.statistic), level, ks.pvalue > level,
                   p_value=float(ks.pvalue), detail={"trials": trials}),
        TestResult(f"backend_chi2_first_child_d{d}_r{r}", float(chi2), level, pval > level,
                   p_value=float(pval), detail={"dof": int(dof), "trials": trials}),
    ]


def first_tree_pairs(n: int, trials: int, rng: np.random.Generator, backend: str = "lazy") -> np.ndarray:
    """Counts of ``(phi(v_0), phi(v_1))`` for a single edge embedded on fresh clocks."""
    lay = bfs_order(Tree(2, [(0, 1)]))
    store = ClockStore(n, backend)
    counts = np.zeros((n, n), dtype=np.int64)
    for _ in range(trials):
        _fresh(store, int(rng.integers(0, 2 ** 63)) if backend == "eager" else None)
        phi = run_round(store, lay, rng).phi
        counts[phi[0], phi[1]] += 1
    return counts


def uniformity_test(counts: np.ndarray, level: float) -> list[TestResult]:
    n = counts.shape[0]
    cells = counts[~np.eye(n, dtype=bool)]
    total = int(cells.sum())
    chi2, pval = stats.chisquare(cells)
    prob = 1.0 / (n * (n - 1))
    se = math.sqrt(prob * (1 - prob) / total)
    z = float(np.max(np.abs(cells / total - prob)) / se)
    z_crit = float(stats.norm.isf(level / (2 * cells.size)))
    return [
        TestResult(f"first_tree_chi2_n{n}", float(chi2), level, pval > level, p_value=float(pval),
                   detail={"dof": int(cells.size - 1), "trials": total,
                           "diagonal": int(np.trace(counts))}),
        TestResult(f"first_tree_cell_ci_n{n}", z, z_crit, z <= z_crit and np.trace(counts) == 0,
                   detail={"target": prob, "max_abs_dev": float(np.max(np.abs(cells / total - prob)))}),
    ]


def _skip(name: str, threshold: float, budget: int, need: int) -> TestResult:
    return TestResult(name, None, threshold, False, skipped=True,
                      detail={"reason": f"budget {budget} below minimum {need}"})


def stat_battery(config: BatteryConfig | None = None) -> BatteryReport:
    """Moments of the step time, backend equivalence, first-tree uniformity."""
    cfg = config or BatteryConfig()
    ss = np.random.SeedSequence(cfg.seed)
    streams = [np.random.default_rng(s) for s in ss.spawn(3)]
    results = []

    for d, r in cfg.moment_grid:
        if cfg.moment_trials < cfg.min_moment_trials:
            for k in (1, 2):
                results.append(_skip(f"moment_k{k}_d{d}_r{r}", cfg.se_band,
                                     cfg.moment_trials, cfg.min_moment_trials))
            continue
        taus, _ = draw_taus(d, r, cfg.moment_trials, streams[0])
        results.extend(moment_test(d, r, taus, k, cfg.se_band) for k in (1, 2))

    d, r = cfg.backend_d, cfg.backend_r
    if cfg.backend_trials < cfg.min_backend_trials:
        results.append(_skip(f"backend_ks_tau_d{d}_r{r}", cfg.level, cfg.backend_trials,
                             cfg.min_backend_trials))
        results.append(_skip(f"backend_chi2_first_child_d{d}_r{r}", cfg.level, cfg.backend_trials,
                             cfg.min_backend_trials))
    else:
        results.extend(backend_equivalence_test(d, r, cfg.backend_trials, streams[1], cfg.level))

    n = cfg.uniformity_n
    need = cfg.min_uniformity_per_cell * n * (n - 1)
    if cfg.uniformity_trials < need:
        results.append(_skip(f"first_tree_chi2_n{n}", cfg.level, cfg.uniformity_trials, need))
        results.append(_skip(f"first_tree_cell_ci_n{n}", cfg.level, cfg.uniformity_trials, need))
    else:
        counts = first_tree_pairs(n, cfg.uniformity_trials, streams[2])
        results.extend(uniformity_test(counts, cfg.level))
    return BatteryReport(cfg, results)

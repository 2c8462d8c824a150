import csv
import io
import itertools
import json
from fractions import Fraction

import numpy as np
import pytest

from treepack.probability import order_stat_moment
from treepack.sprinkle_engine import pack
from treepack.tree_core import Tree, TreeSpec, gen_tree
from treepack.verify import (BatteryConfig, backend_equivalence_test, draw_taus, first_tree_pairs,
                             moment_test, overlap_statistic, stat_battery, uniformity_test,
                             verify_outcome, verify_packing)

P3 = Tree(3, [(0, 1), (1, 2)])


# -- verify_packing -----------------------------------------------------------

def test_valid_engine_output_passes():
    rng = np.random.default_rng(0)
    trees = [gen_tree(TreeSpec("random-prufer", 20, 4), rng) for _ in range(5)]
    out = pack(trees, 50, 0.5, rng=1)
    rep = verify_outcome(trees, out)
    assert rep.passed and rep.structural and rep.label_bound
    assert rep.max_label == out.max_label


def test_shared_edge_detected():
    rep = verify_packing([P3, P3], [[0, 1, 2], [3, 1, 0]], n=4)
    assert not rep.edge_disjoint and not rep.passed
    assert all(t["adjacency"] and t["injective"] for t in rep.per_tree)


def test_swapped_pair_breaks_adjacency():
    host = {(0, 1), (1, 2)}
    rep = verify_packing([P3], [[1, 0, 2]], n=3, host_edge=lambda u, w: (min(u, w), max(u, w)) in host)
    assert not rep.per_tree[0]["adjacency"] and not rep.structural


def test_non_injective_and_partial_maps():
    rep = verify_packing([P3], [[0, 1, 0]], n=3)
    assert not rep.per_tree[0]["injective"]
    rep = verify_packing([P3], [[0, 1]], n=3)
    assert not rep.per_tree[0]["total"]
    rep = verify_packing([P3], [[0, 1, 5]], n=3)
    assert not rep.per_tree[0]["total"]
    rep = verify_packing([P3, P3], [[0, 1, 2]], n=3)
    assert not rep.count_ok and not rep.passed


def test_label_bound():
    labels = {(0, 1): 0.2, (1, 2): 0.7}
    rep = verify_packing([P3], [[0, 1, 2]], n=3, labels=labels, p=0.5)
    assert rep.structural and rep.label_bound is False and not rep.passed
    assert rep.max_label == 0.7
    rep = verify_packing([P3], [[0, 1, 2]], n=3, labels=labels, p=0.7)
    assert rep.passed
    rep = verify_packing([P3], [[0, 1, 2]], n=3, labels={(0, 1): 0.2}, p=0.7)
    assert not rep.within_host and not rep.passed


def test_report_serializes():
    rep = verify_packing([P3], [[0, 1, 2]], n=3)
    assert json.loads(json.dumps(rep.to_dict()))["passed"]


# -- overlap statistic ----------------------------------------------------------

def test_overlap_single_set():
    st = overlap_statistic([[1, 3, 4]], 6, 0.5, keep_matrix=True)
    M = st.matrix
    for u, w in itertools.combinations(range(6), 2):
        expect = 1 / 3 if {u, w} <= {1, 3, 4} else 0.0
        assert M[u, w] == pytest.approx(expect)
    assert st.max_value == pytest.approx(1 / 3) and st.bound == pytest.approx(2 * 0.5 / 6 * 3)


def test_overlap_identical_sets():
    N, w = 7, 4
    st = overlap_statistic([[0, 2, 5, 9]] * N, 12, 0.3, keep_matrix=True)
    assert st.matrix[2, 9] == pytest.approx(N / w) and st.matrix[1, 2] == 0
    assert st.max_value == pytest.approx(N / w)


def test_overlap_exact_against_fractions():
    rng = np.random.default_rng(2)
    n = 15
    sets = [rng.choice(n, size=int(rng.integers(1, n)), replace=False) for _ in range(30)]
    st = overlap_statistic(sets, n, 0.4, keep_matrix=True)
    for u, w in itertools.combinations(range(n), 2):
        exact = sum((Fraction(1, len(s)) for s in sets if u in s and w in s), Fraction(0))
        assert abs(st.matrix[u, w] - float(exact)) <= 1e-12
    assert st.symmetric and st.finite


def test_overlap_precondition_and_outcome_input():
    rng = np.random.default_rng(3)
    trees = [gen_tree(TreeSpec("random-prufer", 10, 3), rng) for _ in range(4)]
    out = pack(trees, 30, 0.5, rng=0)
    st = overlap_statistic(out, 30, 0.5, alpha=0.2)
    assert st.precondition is False and st.to_dict()["soft"]
    assert st.max_leftover == 21
    with pytest.raises(ValueError):
        overlap_statistic([[]], 5, 0.5)


# -- battery --------------------------------------------------------------------

def test_moment_test_at_target():
    rng = np.random.default_rng(4)
    taus, first = draw_taus(3, 50, 20_000, rng)
    r = moment_test(3, 50, taus, 1, 4.0)
    assert r.passed and r.detail["target"] == pytest.approx(3 / 51)
    assert set(np.unique(first)) <= set(range(1, 51))


def test_moment_test_catches_wrong_law():
    taus = np.random.default_rng(5).beta(4, 47, size=20_000)  # the 4th order statistic
    assert not moment_test(3, 50, taus, 1, 4.0).passed


def test_backend_equivalence_small():
    res = backend_equivalence_test(2, 10, 3000, np.random.default_rng(6), 1e-3)
    assert [r.name for r in res] == ["backend_ks_tau_d2_r10", "backend_chi2_first_child_d2_r10"]
    assert all(r.passed for r in res)


def test_first_tree_pairs_shape():
    counts = first_tree_pairs(5, 4000, np.random.default_rng(7))
    assert counts.sum() == 4000 and np.trace(counts) == 0
    assert all(r.passed for r in uniformity_test(counts, 1e-3))


def test_uniformity_flags_bias():
    counts = np.full((4, 4), 1000)
    np.fill_diagonal(counts, 0)
    counts[0, 1] = 1400
    assert not any(r.passed for r in uniformity_test(counts, 1e-3))


def test_battery_skips_underpowered_budgets():
    cfg = BatteryConfig(moment_trials=10, backend_trials=10, uniformity_trials=10)
    rep = stat_battery(cfg)
    assert rep.results and all(r.skipped for r in rep.results) and rep.passed
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0] == ["name", "statistic", "threshold", "pass"]
    assert {r[3] for r in rows[1:]} == {"skip"}
    d = json.loads(rep.to_json())
    assert "Bonferroni" in d["note"] and len(d["results"]) == len(rep.results)


def test_battery_small_budget_runs():
    cfg = BatteryConfig(moment_trials=3000, backend_trials=3000, uniformity_trials=6000,
                        uniformity_n=5, min_uniformity_per_cell=100)
    rep = stat_battery(cfg)
    assert not any(r.skipped for r in rep.results)
    assert rep.passed, rep.to_csv()
    assert all(isinstance(r.passed, bool) for r in rep.results)


def test_battery_fixed_seed_reproducible():
    cfg = BatteryConfig(moment_trials=2000, backend_trials=10, uniformity_trials=10)
    a, b = stat_battery(cfg).to_dict(), stat_battery(cfg).to_dict()
    assert a == b


def test_second_moment_target():
    assert order_stat_moment(3, 50, 2) == pytest.approx(3 * 4 / (51 * 52))

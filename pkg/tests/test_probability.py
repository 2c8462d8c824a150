import json
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from treepack.probability import (BennettParams, Params, bennett_h, bennett_tail, bennett_tail_raw,
                                  harmonic_gap, order_stat_moment, validate_params)

mp.mp.dps = 50


def mp_tail(N, M, s2, t):
    return mp.e ** (-mp.mpf(t) ** 2 / (2 * (N * mp.mpf(s2) + mp.mpf(M) * t / 3)))


def mp_raw(N, M, s2, t):
    var = N * mp.mpf(s2)
    u = mp.mpf(M) * t / var
    return mp.e ** (-(var / mp.mpf(M) ** 2) * ((1 + u) * mp.log(1 + u) - u))


def rel(a, b):
    return abs(a - float(b)) / abs(float(b))


# -- Bennett ---------------------------------------------------------------

def test_bennett_t_zero():
    bp = BennettParams(5, 1.0, 0.0, 1.0, 0.0)
    assert bennett_tail(bp) == 1.0
    assert bennett_tail_raw(bp) == 1.0


def test_bennett_spot_value():
    bp = BennettParams(100, 1.0, 0.0, 1.0, 30.0)
    assert math.isclose(bennett_tail(bp), math.exp(-900 / 220), rel_tol=1e-15)
    assert rel(bennett_tail(bp), mp_tail(100, 1, 1, 30)) < 1e-12
    assert abs(bennett_tail(bp) - 0.01672) < 5e-6


def test_bennett_raw_spot_value():
    bp = BennettParams(100, 1.0, 0.0, 1.0, 30.0)
    assert math.isclose(bp.u, 0.3)
    assert rel(bennett_tail_raw(bp), mp_raw(100, 1, 1, 30)) < 1e-12
    assert round(bennett_tail_raw(bp), 4) in (0.0164, 0.0165)


@pytest.mark.parametrize("N,M,s2,t", [(1, 1, 1, 1), (10, 0.5, 0.01, 3), (1000, 2, 0.3, 1e-4),
                                      (7, 3, 1e-6, 50), (10 ** 6, 1, 1, 2000)])
def test_bennett_matches_high_precision(N, M, s2, t):
    bp = BennettParams(N, M, 0.0, s2, t)
    assert rel(bennett_tail(bp), mp_tail(N, M, s2, t)) < 1e-12
    # the closed form loses relative accuracy only when the exponent underflows
    exact = mp_raw(N, M, s2, t)
    if exact > 1e-300:
        assert rel(bennett_tail_raw(bp), exact) < 1e-12


def test_bennett_zero_variance_and_bound():
    assert bennett_tail_raw(BennettParams(3, 1.0, 0.0, 0.0, 1.0)) == 0.0
    assert bennett_tail(BennettParams(3, 1.0, 0.0, 0.0, 0.5)) == pytest.approx(math.exp(-0.25 / (2 * 0.5 / 3)))


@pytest.mark.parametrize("kw", [dict(N=0, M=1, mu=0, sigma2=1, t=1), dict(N=1, M=0, mu=0, sigma2=1, t=1),
                                dict(N=1, M=1, mu=0, sigma2=-1, t=1), dict(N=1, M=1, mu=0, sigma2=1, t=-1)])
def test_bennett_params_invalid(kw):
    with pytest.raises(ValueError):
        BennettParams(**kw)


@given(st.integers(1, 10 ** 4), st.floats(1e-3, 10), st.floats(1e-4, 10), st.floats(0, 100),
       st.floats(1e-3, 100))
@settings(max_examples=300)
def test_bennett_scaling_invariance(N, M, s2, t, c):
    a = bennett_tail(BennettParams(N, M, 0.0, s2, t))
    b = bennett_tail(BennettParams(N, c * M, 0.0, c * c * s2, c * t))
    assert b == pytest.approx(a, rel=1e-9, abs=1e-300)


def test_bennett_raw_below_simplified_grid():
    bad = 0
    for N in np.unique(np.geomspace(1, 10 ** 5, 10).astype(int)):
        for s2 in np.geomspace(1e-4, 10, 10):
            for t in np.geomspace(1e-3, 1e3, 10):
                bp = BennettParams(int(N), 1.0, 0.0, float(s2), float(t))
                bad += bennett_tail_raw(bp) > bennett_tail(bp)
    assert bad == 0


def test_bennett_monotone_grid():
    ts = np.linspace(0, 50, 40)
    for s2 in (0.01, 0.5, 2.0):
        vals = [bennett_tail(BennettParams(50, 1.0, 0.0, s2, float(t))) for t in ts]
        assert all(a >= b for a, b in zip(vals, vals[1:]))
    s2s = np.linspace(0.01, 5, 40)
    vals = [bennett_tail(BennettParams(50, 1.0, 0.0, float(s), 10.0)) for s in s2s]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("u", [0.0, 1e-12, 1e-8, 1e-4, 0.05, 0.0999, 0.1, 0.3, 1, 10, 1e6])
def test_bennett_h_against_mpmath(u):
    exact = (1 + mp.mpf(u)) * mp.log1p(mp.mpf(u)) - u
    if u == 0:
        assert bennett_h(u) == 0
    else:
        assert rel(bennett_h(u), exact) < 1e-13


@given(st.floats(1e-9, 1e3))
def test_bennett_h_lower_bound(u):
    assert bennett_h(u) >= u * u / (2 * (1 + u / 3)) * (1 - 1e-12)


# -- order statistics ---------------------------------------------------

def test_order_stat_examples():
    assert order_stat_moment(1, 1, 1) == 0.5
    assert order_stat_moment(4, 4, 1) == pytest.approx(0.8)
    assert order_stat_moment(2, 5, 2) == pytest.approx(1 / 7)


def test_order_stat_monte_carlo():
    rng = np.random.default_rng(2)
    x = np.sort(rng.random((10 ** 6, 5)), axis=1)[:, 1] ** 2
    se = x.std() / math.sqrt(x.size)
    assert abs(x.mean() - 1 / 7) < 4 * se


@pytest.mark.parametrize("d,r,k", [(1, 10, 1), (3, 50, 2), (5, 20, 3), (7, 7, 4), (1, 1000, 2)])
def test_order_stat_against_beta(d, r, k):
    exact = mp.beta(d + k, r - d + 1) / mp.beta(d, r - d + 1)
    assert rel(order_stat_moment(d, r, k), exact) < 1e-13


def test_order_stat_monotone_grid():
    for r in range(1, 30):
        vals = [order_stat_moment(d, r, 1) for d in range(1, r + 1)]
        assert all(a < b for a, b in zip(vals, vals[1:]))
    for d in range(1, 10):
        vals = [order_stat_moment(d, r, 1) for r in range(d, 40)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("d,r,k", [(3, 2, 1), (0, 3, 1), (1, 3, 0)])
def test_order_stat_domain(d, r, k):
    with pytest.raises(ValueError):
        order_stat_moment(d, r, k)


# -- harmonic gap ------------------------------------------------------

def test_harmonic_examples():
    assert harmonic_gap(10, 1) == (0.0, True)
    gap, ok = harmonic_gap(10, 5)
    assert gap == pytest.approx(1 / 9 + 1 / 8 + 1 / 7 + 1 / 6) and ok
    # 1/9 + 1/8 + 1/7 + 1/6 = 0.54563..., below log(9/5) = 0.58779...
    assert gap == pytest.approx(0.545635, abs=1e-6) and gap <= math.log(9 / 5)
    gap, ok = harmonic_gap(100, 99)
    assert gap == pytest.approx(sum(1 / j for j in range(2, 100))) and ok
    assert gap <= math.log(99)


@given(st.integers(2, 5000).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n - 1))))
def test_harmonic_bound_always(nm):
    assert harmonic_gap(*nm)[1]


@pytest.mark.parametrize("n,m", [(5, 5), (5, 7), (5, 0)])
def test_harmonic_domain(n, m):
    with pytest.raises(ValueError):
        harmonic_gap(n, m)


# -- parameter validation ---------------------------------------------

def test_validate_desk_scale_infeasible():
    rep = validate_params(200, 0.99, 0.5, 0.5)
    assert not rep.feasible
    c = rep.check("p_lower")
    assert c.lhs == pytest.approx(150 * math.log(200) ** 2 / (0.25 * 200)) and c.lhs > 1


def test_validate_large_n():
    n, p = 10 ** 10, 1e-4
    rep = validate_params(n, p, 0.5, 0.5, Delta=6, N=1000)
    lo = mp.mpf(150) * mp.log(n) ** 2 / (mp.mpf(0.25) * n)
    hi = mp.mpf(0.5) * mp.mpf(0.5) ** 4 / 128
    assert rel(rep.check("p_lower").lhs, lo) < 1e-12 and float(lo) == pytest.approx(3.18e-5, rel=1e-2)
    assert rel(rep.check("p_upper").rhs, hi) < 1e-12 and float(hi) == pytest.approx(2.44e-4, rel=1e-2)
    cap = rep.check("Delta_cap").rhs
    assert 6 <= cap < 7
    assert rep.feasible
    assert rep.params.delta == pytest.approx(21 * p / 0.5 ** 4)
    assert rep.params.tau_max == pytest.approx(0.5 * p / (60 * math.log(n)))
    assert rep.params.degree_cap == pytest.approx(2 * n * p)


def test_validate_eps_near_one_kills_N():
    rep = validate_params(10 ** 10, 1e-4, 0.5, 1 - 1e-9, Delta=1, N=1)
    assert not rep.check("N_cap").holds and not rep.feasible


def test_validate_never_raises_on_infeasible_and_serializes():
    rep = validate_params(50, 0.9, 0.9, 0.9, Delta=100, N=100)
    d = rep.as_dict()
    json.dumps(d)
    assert d["feasible"] is False
    assert all(set(c) == {"name", "lhs", "rhs", "holds"} for c in d["checks"])
    assert any("126" in note for note in d["notes"])
    assert rep.feasible == all(c["holds"] for c in d["checks"])


@pytest.mark.parametrize("args", [(2, 0.1, 0.5, 0.5), (100, 0, 0.5, 0.5), (100, 0.5, 1.0, 0.5),
                                  (100, 0.5, 0.5, 0.0)])
def test_validate_domain(args):
    with pytest.raises(ValueError):
        validate_params(*args)


@given(st.integers(8, 10 ** 12), st.floats(1.01, 100))
def test_lower_bound_relaxes_with_n(n, factor):
    a = validate_params(n, 0.5, 0.5, 0.5).check("p_lower").lhs
    b = validate_params(int(n * factor) + 1, 0.5, 0.5, 0.5).check("p_lower").lhs
    assert b <= a


@given(st.integers(100, 10 ** 12), st.floats(1e-6, 0.5), st.integers(1, 50), st.integers(1, 50))
def test_smaller_delta_never_hurts(n, p, d1, d2):
    lo, hi = min(d1, d2), max(d1, d2)
    a = validate_params(n, p, 0.5, 0.5, Delta=hi, N=1)
    b = validate_params(n, p, 0.5, 0.5, Delta=lo, N=1)
    assert not a.feasible or b.feasible


def test_params_derived_fields_live():
    pr = Params(1000, 0.01, 0.5, 0.5)
    assert pr.delta == pytest.approx(21 * 0.01 / 0.0625)


def test_validate_large_delta_does_not_overflow():
    rep = validate_params(300, 0.2, 0.3, 0.3)
    chk = {c.name: c for c in rep.checks}["exp_2delta"]
    assert math.isinf(chk.lhs) and not chk.holds and not rep.feasible

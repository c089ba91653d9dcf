import math

import numba
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import enumerate_boundaries

from mcbuckets.buckets import NAMED_SETS
from mcbuckets.confseq_simctest import (
    ABOVE,
    BELOW,
    BoundaryTable,
    SimctestState,
    SpendingSequence,
    build_boundaries,
    build_design,
    check_monotone,
    closure_time,
    compute_n0,
    simctest_interval,
    simctest_update,
    spending_eval,
)
from mcbuckets.errors import InconsistentDecisions, NMaxTooSmall, NotClosed

JSTAR, J0, SINGLE = NAMED_SETS["Jstar"], NAMED_SETS["J0"], NAMED_SETS["single"]
TH = JSTAR.boundary_points


@pytest.fixture(scope="module")
def jstar_design():
    return build_design(JSTAR, SpendingSequence(5e-4))


# --- spending ------------------------------------------------------------


def test_spending_examples():
    sp = SpendingSequence(1e-3, 1000)
    assert spending_eval(sp, 1000) == pytest.approx(5e-4)
    assert spending_eval(sp, 0) == 0.0
    with pytest.raises(ValueError):
        spending_eval(sp, -1)


def test_spending_non_decreasing_to_rho():
    eps = SpendingSequence(1e-3)(np.arange(1, 10**6 + 1))
    assert np.all(np.diff(eps) >= 0)
    assert eps[-1] < 1e-3 and eps[-1] > 0.999e-3


def test_custom_spending_holds_last_value():
    sp = SpendingSequence(0.01, table=(0.001, 0.005, 0.01))
    assert sp.kind == "custom"
    assert [spending_eval(sp, n) for n in (0, 1, 3, 50)] == [0.0, 0.001, 0.01, 0.01]
    with pytest.raises(ValueError):
        SpendingSequence(0.01, table=(0.005, 0.001))


# --- boundaries ----------------------------------------------------------


@pytest.mark.parametrize("alpha", [0.01, 0.05, 0.3, 0.5])
@pytest.mark.parametrize("rho", [1e-2, 5e-4])
def test_boundaries_match_path_enumeration(alpha, rho):
    n_max = 20
    sp = SpendingSequence(rho)
    eps = sp(np.arange(n_max + 1))
    table = build_boundaries(alpha, sp, n_max)
    for n, L, U, sl, su in enumerate_boundaries(alpha, eps, n_max):
        assert table.bounds(n) == (L, U), n
        i = table.index(n)
        assert abs(table.spent_lower[i] - sl) < 1e-12
        assert abs(table.spent_upper[i] - su) < 1e-12


@pytest.mark.parametrize("alpha, rho", [(0.01, 1e-3), (0.5, 0.2), (0.9, 5e-4)])
def test_first_boundaries(alpha, rho):
    assert build_boundaries(alpha, SpendingSequence(rho), 5).bounds(1) == (-1, 2)


@pytest.mark.parametrize("alpha", [0.001, 0.05, 0.4])
def test_boundary_table_invariants(alpha):
    t = build_boundaries(alpha, SpendingSequence(5e-4), 20_000)
    assert np.all(t.L < t.U)
    assert np.all(np.diff(t.L) >= 0) and np.all(np.diff(t.U) >= 0)
    assert np.all(t.spent_lower <= t.eps + 1e-15) and np.all(t.spent_upper <= t.eps + 1e-15)
    assert np.all(t.spent_lower + t.spent_upper <= 2 * 5e-4)


def test_grid_boundaries_restrict_per_sample_ones():
    # with every sample as checkpoint the grid recursion is the per-sample one
    sp = SpendingSequence(5e-3)
    a = build_boundaries(0.05, sp, 3000)
    b = build_boundaries(0.05, sp, 3000, grid=list(range(1, 3001)))
    assert np.array_equal(a.L, b.L) and np.array_equal(a.U, b.U)
    assert np.allclose(a.spent_upper, b.spent_upper, rtol=0, atol=1e-13)


def test_coarse_grid_spends_within_budget():
    sp = SpendingSequence(5e-3)
    grid = [10, 25, 50, 100, 400, 1600, 6400]
    t = build_boundaries(0.05, sp, 6400, grid=grid)
    assert t.n.tolist() == grid and not t.per_sample
    assert np.all(t.spent_upper <= sp(t.n) + 1e-15)
    with pytest.raises(KeyError):
        t.index(11)
    with pytest.raises(NMaxTooSmall):
        t.index(7000)


def test_build_rejects_bad_input():
    with pytest.raises(ValueError):
        build_boundaries(0.0, SpendingSequence(1e-3), 10)
    with pytest.raises(ValueError):
        build_boundaries(0.1, SpendingSequence(1e-3), 0)


def test_csv_round_trip(tmp_path):
    t = build_boundaries(0.05, SpendingSequence(5e-4), 500)
    path = tmp_path / "b.csv"
    t.to_csv(path)
    back = BoundaryTable.from_csv(path, 0.05, 5e-4)
    for name in ("n", "L", "U", "eps", "spent_lower", "spent_upper"):
        assert np.array_equal(getattr(t, name), getattr(back, name))
    assert t.to_csv().splitlines()[0] == "n,L_n,U_n,eps_n,spent_lower,spent_upper"


@numba.njit(cache=True)
def _crossings(L, U, alpha, n_runs, seed):
    np.random.seed(seed)
    up = 0
    down = 0
    for _ in range(n_runs):
        s = 0
        for n in range(1, len(L) + 1):
            if np.random.random() < alpha:
                s += 1
            if s >= U[n - 1]:
                up += 1
                break
            if s <= L[n - 1]:
                down += 1
                break
    return up, down


@pytest.mark.slow
@pytest.mark.parametrize("alpha", [0.01, 0.2])
def test_wrong_side_crossing_risk(alpha):
    rho, runs = 0.01, 100_000
    t = build_boundaries(alpha, SpendingSequence(rho, 100), 2000)
    up, down = _crossings(t.L, t.U, alpha, runs, 3)
    se = math.sqrt(rho * (1 - rho) / runs)
    assert up / runs <= rho + 3 * se
    assert down / runs <= rho + 3 * se
    # the simulated rates agree with the exact spent masses
    assert abs(up / runs - t.spent_upper[-1]) < 4 * se
    assert abs(down / runs - t.spent_lower[-1]) < 4 * se


# --- monotonicity --------------------------------------------------------


def test_jstar_tables_are_monotone_to_closure(jstar_design):
    d = jstar_design
    assert d.monotone
    assert check_monotone(d.tables, d.closure + 1)


def test_single_table_is_monotone():
    assert check_monotone([build_boundaries(0.05, SpendingSequence(5e-4), 100)], 100)


def test_perturbed_table_is_not_monotone():
    sp = SpendingSequence(5e-4)
    a, b = (build_boundaries(x, sp, 2000) for x in (0.045, 0.05))
    assert check_monotone([a, b], 2000)
    U = a.U.copy()
    i = int(np.argmax(U < b.U))
    U[i] = b.U[i] + 1
    bad = BoundaryTable(a.alpha, a.rho, a.n, a.L, U, a.eps, a.spent_lower, a.spent_upper)
    assert not check_monotone([bad, b], 2000)


def test_monotone_rejects_mixed_rho():
    with pytest.raises(ValueError):
        check_monotone([build_boundaries(0.01, SpendingSequence(x), 10) for x in (1e-3, 1e-2)], 10)


def _separation_gap(n, sp):
    # threshold gap above which two thresholds' boundaries must separate by n
    d = spending_eval(sp, n) - spending_eval(sp, n - 1)
    delta = math.sqrt(-n * math.log(d) / 2)
    return 2 * (delta / n + 1 / n)


def test_compute_n0():
    sp = SpendingSequence(5e-4)
    n0 = compute_n0(0.045, 0.055, sp)
    assert _separation_gap(n0, sp) <= 0.01 < _separation_gap(n0 - 1, sp)
    assert all(_separation_gap(n, sp) <= 0.01 for n in np.linspace(n0, 10 * n0, 50).astype(int))
    with pytest.raises(ValueError):
        compute_n0(0.05, 0.05, sp)
    with pytest.raises(ValueError):
        compute_n0(0.01, 0.05, SpendingSequence(0.3))


def test_delta_over_n_vanishes():
    sp = SpendingSequence(5e-4)
    vals = [_separation_gap(int(n), sp) for n in (1e3, 1e4, 1e5, 1e6, 1e7)]
    assert all(a > c for a, c in zip(vals[:-1], vals[1:]))
    # roughly sqrt(log(n) / n): each decade shrinks it by about sqrt(10)
    assert all(a / c > 2.5 for a, c in zip(vals[:-1], vals[1:]))


# --- state and interval --------------------------------------------------


def test_interval_examples():
    m = len(TH)
    s0 = SimctestState.initial(m)
    assert str(simctest_interval(s0, TH)) == "[0, 1]"
    st_ = SimctestState(100, 3, (ABOVE, ABOVE) + (0,) * (m - 2), (5, 9) + (0,) * (m - 2))
    assert str(simctest_interval(st_, TH)) == "(0.001, 1]"
    below = SimctestState(100, 0, (BELOW,) * m, (50,) * m)
    assert str(simctest_interval(below, TH)) == "[0, 0.0005]"


def test_inconsistent_decisions():
    m = len(TH)
    bad = SimctestState(10, 5, (BELOW,) + (0,) * (m - 2) + (ABOVE,), (3,) + (0,) * (m - 2) + (4,))
    with pytest.raises(InconsistentDecisions):
        simctest_interval(bad, TH)


def test_update_records_crossings():
    sp = SpendingSequence(5e-4)
    tabs = [build_boundaries(a, sp, 200) for a in (0.01, 0.5)]
    s = simctest_update(SimctestState.initial(2), tabs, 0, 1)
    assert s.status == (0, 0)
    for _ in range(199):
        s = simctest_update(s, tabs, 0, 1)
    assert s.status == (0, BELOW) and 0 < s.hit_time[1] < 200
    assert str(simctest_interval(s, [0.01, 0.5])) == "[0, 0.5]"
    with pytest.raises(ValueError):
        simctest_update(s, tabs, 3, 2)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.floats(0, 1))
def test_monotone_tables_give_consistent_states(seed, p):
    sp = SpendingSequence(5e-3)
    th = [0.01, 0.05, 0.1]
    tabs = [build_boundaries(a, sp, 400) for a in th]
    rng = np.random.default_rng(seed)
    s = SimctestState.initial(3)
    for k in rng.random(400) < p:
        s = simctest_update(s, tabs, int(k), 1)
        simctest_interval(s, th)
    above = [a for a, x in zip(th, s.status) if x == ABOVE]
    below = [a for a, x in zip(th, s.status) if x == BELOW]
    assert max(above, default=0) < min(below, default=1)


# --- closure -------------------------------------------------------------


def test_single_bucket_closes_at_one():
    assert closure_time(SINGLE, []) == 1


def test_jstar_closes(jstar_design):
    c = jstar_design.closure
    assert c is not None and c > 10**5
    # per-sample closure recomputed from fresh, longer tables
    sp = SpendingSequence(5e-4)
    tabs = [build_boundaries(a, sp, c + 10) for a in TH]
    assert closure_time(JSTAR, tabs) == c
    short = [build_boundaries(a, sp, c - 1) for a in TH]
    with pytest.raises(NotClosed):
        closure_time(JSTAR, short)


def test_j0_never_closes_on_short_tables():
    sp = SpendingSequence(5e-4)
    with pytest.raises(NotClosed):
        closure_time(J0, [build_boundaries(a, sp, 50_000) for a in J0.boundary_points])


# --- joint coverage ------------------------------------------------------


@numba.njit(cache=True)
def _miscovered(L, U, th, p, n_runs, seed):
    # walks jump from one exceedance to the next; boundaries are
    # non-decreasing, so a lower crossing inside a gap shows at its end
    np.random.seed(seed)
    m, N = L.shape
    missed = 0
    for _ in range(n_runs):
        s = 0
        n = 0
        open_ = np.ones(m, dtype=np.bool_)
        bad = False
        while n < N and not bad:
            gap = N + 1 if p == 0.0 else np.random.geometric(p)
            last = min(n + gap - 1, N)
            for j in range(m):
                if open_[j] and last > n and s <= L[j, last - 1]:
                    open_[j] = False
                    bad = bad or p > th[j]
            n += gap
            if n > N:
                break
            s += 1
            for j in range(m):
                if not open_[j]:
                    continue
                if s >= U[j, n - 1]:
                    open_[j] = False
                    bad = bad or p <= th[j]
                elif s <= L[j, n - 1]:
                    open_[j] = False
                    bad = bad or p > th[j]
        if bad:
            missed += 1
    return missed


@pytest.fixture(scope="module")
def coverage_design():
    return build_design(JSTAR, SpendingSequence(5e-3))


@pytest.mark.slow
@pytest.mark.parametrize("p", [0.0005, 0.001, 0.01, 0.05])
def test_joint_coverage(coverage_design, p):
    d = coverage_design
    runs, eps = 10_000, 0.01
    L = np.stack([t.L for t in d.tables])
    U = np.stack([t.U for t in d.tables])
    rate = _miscovered(L, U, d.thresholds, p, runs, 17) / runs
    assert rate <= eps + 3 * math.sqrt(eps * (1 - eps) / runs)

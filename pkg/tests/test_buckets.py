import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mcbuckets.buckets import (
    NAMED_SETS,
    Bucket,
    BucketSet,
    Interval,
    RatingCode,
    clopper_pearson,
    fit_width,
    gen_match_naive,
    gen_proportional,
    gen_sqrt,
    is_overlapping,
    load_bucket_set,
    star_rating,
    validate,
)
from mcbuckets.errors import (
    BucketNotInSet,
    CoverageGap,
    DegenerateBucket,
    OverlapCollision,
    RhoTooLarge,
)

J0, JSTAR, JS = NAMED_SETS["J0"], NAMED_SETS["Jstar"], NAMED_SETS["Js"]


def b(lo, hi, lc=False, hc=True):
    return Bucket(lo, hi, lc, hc)


# --- intervals and buckets ----------------------------------------------


@pytest.mark.parametrize(
    "iv, p, inside",
    [
        (Interval(0.1, 0.2, False, True), 0.1, False),
        (Interval(0.1, 0.2, False, True), 0.2, True),
        (Interval(0.1, 0.2, True, False), 0.1, True),
        (Interval(0.1, 0.2, True, False), 0.2, False),
        (Interval(0.1, 0.2, False, False), 0.15, True),
        (Interval(0.1, 0.2, True, True), 0.25, False),
    ],
)
def test_membership_respects_closure(iv, p, inside):
    assert (p in iv) is inside


@pytest.mark.parametrize("lo, hi", [(0.5, 0.5), (0.6, 0.5)])
def test_bucket_rejects_empty(lo, hi):
    with pytest.raises(DegenerateBucket):
        Bucket(lo, hi)


@pytest.mark.parametrize("lo, hi", [(-0.1, 0.5), (0.2, 1.1)])
def test_bucket_rejects_out_of_range(lo, hi):
    with pytest.raises(ValueError):
        Bucket(lo, hi)


def test_subset_with_open_ends():
    assert Interval(0.1, 0.2, False, True).issubset(b(0.1, 0.2))
    assert not Interval(0.1, 0.2, True, True).issubset(b(0.1, 0.2))
    assert Interval(0.1, 0.2, False, False).issubset(Interval(0.1, 0.2, False, False))
    assert not Interval(0.1, 0.2, False, True).issubset(Interval(0.1, 0.2, False, False))


# --- validation ----------------------------------------------------------


def test_named_sets_are_valid():
    assert [str(x) for x in J0] == ["[0, 0.001]", "(0.001, 0.01]", "(0.01, 0.05]", "(0.05, 1]"]
    assert len(JSTAR) == 7
    assert JSTAR.boundary_points.tolist() == [5e-4, 1e-3, 2e-3, 8e-3, 0.01, 0.012, 0.045, 0.05, 0.055]
    assert len(JS) == 8
    assert JS.boundary_points.tolist() == [10.0**k for k in range(-8, 0)]


def test_single_bucket_is_valid():
    s = validate([Bucket(0.0, 1.0, True, True)])
    assert len(s) == 1


def test_touching_open_ends_leave_a_gap():
    with pytest.raises(CoverageGap) as exc:
        validate([Bucket(0.0, 0.5, True, False), Bucket(0.5, 1.0, False, True)])
    assert exc.value.point == 0.5


@pytest.mark.parametrize(
    "buckets, point",
    [
        ([Bucket(0.0, 0.4, True, True), Bucket(0.5, 1.0, True, True)], 0.45),
        ([Bucket(0.0, 1.0, False, True)], 0.0),
        ([Bucket(0.0, 1.0, True, False)], 1.0),
    ],
)
def test_coverage_gap_points(buckets, point):
    with pytest.raises(CoverageGap) as exc:
        validate(buckets)
    assert exc.value.point == point


def test_empty_list_rejected():
    with pytest.raises(ValueError):
        validate([])


def test_buckets_sorted_by_lo_hi():
    s = validate([b(0.5, 1.0), Bucket(0.0, 0.5, True, True), b(0.4, 0.6)])
    assert [(x.lo, x.hi) for x in s] == [(0.0, 0.5), (0.4, 0.6), (0.5, 1.0)]


def test_json_round_trip(tmp_path):
    path = tmp_path / "set.json"
    JSTAR.to_json(path)
    assert BucketSet.from_json(path) == JSTAR
    assert load_bucket_set(str(path)) == JSTAR
    assert BucketSet.from_json(JSTAR.to_json()) == JSTAR


def test_unknown_set_name():
    with pytest.raises(ValueError, match="named set"):
        load_bucket_set("no-such-set")


# --- overlap -------------------------------------------------------------


@pytest.mark.parametrize("name, expected", [("J0", False), ("Jstar", True), ("Js", True), ("single", True)])
def test_is_overlapping(name, expected):
    assert is_overlapping(NAMED_SETS[name]) is expected


@pytest.mark.parametrize("name", ["Jstar", "Js", "single"])
def test_short_intervals_fit_some_bucket(name):
    bset = NAMED_SETS[name]
    c = fit_width(bset)
    assert c > 0
    rng = np.random.default_rng(5)
    for _ in range(1000):
        length = rng.uniform(0, min(c, 1.0)) * (1 - 1e-9)
        lo = rng.uniform(0, 1 - length)
        # near-threshold starts are where fits are tight
        if rng.random() < 0.5:
            t = rng.choice(bset.boundary_points) if len(bset.boundary_points) else 0.5
            lo = min(max(t - rng.uniform(0, 1) * length, 0.0), 1 - length)
        iv = Interval(lo, lo + length, True, True)
        assert bset.select(iv) is not None, iv


def test_fit_width_of_jstar_and_j0():
    assert fit_width(JSTAR) == pytest.approx(5e-4)
    assert fit_width(J0) == 0.0


# --- tie-breaking --------------------------------------------------------


def test_tie_break_prefers_small_hi_then_large_lo():
    # [0.0006, 0.0009] lies in [0, 1e-3] and (5e-4, 2e-3]
    k = JSTAR.select(Interval(6e-4, 9e-4))
    assert str(JSTAR[k]) == "[0, 0.001]"
    s = validate([Bucket(0.0, 0.5, True, True), b(0.2, 0.5), b(0.5, 1.0)])
    assert str(s[s.select(Interval(0.3, 0.4))]) == "(0.2, 0.5]"
    assert s.select(Interval(0.3, 0.7)) is None


# --- star rating ---------------------------------------------------------


@pytest.mark.parametrize(
    "bucket, code",
    [
        (Bucket(0.0, 1e-3, True, True), "***"),
        (b(1e-3, 0.01), "**"),
        (b(0.01, 0.05), "*"),
        (b(0.05, 1.0), ""),
        (b(5e-4, 2e-3), "**~"),
        (b(0.008, 0.012), "*~"),
        (b(0.045, 0.055), "~"),
    ],
)
def test_star_rating_jstar(bucket, code):
    assert str(star_rating(JSTAR, bucket)) == code


def test_star_rating_is_total_and_never_three_with_tilde():
    for bset in (J0, JSTAR, JS):
        for x in bset:
            r = star_rating(bset, x)
            assert not (r.stars == 3 and r.tilde and bset is JSTAR)
    assert [str(star_rating(J0, x)) for x in J0] == ["***", "**", "*", ""]


def test_star_rating_rejects_foreign_bucket():
    with pytest.raises(BucketNotInSet):
        star_rating(JSTAR, b(0.2, 0.3))


def test_rating_code_range():
    with pytest.raises(ValueError):
        RatingCode(4, False)


# --- generators ----------------------------------------------------------


def test_gen_proportional_single_threshold():
    s = gen_proportional([0.05], 0.6)
    extra = [x for x in s if x.lo == pytest.approx(0.03)]
    assert len(extra) == 1 and extra[0].hi == pytest.approx(0.05 / 0.6)


def test_gen_proportional_three_thresholds_overlap():
    s = gen_proportional([0.001, 0.01, 0.05], 0.8)
    assert len(s) == 7 and is_overlapping(s)


def test_gen_proportional_rho_one_is_degenerate():
    with pytest.raises(DegenerateBucket):
        gen_proportional([0.05], 1.0)


def test_gen_proportional_collision():
    with pytest.raises(OverlapCollision):
        gen_proportional([0.01, 0.02], 0.3)


def test_gen_sqrt():
    s = gen_sqrt([0.01], 0.02)
    assert any(x.lo == pytest.approx(0.008) and x.hi == pytest.approx(0.012) for x in s)
    assert is_overlapping(gen_sqrt([0.001, 0.01, 0.05], 0.01))
    with pytest.raises(RhoTooLarge):
        gen_sqrt([1e-4], 0.02)


def _cp_oracle(S, n, eps):
    lo = 0.0 if S == 0 else stats.beta.ppf(eps / 2, S, n - S + 1)
    hi = 1.0 if S == n else stats.beta.ppf(1 - eps / 2, S + 1, n - S)
    return lo, hi


@pytest.mark.parametrize("t, n, eps", [(0.5, 1, 0.1), (0.05, 100, 1e-3), (0.01, 30, 0.05)])
def test_gen_match_naive_against_cp_oracle(t, n, eps):
    ivs = [_cp_oracle(S, n, eps) for S in range(n + 1)]
    hits = [iv for iv in ivs if iv[0] <= t <= iv[1]]
    s = gen_match_naive([t], n, eps)
    lo, hi = min(h[0] for h in hits), max(h[1] for h in hits)
    assert any(abs(x.lo - lo) < 1e-10 and abs(x.hi - hi) < 1e-10 for x in s)


def test_gen_match_naive_width_shrinks():
    def width(n):
        s = gen_match_naive([0.05], n, 1e-3)
        (extra,) = [x for x in s if x.contains_interior(0.05)]
        return extra.length

    widths = [width(n) for n in (100, 300, 900)]
    assert widths[0] > widths[1] > widths[2]


# --- Clopper-Pearson -----------------------------------------------------


def test_clopper_pearson_edges():
    assert clopper_pearson(0, 10, 0.1).lo == 0.0
    assert clopper_pearson(10, 10, 0.1).hi == 1.0


@pytest.mark.parametrize("S, n, eps", [(5, 10, 0.05), (0, 10, 0.1), (3, 50, 1e-3), (99, 100, 0.01)])
def test_clopper_pearson_against_beta_quantiles(S, n, eps):
    iv = clopper_pearson(S, n, eps)
    lo, hi = _cp_oracle(S, n, eps)
    assert abs(iv.lo - lo) < 1e-12 and abs(iv.hi - hi) < 1e-12


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 200), frac=st.floats(0, 1), eps=st.floats(1e-4, 0.5))
def test_clopper_pearson_contains_estimate(n, frac, eps):
    S = int(round(frac * n))
    iv = clopper_pearson(S, n, eps)
    assert iv.lo <= S / n <= iv.hi


@pytest.mark.parametrize("ratio", [0.1, 0.25, 0.5])
def test_clopper_pearson_width_decreases(ratio):
    widths = [clopper_pearson(int(ratio * n), n, 0.05).length for n in (20, 40, 80, 160, 320)]
    assert all(a > c for a, c in zip(widths[:-1], widths[1:]))


@settings(max_examples=100, deadline=None)
@given(p=st.floats(0, 1))
def test_every_point_has_a_bucket(p):
    for bset in NAMED_SETS.values():
        assert bset.containing(p)
        assert not math.isnan(bset[bset.select_point(p)].lo)

import itertools
import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from tmpc.stats import EmptySample, compare, mann_whitney_u, midranks, significance_stars, u_statistic

small = st.lists(st.integers(0, 6).map(float), min_size=1, max_size=6)
medium = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=30)


def brute_force_tails(a, b):
    """Enumerate every assignment of the pooled values to group a."""
    pooled = np.concatenate([a, b])
    r = midranks(pooled)
    obs = r[: len(a)].sum()
    ge = le = total = 0
    for idx in itertools.combinations(range(len(pooled)), len(a)):
        s = r[list(idx)].sum()
        total += 1
        ge += s >= obs - 1e-9
        le += s <= obs + 1e-9
    return ge / total, le / total


def test_midranks_share_ties():
    assert list(midranks([10, 20, 20, 30])) == [1, 2.5, 2.5, 4]
    assert list(midranks([5, 5, 5])) == [2, 2, 2]


def test_hand_examples():
    res = mann_whitney_u([1, 2], [3, 4])
    assert res.U == 0.0 and res.method == "exact"
    assert res.p_one == pytest.approx(1 / 6)
    U, p_two, p_one = res
    assert (U, p_two, p_one) == (0.0, pytest.approx(1 / 3), pytest.approx(1 / 6))
    same = mann_whitney_u([1, 2, 3, 4], [1, 2, 3, 4])
    assert same.U == 8.0 and same.p_two >= 0.99


def test_empty_and_nan_rejected():
    with pytest.raises(EmptySample):
        mann_whitney_u([], [1.0])
    with pytest.raises(ValueError):
        mann_whitney_u([math.nan], [1.0])
    with pytest.raises(ValueError):
        mann_whitney_u([1.0], [2.0], alternative="sideways")


@settings(max_examples=150, deadline=None)
@given(small, small)
def test_exact_matches_enumeration(a, b):
    res = mann_whitney_u(a, b, alternative="greater", method="exact")
    ge, le = brute_force_tails(np.array(a), np.array(b))
    assert res.p_one == pytest.approx(ge, abs=1e-12)
    assert mann_whitney_u(a, b, alternative="less", method="exact").p_one == pytest.approx(le, abs=1e-12)
    assert res.p_two == pytest.approx(min(1.0, 2 * min(ge, le)), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=7, unique=True),
       st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=7, unique=True))
def test_exact_matches_scipy_without_ties(a, b):
    if set(a) & set(b):
        return
    res = mann_whitney_u(a, b, alternative="greater", method="exact")
    ref = scipy.stats.mannwhitneyu(a, b, alternative="greater", method="exact")
    assert res.U == ref.statistic
    assert res.p_one == pytest.approx(ref.pvalue, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 20).map(float), min_size=8, max_size=40),
       st.lists(st.integers(0, 20).map(float), min_size=8, max_size=40))
def test_normal_matches_scipy_asymptotic(a, b):
    res = mann_whitney_u(a, b, method="normal", alternative="greater")
    if np.unique(a + b).size == 1:
        assert res.p_one == 1.0
        return
    ref = scipy.stats.mannwhitneyu(a, b, alternative="greater", method="asymptotic", use_continuity=True)
    assert res.p_one == pytest.approx(ref.pvalue, abs=1e-12)
    ref2 = scipy.stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
    assert res.p_two == pytest.approx(ref2.pvalue, abs=1e-12)


def test_normal_approximation_against_permutation_oracle():
    rng = np.random.default_rng(99)
    a = rng.normal(0.2, 1.0, 100)
    b = rng.normal(0.0, 1.0, 100)
    res = mann_whitney_u(a, b, alternative="greater")
    assert res.method == "normal"
    pooled = np.concatenate([a, b])
    r = midranks(pooled)
    obs = r[:100].sum()
    hits = 0
    n_perm = 1_000_000
    chunk = 50_000
    for _ in range(n_perm // chunk):
        perm = rng.permuted(np.tile(r, (chunk, 1)), axis=1)
        hits += int(np.count_nonzero(perm[:, :100].sum(axis=1) >= obs - 1e-9))
    assert abs(res.p_one - hits / n_perm) < 0.01


@given(medium, medium)
def test_complement_identity(a, b):
    assert u_statistic(a, b) + u_statistic(b, a) == pytest.approx(len(a) * len(b))
    assert mann_whitney_u(a, b).U == pytest.approx(u_statistic(a, b))


@given(medium, medium, st.sampled_from(["auto", "greater", "less"]))
def test_p_values_bounded(a, b, alt):
    res = mann_whitney_u(a, b, alternative=alt)
    assert 0.0 <= res.p_one <= 1.0 and 0.0 <= res.p_two <= 1.0
    if alt == "auto":
        assert res.p_one <= res.p_two + 1e-12


def test_method_switch():
    assert mann_whitney_u(range(7), range(50)).method == "exact"
    assert mann_whitney_u(range(8), range(8)).method == "normal"
    assert mann_whitney_u(range(5), range(300)).method == "normal"


def test_stars():
    assert [significance_stars(p) for p in (0.0005, 0.005, 0.03, 0.05, 0.5)] == ["***", "**", "*", "", ""]


def test_compare_examples():
    same = compare([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert same.percent_change == 0.0 and same.stars == ""
    rng = np.random.default_rng(1)
    hi = compare(rng.uniform(2, 3, 20), rng.uniform(0, 1, 20))
    assert hi.p_one < 0.001 and hi.stars == "***"
    hand = compare([1.1, 1.3], [1.0, 1.0])
    assert hand.percent_change == pytest.approx(20.0)
    assert hand.mean_a == pytest.approx(1.2) and hand.std_a == pytest.approx(math.sqrt(0.02))


def test_compare_to_dict_drops_non_finite():
    d = compare([1.0, 2.0], [0.0, 0.0]).to_dict()
    assert d["percent_change"] is None

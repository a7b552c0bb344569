from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import special, stats as sps

from privmeter.stats import (
    Direction, ecdf, kolmogorov_sf, ks_asymptotic_pvalue, ks_exact_pvalue, ks_rank, ks_two_sample,
    pairwise_pvalues, relative_standard_error, stability_curve,
)

from conftest import run, visit


def brute_d(a, b):
    pts = np.concatenate([a, b])
    fa = np.array([np.mean(np.asarray(a) <= x) for x in pts])
    fb = np.array([np.mean(np.asarray(b) <= x) for x in pts])
    return float(np.max(np.abs(fa - fb)))


# -- ecdf ---------------------------------------------------------------------------

def test_ecdf_single():
    f = ecdf([5])
    assert f(4.999) == 0.0 and f(5) == 1.0 and f(1e9) == 1.0


def test_ecdf_ties():
    f = ecdf([1, 1, 2])
    assert f(1) == pytest.approx(2 / 3) and f(2) == 1.0
    assert list(f.values) == [1.0, 2.0]


def test_ecdf_midpoint():
    assert ecdf([1, 2, 3, 4])(2.5) == 0.5


def test_ecdf_errors():
    with pytest.raises(ValueError):
        ecdf([])
    with pytest.raises(ValueError):
        ecdf([1.0, math.inf])


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
def test_ecdf_step_properties(xs):
    f = ecdf(xs)
    assert np.all(np.diff(f.fractions) > 0)
    assert f.fractions[-1] == pytest.approx(1.0)
    assert f(math.inf) == 1.0 and f(-math.inf) == 0.0


# -- KS -----------------------------------------------------------------------------

def test_ks_identical():
    r = ks_two_sample([1, 2, 3], [1, 2, 3])
    assert r.d_statistic == 0 and r.same_distribution and r.p_value == 1.0


def test_ks_disjoint():
    assert ks_two_sample([0, 0, 0], [1, 1, 1]).d_statistic == 1.0


def test_ks_shifted():
    assert ks_two_sample([1, 2, 3, 4], [2, 3, 4, 5]).d_statistic == 0.25


def test_ks_empty():
    with pytest.raises(ValueError):
        ks_two_sample([], [1])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 20), min_size=1, max_size=30), st.lists(st.integers(0, 20), min_size=1, max_size=30))
def test_ks_d_matches_brute_force_and_scipy(a, b):
    r = ks_two_sample(a, b)
    assert r.d_statistic == pytest.approx(brute_d(a, b), abs=1e-12)
    assert r.d_statistic == pytest.approx(sps.ks_2samp(a, b, method="asymp").statistic, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=40), st.lists(st.floats(-100, 100), min_size=1, max_size=40))
def test_ks_symmetry(a, b):
    r1, r2 = ks_two_sample(a, b), ks_two_sample(b, a)
    assert r1.d_statistic == r2.d_statistic and r1.p_value == r2.p_value
    assert 0.0 <= r1.d_statistic <= 1.0 and 0.0 <= r1.p_value <= 1.0


@given(st.lists(st.integers(0, 5), min_size=1, max_size=20), st.lists(st.integers(0, 5), min_size=1, max_size=20))
def test_d_zero_iff_ecdfs_coincide(a, b):
    fa, fb = ecdf(a), ecdf(b)
    pts = sorted(set(a) | set(b))
    coincide = all(fa(x) == pytest.approx(fb(x)) for x in pts)
    assert (ks_two_sample(a, b).d_statistic == 0) == coincide


@pytest.mark.parametrize("lam", [0.3, 0.5, 0.8, 1.0, 1.36, 2.0, 3.0])
def test_kolmogorov_sf_matches_scipy(lam):
    assert kolmogorov_sf(lam) == pytest.approx(special.kolmogorov(lam), abs=1e-10)


def test_asymptotic_formula_by_hand():
    # n = m = 50 -> ne = 25, lambda = (5 + 0.12 + 0.022) * 0.3
    lam = (5 + 0.12 + 0.11 / 5) * 0.3
    expected = 2 * sum((-1) ** (k - 1) * math.exp(-2 * k * k * lam * lam) for k in range(1, 50))
    assert ks_asymptotic_pvalue(0.3, 50, 50) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("n,m", [(3, 3), (4, 5), (2, 7), (5, 5)])
def test_exact_pvalue_matches_enumeration(n, m):
    values = np.arange(n + m)
    for num in range(1, n * m + 1):
        hits = total = 0
        for idx in itertools.combinations(range(n + m), n):
            mask = np.zeros(n + m, bool)
            mask[list(idx)] = True
            a, b = values[mask], values[~mask]
            d_num = round(brute_d(a, b) * n * m)
            hits += d_num >= num
            total += 1
        assert ks_exact_pvalue(num, n, m) == pytest.approx(hits / total, abs=1e-12)


def test_exact_pvalue_matches_scipy_exact():
    a, b = np.arange(0, 10), np.arange(4, 20, 2.0) + 0.5
    r = ks_two_sample(a, b)
    assert r.n * r.m < 400
    assert r.p_value == pytest.approx(sps.ks_2samp(a, b, method="exact").pvalue, rel=1e-9)


# -- ranking --------------------------------------------------------------------------

def _sites(values):
    return {f"s{i}": float(v) for i, v in enumerate(values)}


def test_rank_identical():
    ra = ks_rank({"a": _sites(range(30)), "b": _sites(range(30))})
    assert ra.ranks == {"a": 1, "b": 1}


def test_rank_bare_vs_block_all(default_corpus, rules):
    from privmeter.blockers import BlockerSpec, Policy, simulate
    from privmeter.metrics import per_site_means
    runs, _ = default_corpus
    blocked = simulate(BlockerSpec("rp", policy=Policy.BLOCK_ALL_THIRD_PARTY), runs, rules)
    per = {cid: {s: m.means["tp_requests"] for s, m in per_site_means(rs, rules).items()}
           for cid, rs in (("bare", runs), ("rp", blocked))}
    ra = ks_rank(per, 0.05, Direction.LOWER_IS_BETTER)
    assert ra.ranks == {"rp": 1, "bare": 2}
    assert ks_two_sample(list(per["bare"].values()), list(per["rp"].values())).d_statistic == 1.0


def test_rank_two_similar_one_distinct():
    rng = np.random.default_rng(0)
    a = rng.normal(10, 1, 200)
    per = {"A": _sites(a), "B": _sites(a + rng.normal(0, 0.01, 200)), "C": _sites(a + 5)}
    assert ks_rank(per).ranks == {"A": 1, "B": 1, "C": 2}


def test_rank_direction_and_ties():
    per = {"b": _sites([1] * 40), "a": _sites([1] * 40), "z": _sites([9] * 40)}
    low = ks_rank(per, direction=Direction.LOWER_IS_BETTER)
    high = ks_rank(per, direction=Direction.HIGHER_IS_BETTER)
    assert low.groups == (("a", "b"), ("z",))
    assert high.groups == (("z",), ("a", "b"))


def test_rank_uses_common_sites_only():
    per = {"a": {"s1": 1.0, "s2": 2.0, "only_a": 100.0}, "b": {"s1": 1.0, "s2": 2.0}}
    ra = ks_rank(per)
    assert ra.means["a"] == 1.5 and ra.ranks == {"a": 1, "b": 1}


def test_rank_errors():
    with pytest.raises(ValueError):
        ks_rank({"a": {"s": 1.0}})
    with pytest.raises(ValueError):
        ks_rank({"a": {"s": 1.0}, "b": {"t": 1.0}})


def test_complete_linkage_is_finer():
    x = np.linspace(0, 1, 300)
    per = {"A": _sites(x), "B": _sites(x + 0.06), "C": _sites(x + 0.12)}
    anchor, complete = ks_rank(per, linkage="anchor"), ks_rank(per, linkage="complete")
    assert len(complete.groups) >= len(anchor.groups)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 100.0))
def test_rank_scale_invariant(seed, factor):
    rng = np.random.default_rng(seed)
    per = {c: _sites(rng.poisson(lam, 60)) for c, lam in zip("abcd", (5, 5.5, 8, 12))}
    assume(all(len(set(v.values())) > 1 for v in per.values()))
    scaled = {c: {s: v * factor for s, v in vals.items()} for c, vals in per.items()}
    r1, r2 = ks_rank(per), ks_rank(scaled)
    assert r1.ranks == r2.ranks


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_rank_groups_contiguous(seed):
    rng = np.random.default_rng(seed)
    per = {f"c{i}": _sites(rng.normal(rng.uniform(0, 3), 1, 50)) for i in range(6)}
    ra = ks_rank(per)
    order = sorted(per, key=lambda c: (ra.means[c], c))
    assert [c for g in ra.groups for c in g] == order
    assert sorted(set(ra.ranks.values())) == list(range(1, len(ra.groups) + 1))


def test_pairwise_pvalues_symmetric():
    per = {"a": _sites(range(40)), "b": _sites(range(5, 45)), "c": _sites(range(20, 60))}
    pv = pairwise_pvalues(per)
    assert pv[("a", "a")] == 1.0
    assert all(pv[(x, y)] == pv[(y, x)] for x in per for y in per)


# -- RSE -------------------------------------------------------------------------------

def test_rse_examples():
    assert relative_standard_error([10, 10, 10]) == 0.0
    assert relative_standard_error([8, 12]) == pytest.approx(0.2)


@pytest.mark.parametrize("xs", [[1.0], [-1.0, 1.0]])
def test_rse_errors(xs):
    with pytest.raises(ValueError):
        relative_standard_error(xs)


def test_rse_scales_as_inverse_sqrt_n():
    rng = np.random.default_rng(1)
    draws = rng.normal(100, 10, size=(4000, 64))
    avg = {n: np.mean([relative_standard_error(row[:n]) for row in draws]) for n in (4, 16, 64)}
    assert avg[4] / avg[16] == pytest.approx(2.0, rel=0.1)
    assert avg[16] / avg[64] == pytest.approx(2.0, rel=0.1)


def _metric(v):
    return len(v.requests)


def test_stability_constant_corpus():
    runs = [run([visit("a.com", ["https://a.com/", "https://t.net/"]), visit("b.com", ["https://b.com/"])], run_index=k)
            for k in range(5)]
    curve = stability_curve(runs, _metric, 5)
    assert [p.n for p in curve.points] == [2, 3, 4, 5]
    assert all(p.median == p.p5 == p.p95 == 0.0 for p in curve.points)


def test_stability_single_site():
    runs = [run([visit("a.com", ["https://a.com/"] * k)], run_index=k - 1) for k in (2, 4, 3)]
    curve = stability_curve(runs, _metric, 3)
    last = curve.points[-1]
    assert last.median == last.p5 == last.p95 == pytest.approx(relative_standard_error([2, 4, 3]))
    assert curve.final_rse == {"https://a.com/": pytest.approx(relative_standard_error([2, 4, 3]))}


def test_stability_insufficient_runs():
    with pytest.raises(ValueError, match="max_n=4"):
        stability_curve([run([], run_index=0)], _metric, 4)


def test_stability_all_zero_series_counts_as_zero():
    runs = [run([visit("a.com", [])], run_index=k) for k in range(3)]
    assert stability_curve(runs, _metric, 3).medians() == [0.0, 0.0]

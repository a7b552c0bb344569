"""ECDFs, two-sample Kolmogorov-Smirnov tests, KS-based ranking and measurement error."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .crawl import CrawlRun, SiteVisit

DEFAULT_ALPHA = 0.05
# below this n*m the p-value comes from the exact null distribution instead of the asymptotic series
EXACT_NM_LIMIT = 400


class Direction(str, enum.Enum):
    LOWER_IS_BETTER = "lower"
    HIGHER_IS_BETTER = "higher"


@dataclass(frozen=True)
class Ecdf:
    values: np.ndarray      # distinct sample values, ascending
    fractions: np.ndarray   # F(values[i])

    def __call__(self, x):
        idx = np.searchsorted(self.values, x, side="right")
        out = np.where(idx > 0, self.fractions[np.maximum(idx - 1, 0)], 0.0)
        return float(out) if np.ndim(out) == 0 else out


def ecdf(samples: Sequence[float]) -> Ecdf:
    """Right-continuous step ECDF of ``samples`` with ties merged.

    >>> ecdf([1, 1, 2])(1)
    0.6666666666666666
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("ecdf of an empty sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("ecdf samples must be finite")
    values, counts = np.unique(x, return_counts=True)
    return Ecdf(values, np.cumsum(counts) / x.size)


@dataclass(frozen=True)
class KsResult:
    d_statistic: float
    p_value: float
    n: int
    m: int
    same_distribution: bool


def _ks_numerator(a: np.ndarray, b: np.ndarray) -> int:
    """max_x |n_b * count_a(<=x) - n_a * count_b(<=x)| by a merged scan of the sorted samples."""
    n, m = len(a), len(b)
    i = j = 0
    best = 0
    while i < n or j < m:
        if j >= m or (i < n and a[i] <= b[j]):
            x = a[i]
        else:
            x = b[j]
        while i < n and a[i] == x:
            i += 1
        while j < m and b[j] == x:
            j += 1
        best = max(best, abs(i * m - j * n))
    return best


def kolmogorov_sf(lam: float, tol: float = 1e-12) -> float:
    """Survival function of the Kolmogorov distribution, 2 sum (-1)^(k-1) exp(-2 k^2 lam^2)."""
    if lam <= 0:
        return 1.0
    total = 0.0
    k = 1
    while True:
        term = 2.0 * (-1) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
        total += term
        if abs(term) < tol:
            break
        k += 1
    return min(1.0, max(0.0, total))


def ks_asymptotic_pvalue(d: float, n: int, m: int) -> float:
    ne = n * m / (n + m)
    root = math.sqrt(ne)
    return kolmogorov_sf((root + 0.12 + 0.11 / root) * d)


def ks_exact_pvalue(numerator: int, n: int, m: int) -> float:
    """P(D >= numerator/(n*m)) under random relabelling of n+m distinct values.

    Counts monotone lattice paths from (0, 0) to (n, m) that stay strictly
    inside |i*m - j*n| < numerator.
    """
    if numerator <= 0:
        return 1.0
    row = [0] * (m + 1)
    for i in range(n + 1):
        for j in range(m + 1):
            if abs(i * m - j * n) >= numerator:
                row[j] = 0
            elif i == 0 and j == 0:
                row[j] = 1
            else:
                row[j] = (row[j] if i > 0 else 0) + (row[j - 1] if j > 0 else 0)
    inside = row[m]
    return 1.0 - inside / math.comb(n + m, n)


def ks_two_sample(a: Sequence[float], b: Sequence[float], alpha: float = DEFAULT_ALPHA) -> KsResult:
    """Two-sided two-sample KS test; ``same_distribution`` is ``p >= alpha``."""
    xa = np.sort(np.asarray(a, dtype=float))
    xb = np.sort(np.asarray(b, dtype=float))
    n, m = len(xa), len(xb)
    if n == 0 or m == 0:
        raise ValueError("KS test needs two non-empty samples")
    num = _ks_numerator(xa, xb)
    d = num / (n * m)
    if n * m < EXACT_NM_LIMIT:
        p = ks_exact_pvalue(num, n, m)
    else:
        p = ks_asymptotic_pvalue(d, n, m)
    return KsResult(d, p, n, m, p >= alpha)


# -- ranking ----------------------------------------------------------------------

@dataclass(frozen=True)
class RankAssignment:
    ranks: dict[str, int]
    groups: tuple[tuple[str, ...], ...]
    means: dict[str, float]
    stds: dict[str, float]


def _common_samples(per_site: Mapping[str, Mapping[str, float]]) -> dict[str, np.ndarray]:
    common = set.intersection(*(set(v) for v in per_site.values()))
    if not common:
        raise ValueError("configs share no common site")
    sites = sorted(common)
    return {cid: np.array([vals[s] for s in sites], dtype=float) for cid, vals in per_site.items()}


def ks_rank(
    per_site: Mapping[str, Mapping[str, float]],
    alpha: float = DEFAULT_ALPHA,
    direction: Direction = Direction.LOWER_IS_BETTER,
    linkage: str = "anchor",
) -> RankAssignment:
    """Group configurations by KS test outcome and number the groups.

    Configurations are ordered by their mean over common sites (ties broken
    by id) and scanned once.  With ``linkage="anchor"`` a configuration joins
    the open group when it is not distinguishable from the group's first
    member; ``linkage="complete"`` requires indistinguishability from every
    member.  Otherwise it opens a new group.
    """
    if len(per_site) < 2:
        raise ValueError("ks_rank needs at least two configurations")
    if linkage not in ("anchor", "complete"):
        raise ValueError(f"unknown linkage {linkage!r}")
    samples = _common_samples(per_site)
    means = {cid: float(x.mean()) for cid, x in samples.items()}
    stds = {cid: float(x.std(ddof=1)) if len(x) > 1 else 0.0 for cid, x in samples.items()}
    sign = 1.0 if Direction(direction) is Direction.LOWER_IS_BETTER else -1.0
    order = sorted(samples, key=lambda cid: (sign * means[cid], cid))

    groups: list[list[str]] = []
    for cid in order:
        if groups:
            members = groups[-1][:1] if linkage == "anchor" else groups[-1]
            if all(ks_two_sample(samples[g], samples[cid], alpha).same_distribution for g in members):
                groups[-1].append(cid)
                continue
        groups.append([cid])
    ranks = {cid: gi + 1 for gi, g in enumerate(groups) for cid in g}
    return RankAssignment(ranks, tuple(tuple(g) for g in groups), means, stds)


def pairwise_pvalues(per_site: Mapping[str, Mapping[str, float]]) -> dict[tuple[str, str], float]:
    samples = _common_samples(per_site)
    ids = list(samples)
    out = {}
    for i, a in enumerate(ids):
        out[(a, a)] = 1.0
        for b in ids[i + 1:]:
            p = ks_two_sample(samples[a], samples[b]).p_value
            out[(a, b)] = out[(b, a)] = p
    return out


# -- measurement error ----------------------------------------------------------------

def relative_standard_error(samples: Sequence[float]) -> float:
    """Standard error of the mean over |mean|, with the n-1 sample deviation.

    >>> relative_standard_error([8, 12])
    0.2
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("relative standard error needs at least two samples")
    mean = x.mean()
    if mean == 0:
        raise ValueError("relative standard error undefined for zero mean")
    return float(x.std(ddof=1) / math.sqrt(x.size) / abs(mean))


@dataclass(frozen=True)
class StabilityPoint:
    n: int
    median: float
    p5: float
    p95: float
    n_sites: int


@dataclass(frozen=True)
class StabilityCurve:
    points: tuple[StabilityPoint, ...]
    final_rse: dict[str, float]   # per-site RSE at n = max_n
    final_ecdf: Ecdf | None

    def medians(self) -> list[float]:
        return [p.median for p in self.points]


MetricSelector = Callable[[SiteVisit], float]


def stability_curve(runs: Sequence[CrawlRun], selector: MetricSelector, max_n: int) -> StabilityCurve:
    """RSE of the per-site mean using the first n runs, for n = 2..max_n.

    A site whose metric is identically zero over the first n runs counts as
    RSE 0; sites seen fewer than twice are left out at that n.
    """
    if max_n < 2:
        raise ValueError("max_n must be at least 2")
    if len(runs) < max_n:
        raise ValueError(f"stability_curve needs max_n={max_n} runs, got {len(runs)}")
    ordered = sorted(runs, key=lambda r: r.run_index)[:max_n]
    series: dict[str, list[float]] = {}
    for k, run in enumerate(ordered):
        for visit in run.visits:
            series.setdefault(visit.site, [math.nan] * max_n)[k] = float(selector(visit))

    points, final = [], {}
    for n in range(2, max_n + 1):
        rses = {}
        for site, vals in series.items():
            x = np.array([v for v in vals[:n] if not math.isnan(v)])
            if x.size < 2:
                continue
            rses[site] = 0.0 if not np.any(x) else relative_standard_error(x)
        arr = np.array(list(rses.values())) if rses else np.array([math.nan])
        points.append(StabilityPoint(
            n, float(np.median(arr)), float(np.percentile(arr, 5)), float(np.percentile(arr, 95)), len(rses),
        ))
        final = rses
    return StabilityCurve(tuple(points), final, ecdf(list(final.values())) if final else None)

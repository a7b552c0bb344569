"""Browsing and HTML metrics per visit, per run and per configuration."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable

import numpy as np

from .crawl import CrawlRun, SiteVisit
from .psl import PartyClass, SuffixRules, classify_party, default_rules, entity_of

BROWSING_METRICS = ("fp_requests", "tp_requests", "tp_domains", "cookies", "bytes_total")
HTML_METRICS = ("html_bytes", "n_images", "n_scripts", "image_bytes", "script_bytes")
SITE_METRICS = ("fp_requests", "tp_requests", "tp_domains", "bytes_total") + HTML_METRICS
ALL_METRICS = BROWSING_METRICS + HTML_METRICS
# bytes transferred varies too much across reloads to be used for comparisons
UNSTABLE_METRICS = frozenset({"bytes_total"})

CSV_COLUMNS = ("level", "config_id", "run_index", "site") + ALL_METRICS


@dataclass(frozen=True)
class BrowsingMetrics:
    fp_requests: int = 0
    tp_requests: int = 0
    tp_domains: int = 0
    cookies: int = 0
    bytes_total: int = 0


@dataclass(frozen=True)
class HtmlMetrics:
    html_bytes: int = 0
    n_images: int = 0
    n_scripts: int = 0
    image_bytes: int = 0
    script_bytes: int = 0


@dataclass(frozen=True)
class VisitMetrics:
    browsing: BrowsingMetrics
    html: HtmlMetrics

    def as_dict(self) -> dict[str, int]:
        out = {f.name: getattr(self.browsing, f.name) for f in fields(BrowsingMetrics)}
        out.update({f.name: getattr(self.html, f.name) for f in fields(HtmlMetrics)})
        return out


def _tp_domain_set(visit: SiteVisit, rules: SuffixRules) -> set[str]:
    return {
        entity_of(r.host, rules)
        for r in visit.requests
        if classify_party(r.host, visit.site_host, rules) is PartyClass.THIRD_PARTY
    }


def _html_metrics(visit: SiteVisit) -> HtmlMetrics:
    h = visit.html
    return HtmlMetrics(
        h.doc_bytes, len(h.image_refs), len(h.script_refs),
        sum(b for _, b in h.image_refs), sum(b for _, b in h.script_refs),
    )


def visit_metrics(visit: SiteVisit, rules: SuffixRules | None = None) -> VisitMetrics:
    rules = rules or default_rules()
    fp = tp = 0
    for r in visit.requests:
        if classify_party(r.host, visit.site_host, rules) is PartyClass.FIRST_PARTY:
            fp += 1
        else:
            tp += 1
    browsing = BrowsingMetrics(
        fp_requests=fp,
        tp_requests=tp,
        tp_domains=len(_tp_domain_set(visit, rules)),
        cookies=0,
        bytes_total=sum(r.bytes for r in visit.requests),
    )
    return VisitMetrics(browsing, _html_metrics(visit))


def run_totals(run: CrawlRun, rules: SuffixRules | None = None) -> VisitMetrics:
    """Sums over visits; tp_domains is the distinct count over the whole run."""
    rules = rules or default_rules()
    sums = np.zeros(len(SITE_METRICS), dtype=np.int64)
    domains: set[str] = set()
    for visit in run.visits:
        vm = visit_metrics(visit, rules).as_dict()
        sums += np.array([vm[m] for m in SITE_METRICS], dtype=np.int64)
        domains |= _tp_domain_set(visit, rules)
    totals = dict(zip(SITE_METRICS, (int(x) for x in sums)))
    totals["tp_domains"] = len(domains)
    totals["cookies"] = len({(c.domain, c.name) for c in run.cookie_jar})
    return VisitMetrics(
        BrowsingMetrics(**{k: totals[k] for k in BROWSING_METRICS}),
        HtmlMetrics(**{k: totals[k] for k in HTML_METRICS}),
    )


@dataclass(frozen=True)
class SiteMeans:
    means: dict[str, float]
    coverage: int


def per_site_means(runs: list[CrawlRun], rules: SuffixRules | None = None) -> dict[str, SiteMeans]:
    """Mean of every per-site metric over the runs in which the site was visited."""
    if not runs:
        raise ValueError("per_site_means needs at least one run")
    if len({r.config_id for r in runs}) != 1:
        raise ValueError("per_site_means expects runs of a single config_id")
    rules = rules or default_rules()
    acc: dict[str, list[dict[str, int]]] = {}
    for run in runs:
        for visit in run.visits:
            acc.setdefault(visit.site, []).append(visit_metrics(visit, rules).as_dict())
    return {
        site: SiteMeans({m: float(np.mean([row[m] for row in rows])) for m in SITE_METRICS}, len(rows))
        for site, rows in acc.items()
    }


# -- MetricTable -----------------------------------------------------------------

@dataclass
class MetricTable:
    """Per-site rows keyed by (config_id, run_index, site) plus per-run totals."""

    site_rows: dict[tuple[str, int, str], dict[str, int]]
    run_rows: dict[tuple[str, int], dict[str, int]]

    @property
    def config_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for cid, _ in self.run_rows:
            seen.setdefault(cid)
        return list(seen)

    def run_cookies(self, config_id: str, run_index: int) -> int:
        return self.run_rows[(config_id, run_index)]["cookies"]

    def config_totals(self, config_id: str) -> dict[str, float]:
        """Run totals averaged over the config's runs."""
        rows = [v for (cid, _), v in self.run_rows.items() if cid == config_id]
        if not rows:
            raise KeyError(config_id)
        return {m: float(np.mean([r[m] for r in rows])) for m in ALL_METRICS}

    def site_means(self, config_id: str, metric: str) -> dict[str, float]:
        """Per-site mean of ``metric`` over runs, from the stored rows."""
        if metric == "cookies":
            raise ValueError("cookies is a run-level metric; it has no per-site values")
        acc: dict[str, list[int]] = {}
        for (cid, _, site), row in self.site_rows.items():
            if cid == config_id:
                acc.setdefault(site, []).append(row[metric])
        return {s: float(np.mean(v)) for s, v in acc.items()}

    def run_values(self, config_id: str, metric: str) -> list[int]:
        return [row[metric] for (cid, _), row in sorted(self.run_rows.items()) if cid == config_id]


def build_metric_table(runs: Iterable[CrawlRun], rules: SuffixRules | None = None) -> MetricTable:
    rules = rules or default_rules()
    site_rows, run_rows = {}, {}
    for run in runs:
        for visit in run.visits:
            key = (run.config_id, run.run_index, visit.site)
            if key in site_rows:
                raise ValueError(f"site visited twice in one run: {key}")
            row = visit_metrics(visit, rules).as_dict()
            del row["cookies"]
            site_rows[key] = row
        run_rows[(run.config_id, run.run_index)] = run_totals(run, rules).as_dict()
    return MetricTable(site_rows, run_rows)


def metric_table_to_csv(table: MetricTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    by_run: dict[tuple[str, int], list] = {}
    for (cid, idx, site), srow in table.site_rows.items():
        by_run.setdefault((cid, idx), []).append((site, srow))
    for (cid, idx), row in table.run_rows.items():
        w.writerow(["run", cid, idx, ""] + [row[m] for m in ALL_METRICS])
        for site, srow in by_run.get((cid, idx), []):
            w.writerow(["site", cid, idx, site] + [srow.get(m, "") for m in ALL_METRICS])
    return buf.getvalue()


def metric_table_from_csv(text: str) -> MetricTable:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"unexpected metric CSV header: {reader.fieldnames}")
    site_rows, run_rows = {}, {}
    for rec in reader:
        idx = int(rec["run_index"])
        if rec["level"] == "run":
            run_rows[(rec["config_id"], idx)] = {m: int(rec[m]) for m in ALL_METRICS}
        elif rec["level"] == "site":
            site_rows[(rec["config_id"], idx, rec["site"])] = {m: int(rec[m]) for m in SITE_METRICS}
        else:
            raise ValueError(f"unknown row level {rec['level']!r}")
    return MetricTable(site_rows, run_rows)


def write_metric_csv(table: MetricTable, path: str | Path) -> None:
    Path(path).write_text(metric_table_to_csv(table), encoding="utf-8")


def read_metric_csv(path: str | Path) -> MetricTable:
    return metric_table_from_csv(Path(path).read_text(encoding="utf-8"))


__all__ = [
    "ALL_METRICS", "BROWSING_METRICS", "HTML_METRICS", "SITE_METRICS", "UNSTABLE_METRICS",
    "BrowsingMetrics", "HtmlMetrics", "VisitMetrics", "SiteMeans", "MetricTable",
    "visit_metrics", "run_totals", "per_site_means", "build_metric_table",
    "metric_table_to_csv", "metric_table_from_csv", "write_metric_csv", "read_metric_csv",
]

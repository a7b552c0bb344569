"""Privacy-footprint graphs: first parties linked to the third-party entities they contact."""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .crawl import CrawlRun
from .psl import PartyClass, SuffixRules, classify_party, default_rules, entity_of


class GroupingMethod(str, enum.Enum):
    ADNS = "adns"
    ROOT = "root"
    IDENTITY = "identity"   # no grouping; each registrable domain is its own node


@dataclass(frozen=True)
class EntityMap:
    adns: dict[str, str] = field(default_factory=dict)
    cdn_domains: frozenset[str] = frozenset()


def third_party_entity(domain: str, emap: EntityMap, method: GroupingMethod) -> str:
    method = GroupingMethod(method)
    if method is GroupingMethod.IDENTITY:
        return domain
    if method is GroupingMethod.ROOT and domain in emap.cdn_domains:
        return domain
    return emap.adns.get(domain, domain)


@dataclass(frozen=True)
class FootprintGraph:
    first_party_nodes: frozenset[str]
    third_party_nodes: frozenset[str]
    edges: frozenset[tuple[str, str]]
    method: GroupingMethod
    # third-party domains that had no ADNS entry and stood in for their own entity
    unmapped: frozenset[str] = frozenset()
    n_domains: int = 0

    @property
    def fallback_rate(self) -> float:
        return len(self.unmapped) / self.n_domains if self.n_domains else 0.0


def build_footprint(
    runs: Iterable[CrawlRun],
    rules: SuffixRules | None = None,
    emap: EntityMap | None = None,
    method: GroupingMethod = GroupingMethod.ADNS,
) -> FootprintGraph:
    rules = rules or default_rules()
    emap = emap or EntityMap()
    method = GroupingMethod(method)
    runs = list(runs)
    if len({r.config_id for r in runs}) > 1:
        raise ValueError("build_footprint expects runs of a single config_id")
    fps, tps, edges, domains = set(), set(), set(), set()
    for run in runs:
        for visit in run.visits:
            fp = entity_of(visit.site_host, rules)
            fps.add(fp)
            for req in visit.requests:
                if classify_party(req.host, visit.site_host, rules) is PartyClass.THIRD_PARTY:
                    dom = entity_of(req.host, rules)
                    domains.add(dom)
                    ent = third_party_entity(dom, emap, method)
                    tps.add(ent)
                    edges.add((fp, ent))
    unmapped = frozenset() if method is GroupingMethod.IDENTITY else frozenset(
        d for d in domains
        if d not in emap.adns and not (method is GroupingMethod.ROOT and d in emap.cdn_domains)
    )
    return FootprintGraph(frozenset(fps), frozenset(tps), frozenset(edges), method, unmapped, len(domains))


@dataclass(frozen=True)
class FootprintMetrics:
    n_third_parties: int
    mean_tp_per_fp: float
    top10_fp_coverage: int


def footprint_metrics(graph: FootprintGraph, top: int = 10) -> FootprintMetrics:
    if not graph.first_party_nodes:
        return FootprintMetrics(0, 0.0, 0)
    neighbours: dict[str, set[str]] = {}
    fp_degree = dict.fromkeys(graph.first_party_nodes, 0)
    for fp, tp in graph.edges:
        neighbours.setdefault(tp, set()).add(fp)
        fp_degree[fp] += 1
    ranked = sorted(neighbours, key=lambda tp: (-len(neighbours[tp]), tp))[:top]
    covered = set().union(*(neighbours[tp] for tp in ranked)) if ranked else set()
    return FootprintMetrics(
        n_third_parties=len(neighbours),
        mean_tp_per_fp=sum(fp_degree.values()) / len(fp_degree),
        top10_fp_coverage=len(covered),
    )


# -- file formats -------------------------------------------------------------------

def _csv_rows(text: str) -> list[list[str]]:
    return [row for row in csv.reader(io.StringIO(text)) if row and not row[0].startswith("#")]


def read_entity_map(adns_path: str | Path | None = None, cdn_path: str | Path | None = None) -> EntityMap:
    """Load ``domain,adns_domain`` pairs and a one-column CDN list; header rows are optional."""
    adns = {}
    if adns_path:
        for row in _csv_rows(Path(adns_path).read_text(encoding="utf-8")):
            if row[0].strip().lower() == "domain":
                continue
            if len(row) != 2:
                raise ValueError(f"{adns_path}: expected 2 columns, got {row}")
            adns[row[0].strip().lower()] = row[1].strip().lower()
    cdn = set()
    if cdn_path:
        for row in _csv_rows(Path(cdn_path).read_text(encoding="utf-8")):
            if row[0].strip().lower() != "domain":
                cdn.add(row[0].strip().lower())
    return EntityMap(adns, frozenset(cdn))


def write_entity_map(emap: EntityMap, adns_path: str | Path, cdn_path: str | Path) -> None:
    with open(adns_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["domain", "adns_domain"])
        w.writerows(sorted(emap.adns.items()))
    with open(cdn_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["domain"])
        w.writerows([d] for d in sorted(emap.cdn_domains))


def edge_list_csv(graph: FootprintGraph) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["first_party", "third_party"])
    w.writerows(sorted(graph.edges))
    return buf.getvalue()

"""Blocked-resource sets per technique and their overlap structure."""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence
from urllib.parse import urlsplit

from .crawl import CrawlRun
from .psl import PartyClass, SuffixRules, classify_party, default_rules, entity_of


class ResourceKind(str, enum.Enum):
    REQUESTS = "requests"
    DOMAINS = "domains"


@dataclass(frozen=True)
class BlockedSet:
    technique: str
    kind: ResourceKind
    members: frozenset[str]


def normalize_url(url: str) -> str:
    """Drop scheme, query and fragment; lowercase the host; keep port and path."""
    parts = urlsplit(url)
    host = (parts.hostname or "").lower()
    if parts.port is not None:
        host = f"{host}:{parts.port}"
    return host + (parts.path or "/")


def third_party_resources(runs: Iterable[CrawlRun], kind: ResourceKind, rules: SuffixRules, sites=None) -> set[str]:
    kind = ResourceKind(kind)
    out = set()
    for run in runs:
        for visit in run.visits:
            if sites is not None and visit.site not in sites:
                continue
            for req in visit.requests:
                if classify_party(req.host, visit.site_host, rules) is PartyClass.THIRD_PARTY:
                    out.add(normalize_url(req.url) if kind is ResourceKind.REQUESTS else entity_of(req.host, rules))
    return out


def blocked_set(
    bare: Sequence[CrawlRun],
    protected: Sequence[CrawlRun],
    kind: ResourceKind = ResourceKind.DOMAINS,
    rules: SuffixRules | None = None,
    technique: str | None = None,
) -> BlockedSet:
    """Third-party resources seen in any bare run and in no protected run.

    Only sites present on both sides are compared.
    """
    rules = rules or default_rules()
    bare_sites = {v.site for r in bare for v in r.visits}
    prot_sites = {v.site for r in protected for v in r.visits}
    common = bare_sites & prot_sites
    if not common:
        raise ValueError("bare and protected runs share no site")
    if technique is None:
        ids = {r.config_id for r in protected}
        technique = ids.pop() if len(ids) == 1 else "protected"
    members = third_party_resources(bare, kind, rules, common) - third_party_resources(protected, kind, rules, common)
    return BlockedSet(technique, ResourceKind(kind), frozenset(members))


@dataclass(frozen=True)
class OverlapMatrix:
    techniques: tuple[str, ...]
    sizes: dict[str, int]
    pairwise: dict[tuple[str, str], int]
    unique: dict[str, int]


def overlap_matrix(sets: Sequence[BlockedSet]) -> OverlapMatrix:
    if len(sets) < 2:
        raise ValueError("overlap_matrix needs at least two blocked sets")
    if len({s.kind for s in sets}) != 1:
        raise ValueError("blocked sets mix resource kinds")
    names = tuple(s.technique for s in sets)
    if len(set(names)) != len(names):
        raise ValueError("duplicate technique ids")
    by_name = {s.technique: s.members for s in sets}
    pairwise = {(a, b): len(by_name[a] & by_name[b]) for a in names for b in names}
    unique = {}
    for a in names:
        others = set().union(*(by_name[b] for b in names if b != a))
        unique[a] = len(by_name[a] - others)
    return OverlapMatrix(names, {a: len(by_name[a]) for a in names}, pairwise, unique)


@dataclass(frozen=True)
class OverlapCell:
    row: str
    col: str
    cell: str        # "size", "pairwise" or "unique"
    value: int
    side_length: float


def render_overlap_data(matrix: OverlapMatrix) -> list[OverlapCell]:
    """Cells for a square-area plot: side = sqrt(value / max value)."""
    cells = []
    for a in matrix.techniques:
        cells.append((a, a, "size", matrix.sizes[a]))
        for b in matrix.techniques:
            if a == b:
                cells.append((a, b, "unique", matrix.unique[a]))
            else:
                cells.append((a, b, "pairwise", matrix.pairwise[(a, b)]))
    top = max((v for *_, v in cells), default=0)
    return [
        OverlapCell(r, c, kind, v, math.sqrt(v) / math.sqrt(top) if top else 0.0)
        for r, c, kind, v in cells
    ]


def overlap_csv(matrix: OverlapMatrix) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "col", "cell", "value", "side_length"])
    for c in render_overlap_data(matrix):
        w.writerow([c.row, c.col, c.cell, c.value, f"{c.side_length:.6f}"])
    return buf.getvalue()

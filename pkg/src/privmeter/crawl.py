"""Crawl-log data model and its JSON-lines serialization.

A log file holds three record kinds, one JSON object per line::

    {"kind": "run_header", "schema_version": 1, "config_id": "bare", "run_index": 0}
    {"kind": "visit", "config_id": "bare", "run_index": 0, "sequence": 0,
     "site": "https://www.example.com/", "site_host": "www.example.com",
     "requests": [{"url": ..., "host": ..., "bytes": 512,
                   "resource_class": "script", "sets_cookie": false,
                   "reads_cookie": false}, ...],
     "html": {"doc_bytes": 1024, "image_refs": [[url, bytes], ...],
              "script_refs": [[url, bytes], ...]}}
    {"kind": "cookie", "config_id": "bare", "run_index": 0,
     "domain": "tracker.net", "name": "uid", "third_party_origin": true}

``visit`` and ``cookie`` records must follow the ``run_header`` of their run.
Redirects are whatever the producer logged: each logged request is one record.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable
from urllib.parse import urlsplit

SCHEMA_VERSION = 1


class CrawlLogError(ValueError):
    def __init__(self, lineno: int, field_name: str, message: str):
        super().__init__(f"line {lineno}: field {field_name!r}: {message}")
        self.lineno = lineno
        self.field = field_name


class ResourceClass(str, enum.Enum):
    DOCUMENT = "document"
    SCRIPT = "script"
    IMAGE = "image"
    STYLESHEET = "stylesheet"
    OTHER = "other"


def url_host(url: str) -> str:
    return (urlsplit(url).hostname or "").lower()


@dataclass(frozen=True)
class RequestRecord:
    url: str
    host: str
    bytes: int
    resource_class: ResourceClass = ResourceClass.OTHER
    sets_cookie: bool = False
    reads_cookie: bool = False

    @classmethod
    def from_url(cls, url: str, nbytes: int, resource_class=ResourceClass.OTHER, **flags) -> "RequestRecord":
        return cls(url, url_host(url), nbytes, ResourceClass(resource_class), **flags)


@dataclass(frozen=True)
class HtmlSummary:
    doc_bytes: int = 0
    image_refs: tuple[tuple[str, int], ...] = ()
    script_refs: tuple[tuple[str, int], ...] = ()


@dataclass(frozen=True)
class SiteVisit:
    site: str
    site_host: str
    requests: tuple[RequestRecord, ...]
    html: HtmlSummary = HtmlSummary()


@dataclass(frozen=True)
class CookieEntry:
    domain: str
    name: str
    third_party_origin: bool = False


@dataclass(frozen=True)
class CrawlRun:
    config_id: str
    run_index: int
    visits: tuple[SiteVisit, ...] = ()
    cookie_jar: frozenset[CookieEntry] = field(default_factory=frozenset)

    def with_config(self, config_id: str) -> "CrawlRun":
        return replace(self, config_id=config_id)

    @property
    def sites(self) -> list[str]:
        return [v.site for v in self.visits]


# -- validation ---------------------------------------------------------------

def _require(cond: bool, lineno: int, name: str, message: str) -> None:
    if not cond:
        raise CrawlLogError(lineno, name, message)


def _nonneg_int(value, lineno: int, name: str) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool), lineno, name, "must be an integer")
    _require(value >= 0, lineno, name, "must be non-negative")
    return value


def _string(value, lineno: int, name: str) -> str:
    _require(isinstance(value, str) and value != "", lineno, name, "must be a non-empty string")
    return value


def _flag(value, lineno: int, name: str) -> bool:
    _require(isinstance(value, bool), lineno, name, "must be a boolean")
    return value


def _get(obj: dict, key: str, lineno: int):
    _require(key in obj, lineno, key, "missing")
    return obj[key]


def _parse_request(obj, lineno: int) -> RequestRecord:
    _require(isinstance(obj, dict), lineno, "requests", "entries must be objects")
    url = _string(_get(obj, "url", lineno), lineno, "url")
    host = _string(_get(obj, "host", lineno), lineno, "host").lower()
    _require(url_host(url) == host, lineno, "host", f"{host!r} does not match url host {url_host(url)!r}")
    nbytes = _nonneg_int(_get(obj, "bytes", lineno), lineno, "bytes")
    try:
        rclass = ResourceClass(_get(obj, "resource_class", lineno))
    except ValueError:
        raise CrawlLogError(lineno, "resource_class", f"unknown class {obj['resource_class']!r}") from None
    return RequestRecord(
        url, host, nbytes, rclass,
        _flag(obj.get("sets_cookie", False), lineno, "sets_cookie"),
        _flag(obj.get("reads_cookie", False), lineno, "reads_cookie"),
    )


def _parse_refs(items, lineno: int, name: str) -> tuple[tuple[str, int], ...]:
    _require(isinstance(items, list), lineno, name, "must be a list")
    refs = []
    for item in items:
        _require(isinstance(item, list) and len(item) == 2, lineno, name, "entries must be [url, bytes] pairs")
        refs.append((_string(item[0], lineno, name), _nonneg_int(item[1], lineno, "bytes")))
    return tuple(refs)


def _parse_html(obj, lineno: int) -> HtmlSummary:
    _require(isinstance(obj, dict), lineno, "html", "must be an object")
    return HtmlSummary(
        _nonneg_int(obj.get("doc_bytes", 0), lineno, "doc_bytes"),
        _parse_refs(obj.get("image_refs", []), lineno, "image_refs"),
        _parse_refs(obj.get("script_refs", []), lineno, "script_refs"),
    )


# -- reading / writing ----------------------------------------------------------

def parse_crawl_log(lines: Iterable[str]) -> list[CrawlRun]:
    """Parse log lines into runs, ordered by first appearance of their header."""
    headers: dict[tuple[str, int], int] = {}
    visits: dict[tuple[str, int], list[SiteVisit]] = {}
    cookies: dict[tuple[str, int], dict[tuple[str, str], CookieEntry]] = {}
    seen_visits: set[tuple[str, int, str, int]] = set()

    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CrawlLogError(lineno, "<record>", f"invalid JSON: {exc.msg}") from None
        _require(isinstance(obj, dict), lineno, "<record>", "must be an object")
        kind = _get(obj, "kind", lineno)
        config_id = _string(_get(obj, "config_id", lineno), lineno, "config_id")
        run_index = _nonneg_int(_get(obj, "run_index", lineno), lineno, "run_index")
        key = (config_id, run_index)

        if kind == "run_header":
            version = _get(obj, "schema_version", lineno)
            _require(version == SCHEMA_VERSION, lineno, "schema_version", f"unsupported version {version!r}")
            _require(key not in headers, lineno, "run_index", f"duplicate run header for {key}")
            headers[key] = lineno
            visits[key] = []
            cookies[key] = {}
            continue

        _require(key in headers, lineno, "run_index", f"no preceding run_header for {key}")
        if kind == "visit":
            site = _string(_get(obj, "site", lineno), lineno, "site")
            site_host = _string(_get(obj, "site_host", lineno), lineno, "site_host").lower()
            _require(url_host(site) == site_host, lineno, "site_host", "does not match site url")
            seq = _nonneg_int(_get(obj, "sequence", lineno), lineno, "sequence")
            _require(seq == len(visits[key]), lineno, "sequence", f"expected {len(visits[key])}, got {seq}")
            vkey = (config_id, run_index, site, seq)
            _require(vkey not in seen_visits, lineno, "sequence", f"duplicate visit {vkey}")
            seen_visits.add(vkey)
            raw_requests = _get(obj, "requests", lineno)
            _require(isinstance(raw_requests, list), lineno, "requests", "must be a list")
            requests = tuple(_parse_request(r, lineno) for r in raw_requests)
            visits[key].append(SiteVisit(site, site_host, requests, _parse_html(obj.get("html", {}), lineno)))
        elif kind == "cookie":
            entry = CookieEntry(
                _string(_get(obj, "domain", lineno), lineno, "domain").lower(),
                _string(_get(obj, "name", lineno), lineno, "name"),
                _flag(obj.get("third_party_origin", False), lineno, "third_party_origin"),
            )
            ckey = (entry.domain, entry.name)
            _require(ckey not in cookies[key], lineno, "name", f"duplicate cookie {ckey}")
            cookies[key][ckey] = entry
        else:
            raise CrawlLogError(lineno, "kind", f"unknown record kind {kind!r}")

    return [
        CrawlRun(cid, idx, tuple(visits[(cid, idx)]), frozenset(cookies[(cid, idx)].values()))
        for cid, idx in headers
    ]


def read_crawl_log(path: str | Path) -> list[CrawlRun]:
    with open(path, encoding="utf-8") as fh:
        return parse_crawl_log(fh)


def _request_obj(r: RequestRecord) -> dict:
    return {
        "url": r.url, "host": r.host, "bytes": r.bytes,
        "resource_class": r.resource_class.value,
        "sets_cookie": r.sets_cookie, "reads_cookie": r.reads_cookie,
    }


def iter_log_lines(runs: Iterable[CrawlRun]) -> Iterable[str]:
    dumps = lambda obj: json.dumps(obj, ensure_ascii=False, separators=(",", ":"))  # noqa: E731
    for run in runs:
        base = {"config_id": run.config_id, "run_index": run.run_index}
        yield dumps({"kind": "run_header", "schema_version": SCHEMA_VERSION, **base})
        for seq, v in enumerate(run.visits):
            yield dumps({
                "kind": "visit", **base, "sequence": seq,
                "site": v.site, "site_host": v.site_host,
                "requests": [_request_obj(r) for r in v.requests],
                "html": {
                    "doc_bytes": v.html.doc_bytes,
                    "image_refs": [list(x) for x in v.html.image_refs],
                    "script_refs": [list(x) for x in v.html.script_refs],
                },
            })
        for c in sorted(run.cookie_jar, key=lambda c: (c.domain, c.name)):
            yield dumps({"kind": "cookie", **base, "domain": c.domain, "name": c.name,
                         "third_party_origin": c.third_party_origin})


def write_crawl_log(runs: Iterable[CrawlRun], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in iter_log_lines(runs):
            fh.write(line + "\n")


def runs_by_config(runs: Iterable[CrawlRun]) -> dict[str, list[CrawlRun]]:
    """Group runs by config_id (first-appearance order), each list sorted by run_index."""
    grouped: dict[str, list[CrawlRun]] = {}
    for run in runs:
        grouped.setdefault(run.config_id, []).append(run)
    return {cid: sorted(rs, key=lambda r: r.run_index) for cid, rs in grouped.items()}

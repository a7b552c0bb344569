"""Deterministic synthetic crawl corpora.

Each site carries a persistent part (document, first-party assets, CDN
assets, embedded trackers) that never changes between runs, plus a few ad
slots.  On every reload a slot either keeps its ad or switches to a brand new
one; the switching probability follows a :class:`ChurnSchedule` that drops
over the first reloads and then stays flat, so the number of distinct ads
seen grows fast at first and linearly afterwards.

Ad-slot requests are recognisable from their URL path
(``/slot/<site>/<slot>/<ad id>/...``), which is what lets
:func:`perturb_reload` operate on any run, generated or re-read from disk.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from urllib.parse import urlsplit

import numpy as np

from .crawl import CookieEntry, CrawlRun, HtmlSummary, RequestRecord, ResourceClass, SiteVisit
from .footprint import EntityMap

SITE_TLDS = ("com", "net", "org", "co.uk", "com.au", "co.jp", "de", "jp")
TRACKER_TLDS = ("com", "net", "io")
FIRST_PARTY_COOKIE = "sess"
THIRD_PARTY_COOKIE = "uid"

_SLOT_PATH = re.compile(r"^/slot/(\d+)/(\d+)/([^/]+)/")


@dataclass(frozen=True)
class ChurnSchedule:
    """Probability that an ad slot shows a new ad at reload k (k >= 1).

    Falls linearly from ``initial_rate`` at k=1 to ``tail_rate`` at k=``knee``
    and stays at ``tail_rate`` after that.
    """

    initial_rate: float = 0.9
    tail_rate: float = 0.3
    knee: int = 10

    def rate(self, reload_index: int) -> float:
        if reload_index < 1:
            raise ValueError("reload_index must be >= 1")
        if reload_index >= self.knee or self.knee <= 1:
            return self.tail_rate
        frac = (reload_index - 1) / (self.knee - 1)
        return self.initial_rate + (self.tail_rate - self.initial_rate) * frac

    @classmethod
    def none(cls) -> "ChurnSchedule":
        return cls(0.0, 0.0, 1)


@dataclass(frozen=True)
class EcosystemConfig:
    n_sites: int = 100
    n_trackers: int = 60
    prevalence_exponent: float = 1.5
    churn_new_ad_rate: ChurnSchedule = field(default_factory=ChurnSchedule)
    cookie_set_prob: float = 0.6
    seed: int = 0
    n_ad_networks: int = 12
    max_ad_slots: int = 4
    n_cdns: int = 5
    n_site_trackers: int = 3
    site_tracker_prob: float = 0.3

    def __post_init__(self):
        for name in ("cookie_set_prob", "site_tracker_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        c = self.churn_new_ad_rate
        if not (0.0 <= c.initial_rate <= 1.0 and 0.0 <= c.tail_rate <= 1.0):
            raise ValueError("churn rates must lie in [0, 1]")
        for name in ("n_sites", "n_trackers", "n_ad_networks", "max_ad_slots", "n_cdns", "n_site_trackers"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.prevalence_exponent <= 0:
            raise ValueError("prevalence_exponent must be > 0")
        if self.n_site_trackers > self.n_sites:
            raise ValueError("n_site_trackers cannot exceed n_sites")
        if self.max_ad_slots > 0 and self.n_ad_networks == 0:
            raise ValueError("ad slots need at least one ad network")

    @classmethod
    def from_dict(cls, d: dict) -> "EcosystemConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if isinstance(d.get("churn_new_ad_rate"), dict):
            d["churn_new_ad_rate"] = ChurnSchedule(**d["churn_new_ad_rate"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path: str | Path) -> EcosystemConfig:
    return EcosystemConfig.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# -- naming ------------------------------------------------------------------------

def site_domain(i: int) -> str:
    return f"site{i:04d}.{SITE_TLDS[i % len(SITE_TLDS)]}"


def tracker_domain(j: int) -> str:
    return f"tracker{j:03d}.{TRACKER_TLDS[j % len(TRACKER_TLDS)]}"


def adnet_domain(j: int) -> str:
    return f"adnet{j:02d}.com"


def cdn_domain(c: int) -> str:
    return f"cdnprovider{c}.net"


def _seed_words(seed: int) -> list[int]:
    s = int(seed) & (2**64 - 1)
    return [s & 0xFFFFFFFF, s >> 32]


def _rng(config: EcosystemConfig, *stream: int) -> np.random.Generator:
    return np.random.default_rng(_seed_words(config.seed) + list(stream))


def tracker_prevalence(config: EcosystemConfig) -> np.ndarray:
    """Inclusion probability per tracker rank: (rank + 1) ** -exponent."""
    return np.arange(1, config.n_trackers + 1, dtype=float) ** -config.prevalence_exponent


# -- ecosystem ---------------------------------------------------------------------

@dataclass(frozen=True)
class _Ecosystem:
    site_requests: tuple[tuple[RequestRecord, ...], ...]   # persistent, per site
    site_slots: tuple[int, ...]
    embedded: tuple[tuple[str, ...], ...]                  # tracker domains per site
    tracker_cookies: dict[str, bool]
    adnet_cookies: tuple[bool, ...]
    adnet_weights: np.ndarray


def _req(url: str, nbytes: int, rclass: ResourceClass, cookie: bool = False) -> RequestRecord:
    return RequestRecord.from_url(url, int(nbytes), rclass, sets_cookie=cookie, reads_cookie=cookie)


def _build_ecosystem(config: EcosystemConfig) -> _Ecosystem:
    rng = _rng(config, 0)
    prevalence = tracker_prevalence(config)
    tracker_cookies = {tracker_domain(j): bool(rng.random() < config.cookie_set_prob) for j in range(config.n_trackers)}
    for t in range(config.n_site_trackers):
        tracker_cookies[site_domain(t)] = True
    adnet_cookies = tuple(bool(rng.random() < config.cookie_set_prob) for _ in range(config.n_ad_networks))
    w = np.arange(1, config.n_ad_networks + 1, dtype=float) ** -1.0
    adnet_weights = w / w.sum() if w.size else w

    site_requests, site_slots, embedded = [], [], []
    for i in range(config.n_sites):
        dom = site_domain(i)
        reqs = [_req(f"https://www.{dom}/", rng.integers(20_000, 120_000), ResourceClass.DOCUMENT, cookie=rng.random() < 0.5)]
        for k in range(int(rng.integers(3, 12))):
            if rng.random() < 0.5:
                reqs.append(_req(f"https://static.{dom}/js/app{k}.js", rng.integers(2_000, 60_000), ResourceClass.SCRIPT))
            else:
                reqs.append(_req(f"https://static.{dom}/img/i{k}.png", rng.integers(1_000, 90_000), ResourceClass.IMAGE))
        reqs.append(_req(f"https://static.{dom}/css/main.css", rng.integers(1_000, 20_000), ResourceClass.STYLESHEET))
        if config.n_cdns:
            for c in sorted(set(rng.integers(0, config.n_cdns, size=int(rng.integers(1, 3))).tolist())):
                for k in range(int(rng.integers(1, 5))):
                    reqs.append(_req(f"https://s{i}.{cdn_domain(c)}/lib/{k}.js", rng.integers(5_000, 80_000), ResourceClass.SCRIPT))
        trackers = []
        included = rng.random(config.n_trackers) < prevalence
        for j in np.flatnonzero(included):
            tdom = tracker_domain(int(j))
            trackers.append(tdom)
            reqs.append(_req(f"https://js.{tdom}/t.js", rng.integers(3_000, 40_000), ResourceClass.SCRIPT, tracker_cookies[tdom]))
            for k in range(int(rng.integers(0, 3))):
                reqs.append(_req(f"https://px.{tdom}/p{k}.gif?s={i}", 43, ResourceClass.IMAGE))
        for t in range(config.n_site_trackers):
            if t != i and rng.random() < config.site_tracker_prob:
                tdom = site_domain(t)
                trackers.append(tdom)
                reqs.append(_req(f"https://widgets.{tdom}/w.js", rng.integers(5_000, 30_000), ResourceClass.SCRIPT, True))
        site_requests.append(tuple(reqs))
        embedded.append(tuple(trackers))
        site_slots.append(int(rng.integers(1, config.max_ad_slots + 1)) if config.max_ad_slots else 0)
    return _Ecosystem(tuple(site_requests), tuple(site_slots), tuple(embedded), tracker_cookies, adnet_cookies, adnet_weights)


def _render_ad(config: EcosystemConfig, eco: _Ecosystem, rng: np.random.Generator,
               site: int, slot: int, ad_id: str) -> list[RequestRecord]:
    net = int(rng.choice(config.n_ad_networks, p=eco.adnet_weights))
    dom = adnet_domain(net)
    base = f"/slot/{site}/{slot}/{ad_id}/"
    reqs = [_req(f"https://ads.{dom}{base}tag.js", rng.integers(2_000, 30_000), ResourceClass.SCRIPT, eco.adnet_cookies[net])]
    for k in range(int(rng.integers(1, 4))):
        reqs.append(_req(f"https://img.{dom}{base}c{k}.jpg", rng.integers(5_000, 150_000), ResourceClass.IMAGE))
    if config.n_trackers and rng.random() < 0.5:
        t = int(rng.integers(0, min(config.n_trackers, 10)))
        reqs.append(_req(f"https://px.{tracker_domain(t)}{base}imp.gif", 43, ResourceClass.IMAGE))
    return reqs


# -- run assembly --------------------------------------------------------------------

def host_registry(config: EcosystemConfig) -> dict[str, str]:
    """Registrable domain of every host the generator can emit (known by construction)."""
    reg = {}
    for i in range(config.n_sites):
        d = site_domain(i)
        for sub in ("www", "static", "widgets"):
            reg[f"{sub}.{d}"] = d
        for c in range(config.n_cdns):
            reg[f"s{i}.{cdn_domain(c)}"] = cdn_domain(c)
    for j in range(config.n_trackers):
        d = tracker_domain(j)
        reg[f"js.{d}"] = reg[f"px.{d}"] = d
    for j in range(config.n_ad_networks):
        d = adnet_domain(j)
        reg[f"ads.{d}"] = reg[f"img.{d}"] = d
    return reg


def _html_for(requests) -> HtmlSummary:
    doc = sum(r.bytes for r in requests if r.resource_class is ResourceClass.DOCUMENT)
    return HtmlSummary(
        doc,
        tuple((r.url, r.bytes) for r in requests if r.resource_class is ResourceClass.IMAGE),
        tuple((r.url, r.bytes) for r in requests if r.resource_class is ResourceClass.SCRIPT),
    )


def _cookie_jar(visits, registry: dict[str, str]) -> frozenset[CookieEntry]:
    jar: dict[tuple[str, str], CookieEntry] = {}
    for v in visits:
        site = registry[v.site_host]
        for r in v.requests:
            if r.sets_cookie:
                dom = registry[r.host]
                tp = dom != site
                name = THIRD_PARTY_COOKIE if tp else FIRST_PARTY_COOKIE
                jar.setdefault((dom, name), CookieEntry(dom, name, tp))
    return frozenset(jar.values())


def _initial_run(config: EcosystemConfig, eco: _Ecosystem, registry) -> CrawlRun:
    rng = _rng(config, 1, 0)
    visits = []
    for i, persistent in enumerate(eco.site_requests):
        reqs = list(persistent)
        for slot in range(eco.site_slots[i]):
            reqs.extend(_render_ad(config, eco, rng, i, slot, f"r0s{i}n{slot}"))
        dom = site_domain(i)
        visits.append(SiteVisit(f"https://www.{dom}/", f"www.{dom}", tuple(reqs), _html_for(reqs)))
    return CrawlRun("bare", 0, tuple(visits), _cookie_jar(visits, registry))


def slot_of(url: str) -> tuple[int, int] | None:
    m = _SLOT_PATH.match(urlsplit(url).path)
    return (int(m.group(1)), int(m.group(2))) if m else None


def perturb_reload(run: CrawlRun, config: EcosystemConfig, reload_index: int,
                   _eco: _Ecosystem | None = None) -> CrawlRun:
    """Apply one reload's ad churn to ``run``: each slot switches to a new ad with the scheduled probability.

    Persistent requests are left untouched; the run keeps its config_id and run_index.
    """
    rate = config.churn_new_ad_rate.rate(reload_index)
    if rate == 0.0:
        return run
    eco = _eco or _build_ecosystem(config)
    rng = _rng(config, 1, reload_index)
    registry = host_registry(config)
    visits = []
    for visit in run.visits:
        slots: dict[tuple[int, int], list[int]] = {}
        for pos, r in enumerate(visit.requests):
            key = slot_of(r.url)
            if key is not None:
                slots.setdefault(key, []).append(pos)
        replace_at: dict[int, list[RequestRecord]] = {}
        drop: set[int] = set()
        for (site, slot), positions in sorted(slots.items()):
            if rng.random() < rate:
                replace_at[positions[0]] = _render_ad(config, eco, rng, site, slot, f"r{reload_index}s{site}n{slot}")
                drop.update(positions)
        if not drop:
            visits.append(visit)
            continue
        reqs = []
        for pos, r in enumerate(visit.requests):
            if pos in replace_at:
                reqs.extend(replace_at[pos])
            elif pos not in drop:
                reqs.append(r)
        visits.append(SiteVisit(visit.site, visit.site_host, tuple(reqs), _html_for(reqs)))
    return CrawlRun(run.config_id, run.run_index, tuple(visits), _cookie_jar(visits, registry))


# -- ground truth --------------------------------------------------------------------

@dataclass
class GroundTruth:
    embedded_trackers: dict[str, tuple[str, ...]]          # site url -> persistent tracker domains
    tracker_cookies: dict[str, bool]                        # tracker / site-tracker domain -> sets & reads cookies
    adnet_cookies: dict[str, bool]
    expected: dict[tuple[int, str], dict[str, int]]         # (run_index, site) -> per-site metrics
    expected_cookies: dict[int, int]                        # run_index -> jar size
    entity_map: EntityMap
    registry: dict[str, str]


def _expected_visit(visit: SiteVisit, registry: dict[str, str]) -> dict[str, int]:
    site = registry[visit.site_host]
    fp = [r for r in visit.requests if registry[r.host] == site]
    tp = [r for r in visit.requests if registry[r.host] != site]
    imgs = [r.bytes for r in visit.requests if r.resource_class is ResourceClass.IMAGE]
    scripts = [r.bytes for r in visit.requests if r.resource_class is ResourceClass.SCRIPT]
    return {
        "fp_requests": len(fp),
        "tp_requests": len(tp),
        "tp_domains": len({registry[r.host] for r in tp}),
        "bytes_total": sum(r.bytes for r in visit.requests),
        "html_bytes": sum(r.bytes for r in visit.requests if r.resource_class is ResourceClass.DOCUMENT),
        "n_images": len(imgs),
        "n_scripts": len(scripts),
        "image_bytes": sum(imgs),
        "script_bytes": sum(scripts),
    }


def synthetic_entity_map(config: EcosystemConfig) -> EntityMap:
    """Trackers owned in groups of three; ad networks share one DNS operator; CDNs share another.

    Site-tracker domains are deliberately left unmapped.
    """
    adns = {tracker_domain(j): f"dnsowner{j // 3:02d}.net" for j in range(config.n_trackers)}
    adns.update({adnet_domain(j): "adnet-dns.com" for j in range(config.n_ad_networks)})
    cdns = [cdn_domain(c) for c in range(config.n_cdns)]
    adns.update({d: "cdn-dns.net" for d in cdns})
    return EntityMap(adns, frozenset(cdns))


def generate(config: EcosystemConfig, n_runs: int = 10, config_id: str = "bare") -> tuple[list[CrawlRun], GroundTruth]:
    """``n_runs`` stateful crawls of the same site list; run k is run k-1 after reload k."""
    if n_runs < 0:
        raise ValueError("n_runs must be >= 0")
    eco = _build_ecosystem(config)
    registry = host_registry(config)
    runs = []
    if n_runs:
        current = _initial_run(config, eco, registry)
        runs.append(current)
        for k in range(1, n_runs):
            current = perturb_reload(current, config, k, _eco=eco)
            current = CrawlRun(current.config_id, k, current.visits, current.cookie_jar)
            runs.append(current)
    runs = [CrawlRun(config_id, r.run_index, r.visits, r.cookie_jar) for r in runs]

    expected = {(r.run_index, v.site): _expected_visit(v, registry) for r in runs for v in r.visits}
    truth = GroundTruth(
        embedded_trackers={f"https://www.{site_domain(i)}/": eco.embedded[i] for i in range(config.n_sites)},
        tracker_cookies=dict(eco.tracker_cookies),
        adnet_cookies={adnet_domain(j): c for j, c in enumerate(eco.adnet_cookies)},
        expected=expected,
        expected_cookies={r.run_index: len(r.cookie_jar) for r in runs},
        entity_map=synthetic_entity_map(config),
        registry=registry,
    )
    return runs, truth

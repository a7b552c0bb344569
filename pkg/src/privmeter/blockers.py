"""Simulated protection techniques applied to bare crawl runs.

A blocker combines domain rule lists, an indiscriminate policy, a cookie
policy and an optional cookie-prevalence heuristic.  ``apply_blocker`` turns an
unprotected run into the run the protected browser would have logged, under
the assumption that every logged request is independent of the others.
"""

from __future__ import annotations

import copy
import enum
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

from .crawl import CookieEntry, CrawlRun, HtmlSummary, RequestRecord, ResourceClass, SiteVisit, url_host
from .psl import PartyClass, SuffixRules, classify_party, default_rules, entity_of

logger = logging.getLogger(__name__)

OPT_OUT_COOKIE_NAME = "optout"


class PartyScope(str, enum.Enum):
    THIRD_PARTY_ONLY = "third_party_only"
    ALL = "all"


class RuleKind(str, enum.Enum):
    DOMAIN = "domain"   # registrable domain of the request, or the exact host
    HOST = "host"       # exact host only
    SUFFIX = "suffix"   # host equals pattern or ends with "." + pattern


class Policy(str, enum.Enum):
    NO_OP = "NoOp"
    BLOCK_ALL_THIRD_PARTY = "BlockAllThirdParty"
    BLOCK_ALL_SCRIPTS = "BlockAllScripts"


class CookiePolicyKind(str, enum.Enum):
    ALLOW_ALL = "AllowAll"
    BLOCK_THIRD_PARTY = "BlockThirdParty"
    BLOCK_THIRD_PARTY_EXCEPT_VISITED = "BlockThirdPartyExceptVisited"
    OPT_OUT_COOKIES = "OptOutCookies"


@dataclass(frozen=True)
class Rule:
    kind: RuleKind
    pattern: str

    def matches(self, host: str, domain: str) -> bool:
        if self.kind is RuleKind.HOST:
            return host == self.pattern
        if self.kind is RuleKind.DOMAIN:
            return domain == self.pattern or host == self.pattern
        return host == self.pattern or host.endswith("." + self.pattern)


@dataclass(frozen=True)
class RuleList:
    name: str
    block_rules: tuple[Rule, ...] = ()
    exception_rules: tuple[Rule, ...] = ()
    party_scope: PartyScope = PartyScope.THIRD_PARTY_ONLY
    skipped: int = 0

    @classmethod
    def from_domains(cls, name: str, domains, exceptions=(), party_scope=PartyScope.THIRD_PARTY_ONLY) -> "RuleList":
        return cls(
            name,
            tuple(Rule(RuleKind.DOMAIN, d.lower()) for d in domains),
            tuple(Rule(RuleKind.DOMAIN, d.lower()) for d in exceptions),
            PartyScope(party_scope),
        )


@dataclass(frozen=True)
class CookiePolicy:
    kind: CookiePolicyKind = CookiePolicyKind.ALLOW_ALL
    optout_domains: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.optout_domains and self.kind is not CookiePolicyKind.OPT_OUT_COOKIES:
            raise ValueError("optout_domains is only meaningful for OptOutCookies")


@dataclass
class HeuristicBlockerState:
    """Per-domain set of distinct sites on which it read a cookie as a third party."""

    threshold: int = 3
    prevalence: dict[str, set[str]] = field(default_factory=dict)
    blocked: set[str] = field(default_factory=set)

    def observe(self, domain: str, site: str) -> None:
        sites = self.prevalence.setdefault(domain, set())
        sites.add(site)
        if len(sites) > self.threshold:
            self.blocked.add(domain)


@dataclass
class BlockerSpec:
    id: str
    rule_lists: tuple[RuleList, ...] = ()
    policy: Policy = Policy.NO_OP
    cookie_policy: CookiePolicy = CookiePolicy()
    heuristic: HeuristicBlockerState | None = None
    # training crawls over the first bare run before measuring (heuristic blockers only)
    training_passes: int = 0


class BlockerError(ValueError):
    pass


# -- rule lists -------------------------------------------------------------------

def parse_rule_list(text: str, name: str = "list", party_scope=PartyScope.THIRD_PARTY_ONLY) -> RuleList:
    """Parse the domain-level subset of AdBlock filter syntax.

    ``||host^`` gives a host-suffix rule, a bare ``domain`` matches that
    registrable domain (or exactly that host), ``@@`` marks exceptions and ``!``
    starts a comment.  Cosmetic (``##``) and option-qualified (``$``) rules are
    skipped and counted in ``RuleList.skipped``.
    """
    blocks, exceptions = [], []
    skipped = 0
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("!") or line.startswith("["):
            continue
        if "##" in line or "#@#" in line or "#?#" in line or "$" in line:
            skipped += 1
            continue
        target = blocks
        if line.startswith("@@"):
            target, line = exceptions, line[2:]
        if line.startswith("||"):
            pattern = line[2:]
            if pattern.endswith("^"):
                pattern = pattern[:-1]
            kind = RuleKind.SUFFIX
        else:
            pattern, kind = line, RuleKind.DOMAIN
        pattern = pattern.lower().strip(".")
        if not pattern or any(ch in pattern for ch in "/*^|: "):
            skipped += 1
            continue
        target.append(Rule(kind, pattern))
    if skipped:
        logger.warning("rule list %s: skipped %d unsupported lines", name, skipped)
    return RuleList(name, tuple(blocks), tuple(exceptions), PartyScope(party_scope), skipped)


# -- matching -----------------------------------------------------------------------

def _rule_block(blocker: BlockerSpec, host: str, domain: str, party: PartyClass) -> bool:
    hit = False
    for rl in blocker.rule_lists:
        if rl.party_scope is PartyScope.THIRD_PARTY_ONLY and party is not PartyClass.THIRD_PARTY:
            continue
        if any(r.matches(host, domain) for r in rl.block_rules):
            hit = True
            break
    if not hit:
        return False
    # exceptions are global across the blocker's lists, as when lists are merged in one extension
    return not any(r.matches(host, domain) for rl in blocker.rule_lists for r in rl.exception_rules)


def match_request(
    blocker: BlockerSpec,
    request: RequestRecord,
    party: PartyClass,
    rules: SuffixRules | None = None,
) -> bool:
    """True when ``blocker`` would suppress ``request``."""
    policy = blocker.policy
    if policy is Policy.BLOCK_ALL_THIRD_PARTY and party is PartyClass.THIRD_PARTY:
        return True
    if policy is Policy.BLOCK_ALL_SCRIPTS and request.resource_class is ResourceClass.SCRIPT:
        return True
    if not blocker.rule_lists and blocker.heuristic is None:
        return False
    domain = entity_of(request.host, rules or default_rules())
    if blocker.heuristic is not None and party is PartyClass.THIRD_PARTY and domain in blocker.heuristic.blocked:
        return True
    return _rule_block(blocker, request.host, domain, party)


# -- application --------------------------------------------------------------------

def _filter_refs(blocker, refs, rclass, site_host, rules, blocked_urls, kept_urls):
    out = []
    for url, nbytes in refs:
        if url in blocked_urls:
            continue
        if url not in kept_urls:
            req = RequestRecord(url, url_host(url), nbytes, rclass)
            if req.host and match_request(blocker, req, classify_party(req.host, site_host, rules), rules):
                continue
        out.append((url, nbytes))
    return tuple(out)


def _setter_index(run: CrawlRun, rules: SuffixRules):
    """Map (cookie domain, third_party_origin) -> indices of visits with a matching setting request."""
    index: dict[tuple[str, bool], list[int]] = {}
    for i, visit in enumerate(run.visits):
        for req in visit.requests:
            if req.sets_cookie:
                party = classify_party(req.host, visit.site_host, rules)
                key = (entity_of(req.host, rules), party is PartyClass.THIRD_PARTY)
                index.setdefault(key, []).append(i)
    return index


def _filter_cookies(blocker, raw, protected_visits, rules) -> frozenset[CookieEntry]:
    before = _setter_index(raw, rules)
    after = _setter_index(replace(raw, visits=tuple(protected_visits)), rules)
    jar = set()
    for c in raw.cookie_jar:
        key = (entity_of(c.domain.lstrip("."), rules), c.third_party_origin)
        # a cookie with no logged setter is kept; otherwise one setter must survive
        if key in before and key not in after:
            continue
        jar.add(c)

    kind = blocker.cookie_policy.kind
    if kind is CookiePolicyKind.BLOCK_THIRD_PARTY:
        jar = {c for c in jar if not c.third_party_origin}
    elif kind is CookiePolicyKind.BLOCK_THIRD_PARTY_EXCEPT_VISITED:
        first_seen: dict[str, int] = {}
        for i, v in enumerate(raw.visits):
            first_seen.setdefault(entity_of(v.site_host, rules), i)
        kept = set()
        for c in jar:
            if not c.third_party_origin:
                kept.add(c)
                continue
            dom = entity_of(c.domain.lstrip("."), rules)
            setters = after.get((dom, True)) or before.get((dom, True))
            set_at = setters[0] if setters else len(raw.visits)
            if dom in first_seen and first_seen[dom] < set_at:
                kept.add(c)
        jar = kept
    elif kind is CookiePolicyKind.OPT_OUT_COOKIES:
        optout = blocker.cookie_policy.optout_domains
        hit = {entity_of(c.domain.lstrip("."), rules) for c in jar} & optout
        jar = {c for c in jar if entity_of(c.domain.lstrip("."), rules) not in optout}
        jar |= {CookieEntry(d, OPT_OUT_COOKIE_NAME, True) for d in hit}
    return frozenset(jar)


def apply_blocker(blocker: BlockerSpec, raw: CrawlRun, rules: SuffixRules | None = None) -> CrawlRun:
    """Filter ``raw`` through ``blocker``; the result carries ``config_id = blocker.id``.

    A heuristic blocker's state is consulted and updated in place, visit by
    visit.  Newly crossed thresholds take effect from the next visit on.
    """
    rules = rules or default_rules()
    heur = blocker.heuristic
    visits = []
    for visit in raw.visits:
        site = entity_of(visit.site_host, rules)
        kept, blocked_urls, kept_urls = [], set(), set()
        newly_seen = []
        for req in visit.requests:
            party = classify_party(req.host, visit.site_host, rules)
            if match_request(blocker, req, party, rules):
                blocked_urls.add(req.url)
                continue
            kept.append(req)
            kept_urls.add(req.url)
            if heur is not None and req.reads_cookie and party is PartyClass.THIRD_PARTY:
                newly_seen.append(entity_of(req.host, rules))
        html = HtmlSummary(
            visit.html.doc_bytes,
            _filter_refs(blocker, visit.html.image_refs, ResourceClass.IMAGE, visit.site_host, rules, blocked_urls, kept_urls),
            _filter_refs(blocker, visit.html.script_refs, ResourceClass.SCRIPT, visit.site_host, rules, blocked_urls, kept_urls),
        )
        visits.append(SiteVisit(visit.site, visit.site_host, tuple(kept), html))
        for domain in newly_seen:
            heur.observe(domain, site)
    return CrawlRun(blocker.id, raw.run_index, tuple(visits), _filter_cookies(blocker, raw, visits, rules))


def train_heuristic(blocker: BlockerSpec, corpus: CrawlRun, passes: int, rules: SuffixRules | None = None) -> BlockerSpec:
    """Return a copy of ``blocker`` trained by ``passes`` sequential crawls of ``corpus``."""
    if blocker.heuristic is None:
        raise BlockerError(f"blocker {blocker.id!r} has no heuristic state to train")
    if passes < 0:
        raise BlockerError("passes must be >= 0")
    trained = copy.deepcopy(blocker)
    for _ in range(passes):
        apply_blocker(trained, corpus, rules)
    return trained


def is_heuristic(blocker: BlockerSpec) -> bool:
    return blocker.heuristic is not None


# -- roster files ---------------------------------------------------------------------

def blocker_from_record(rec: dict, base_dir: str | Path = ".") -> BlockerSpec:
    """Build a BlockerSpec from one roster record.

    Rule lists are given inline (``"text"`` or ``"domains"``) or by ``"path"``
    relative to ``base_dir``.
    """
    known = {"id", "rule_lists", "policy", "cookie_policy", "heuristic"}
    unknown = set(rec) - known
    if unknown:
        raise BlockerError(f"roster record {rec.get('id')!r}: unknown keys {sorted(unknown)}")
    if "id" not in rec:
        raise BlockerError("roster record without id")
    lists = []
    for i, rl in enumerate(rec.get("rule_lists", [])):
        name = rl.get("name", f"{rec['id']}-{i}")
        scope = PartyScope(rl.get("party_scope", PartyScope.THIRD_PARTY_ONLY))
        if "path" in rl:
            lists.append(parse_rule_list(Path(base_dir, rl["path"]).read_text(encoding="utf-8"), name, scope))
        elif "text" in rl:
            lists.append(parse_rule_list(rl["text"], name, scope))
        elif "domains" in rl:
            lists.append(RuleList.from_domains(name, rl["domains"], rl.get("exceptions", ()), scope))
        else:
            raise BlockerError(f"rule list {name!r} needs one of path, text, domains")
    cp = rec.get("cookie_policy", {})
    cookie_policy = CookiePolicy(
        CookiePolicyKind(cp.get("kind", CookiePolicyKind.ALLOW_ALL)),
        frozenset(d.lower() for d in cp.get("optout_domains", ())),
    )
    heuristic, passes = None, 0
    if rec.get("heuristic") is not None:
        h = rec["heuristic"]
        heuristic = HeuristicBlockerState(threshold=int(h.get("threshold", 3)))
        passes = int(h.get("training_passes", 1))
    return BlockerSpec(rec["id"], tuple(lists), Policy(rec.get("policy", Policy.NO_OP)), cookie_policy, heuristic, passes)


def load_roster(path_or_records, base_dir: str | Path | None = None) -> list[BlockerSpec]:
    """Read a JSON roster (a list of records) from a path, or take the records directly."""
    if isinstance(path_or_records, (str, Path)):
        path = Path(path_or_records)
        records = json.loads(path.read_text(encoding="utf-8"))
        base_dir = base_dir or path.parent
    else:
        records = path_or_records
    if not isinstance(records, list):
        raise BlockerError("roster must be a JSON list of blocker records")
    blockers = [blocker_from_record(r, base_dir or ".") for r in records]
    ids = [b.id for b in blockers]
    if len(set(ids)) != len(ids):
        raise BlockerError(f"duplicate blocker ids in roster: {ids}")
    return blockers


def simulate(blocker: BlockerSpec, bare_runs, rules: SuffixRules | None = None) -> list[CrawlRun]:
    """Protected runs for every bare run.

    Heuristic blockers are first trained on the first bare run, then keep
    learning across the measurement runs in run order.
    """
    bare_runs = sorted(bare_runs, key=lambda r: r.run_index)
    if blocker.heuristic is not None:
        work = train_heuristic(blocker, bare_runs[0], blocker.training_passes, rules) if bare_runs else blocker
        return [apply_blocker(work, run, rules) for run in bare_runs]
    return [apply_blocker(blocker, run, rules) for run in bare_runs]

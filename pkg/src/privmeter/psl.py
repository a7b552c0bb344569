"""Public Suffix List parsing, registrable-domain extraction, party classification.

Lookups follow the standard PSL algorithm: the longest matching rule wins,
``*.`` rules match any single label, ``!`` exception rules take precedence
over everything and strip one label off the matched suffix.  Hosts with no
matching rule fall back to the implicit ``*`` rule.
"""

from __future__ import annotations

import enum
import hashlib
import ipaddress
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

_WS = re.compile(r"\s")


class PSLParseError(ValueError):
    """Malformed line in a suffix list."""

    def __init__(self, lineno: int, line: str, reason: str):
        super().__init__(f"line {lineno}: {reason}: {line!r}")
        self.lineno = lineno
        self.line = line
        self.reason = reason


class PartyClass(enum.Enum):
    FIRST_PARTY = "first"
    THIRD_PARTY = "third"


@dataclass(frozen=True)
class SuffixRules:
    """Immutable set of PSL rules as written (``com``, ``*.ck``, ``!www.ck``)."""

    rules: frozenset[str]
    source_version: str = ""
    _normal: frozenset[str] = field(init=False, repr=False, compare=False)
    _wildcard: frozenset[str] = field(init=False, repr=False, compare=False)
    _exception: frozenset[str] = field(init=False, repr=False, compare=False)
    _cache: dict = field(init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        normal, wildcard, exception = set(), set(), set()
        for rule in self.rules:
            if rule.startswith("!"):
                exception.add(rule[1:])
            elif rule.startswith("*."):
                wildcard.add(rule[2:])
            else:
                normal.add(rule)
        object.__setattr__(self, "_normal", frozenset(normal))
        object.__setattr__(self, "_wildcard", frozenset(wildcard))
        object.__setattr__(self, "_exception", frozenset(exception))

    def __len__(self) -> int:
        return len(self.rules)

    def suffix_length(self, labels: list[str]) -> int:
        """Number of trailing labels forming the public suffix of ``labels``."""
        n = len(labels)
        for i in range(n):
            if ".".join(labels[i:]) in self._exception:
                return n - i - 1
        for i in range(n):
            if ".".join(labels[i:]) in self._normal:
                return n - i
            if i + 1 < n and ".".join(labels[i + 1:]) in self._wildcard:
                return n - i
        return 1


def _normalize_rule(raw: str, lineno: int) -> str:
    rule = raw.lower()
    prefix = ""
    if rule.startswith("!"):
        prefix, rule = "!", rule[1:]
    if prefix == "" and rule.startswith("*."):
        prefix, rule = "*.", rule[2:]
    rule = rule.lstrip(".") if prefix == "" else rule
    labels = rule.split(".")
    if any(label == "" for label in labels):
        raise PSLParseError(lineno, raw, "empty label")
    if any("*" in label or "!" in label for label in labels):
        raise PSLParseError(lineno, raw, "misplaced wildcard or exception marker")
    return prefix + rule


def parse_suffix_list(text: str) -> SuffixRules:
    """Parse PSL text.  ICANN/PRIVATE section markers are plain comments here."""
    rules = set()
    version = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("//"):
            if stripped.startswith("// VERSION:") and not version:
                version = stripped.split(":", 1)[1].strip()
            continue
        if _WS.search(stripped):
            raise PSLParseError(lineno, line, "embedded whitespace")
        rules.add(_normalize_rule(stripped, lineno))
    if not version:
        version = "sha256:" + hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
    return SuffixRules(frozenset(rules), version)


def load_suffix_list(path: str | Path) -> SuffixRules:
    return parse_suffix_list(Path(path).read_text(encoding="utf-8"))


@lru_cache(maxsize=1)
def default_rules() -> SuffixRules:
    """The PSL snapshot bundled with the package."""
    data = resources.files("privmeter").joinpath("data/public_suffix_list.dat")
    return parse_suffix_list(data.read_text(encoding="utf-8"))


def is_ip_literal(host: str) -> bool:
    try:
        ipaddress.ip_address(host.strip("[]"))
    except ValueError:
        return False
    return True


def normalize_host(host: str) -> str:
    if host is None or host == "":
        raise ValueError("empty host")
    host = host.lower()
    if host.endswith(".") and not host.endswith(".."):
        host = host[:-1]
    return host


def registrable_domain(host: str, rules: SuffixRules) -> str | None:
    """eTLD+1 of ``host``, or None for public suffixes, IP literals and malformed hosts.

    >>> registrable_domain("foo.example.co.uk", parse_suffix_list("co.uk"))
    'example.co.uk'
    """
    host = normalize_host(host)
    cached = rules._cache.get(host, False)
    if cached is not False:
        return cached
    result = None
    if not is_ip_literal(host):
        labels = host.split(".")
        if all(labels):
            n_suffix = rules.suffix_length(labels)
            if n_suffix < len(labels):
                result = ".".join(labels[-(n_suffix + 1):])
    rules._cache[host] = result
    return result


def entity_of(host: str, rules: SuffixRules) -> str:
    """Registrable domain, or the normalized host itself when none exists (IPs, bare suffixes)."""
    return registrable_domain(host, rules) or normalize_host(host)


def classify_party(request_host: str, site_host: str, rules: SuffixRules) -> PartyClass:
    if entity_of(request_host, rules) == entity_of(site_host, rules):
        return PartyClass.FIRST_PARTY
    return PartyClass.THIRD_PARTY

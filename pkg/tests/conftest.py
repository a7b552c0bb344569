from __future__ import annotations

import pytest

from privmeter.crawl import CookieEntry, CrawlRun, HtmlSummary, RequestRecord, ResourceClass, SiteVisit
from privmeter.psl import default_rules
from privmeter.synth import EcosystemConfig, generate


def req(url, nbytes=100, rclass=ResourceClass.OTHER, sets=False, reads=False):
    return RequestRecord.from_url(url, nbytes, rclass, sets_cookie=sets, reads_cookie=reads)


def visit(site_host, urls, html=None):
    """A visit whose request list is built from plain URLs (or ready RequestRecords)."""
    reqs = tuple(u if isinstance(u, RequestRecord) else req(u) for u in urls)
    return SiteVisit(f"https://{site_host}/", site_host, reqs, html or HtmlSummary(1000, (), ()))


def run(visits, config_id="bare", run_index=0, jar=()):
    return CrawlRun(config_id, run_index, tuple(visits), frozenset(jar))


@pytest.fixture(scope="session")
def rules():
    return default_rules()


@pytest.fixture(scope="session")
def default_corpus():
    return generate(EcosystemConfig(), 10)


@pytest.fixture(scope="session")
def small_corpus():
    return generate(EcosystemConfig(n_sites=20, n_trackers=15, seed=3), 4)


__all__ = ["CookieEntry", "req", "visit", "run"]


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

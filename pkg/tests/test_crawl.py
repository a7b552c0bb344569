from __future__ import annotations

import json

import pytest
from hypothesis import given, settings, strategies as st

from privmeter.crawl import (
    CookieEntry, CrawlLogError, CrawlRun, HtmlSummary, ResourceClass, SiteVisit,
    iter_log_lines, parse_crawl_log, read_crawl_log, runs_by_config, write_crawl_log,
)
from privmeter.synth import EcosystemConfig, generate

from conftest import req, run, visit


def _two_visit_run():
    v1 = visit("example.com", ["https://example.com/", "https://t.tracker.net/p.gif"])
    v2 = visit("other.org", [req("https://other.org/a.js", 50, ResourceClass.SCRIPT, sets=True)],
               HtmlSummary(300, (("https://other.org/i.png", 20),), (("https://other.org/a.js", 50),)))
    return run([v1, v2], jar=[CookieEntry("tracker.net", "uid", True), CookieEntry("other.org", "sess", False)])


def test_one_run_two_visits(tmp_path):
    p = tmp_path / "log.jsonl"
    write_crawl_log([_two_visit_run()], p)
    runs = read_crawl_log(p)
    assert len(runs) == 1 and len(runs[0].visits) == 2
    assert runs[0] == _two_visit_run()


def test_empty_file(tmp_path):
    p = tmp_path / "empty.jsonl"
    write_crawl_log([], p)
    assert p.read_text() == ""
    assert read_crawl_log(p) == []


def _lines(run_):
    return [json.loads(x) for x in iter_log_lines([run_])]


def _dump(objs):
    return [json.dumps(o) for o in objs]


def test_negative_bytes_names_field():
    objs = _lines(_two_visit_run())
    objs[1]["requests"][0]["bytes"] = -5
    with pytest.raises(CrawlLogError) as ei:
        parse_crawl_log(_dump(objs))
    assert ei.value.field == "bytes"
    assert "bytes" in str(ei.value) and "line 2" in str(ei.value)


def test_duplicate_visit_rejected():
    objs = _lines(_two_visit_run())
    objs.insert(2, dict(objs[1]))
    with pytest.raises(CrawlLogError, match="sequence"):
        parse_crawl_log(_dump(objs))


def test_duplicate_cookie_rejected():
    objs = _lines(_two_visit_run())
    objs.append(dict(objs[-1]))
    with pytest.raises(CrawlLogError, match="duplicate cookie"):
        parse_crawl_log(_dump(objs))


def test_missing_header_rejected():
    objs = _lines(_two_visit_run())[1:]
    with pytest.raises(CrawlLogError, match="run_header"):
        parse_crawl_log(_dump(objs))


@pytest.mark.parametrize("mutate,field", [
    (lambda o: o.update(kind="bogus"), "kind"),
    (lambda o: o["requests"][0].update(host="elsewhere.com"), "host"),
    (lambda o: o["requests"][0].update(resource_class="video"), "resource_class"),
    (lambda o: o.update(site_host="wrong.com"), "site_host"),
    (lambda o: o.pop("requests"), "requests"),
])
def test_schema_violations_name_field(mutate, field):
    objs = _lines(_two_visit_run())
    mutate(objs[1])
    with pytest.raises(CrawlLogError) as ei:
        parse_crawl_log(_dump(objs))
    assert ei.value.field == field


def test_bad_schema_version():
    objs = _lines(_two_visit_run())
    objs[0]["schema_version"] = 2
    with pytest.raises(CrawlLogError, match="schema_version"):
        parse_crawl_log(_dump(objs))


def test_visit_order_preserved():
    sites = [f"s{i}.com" for i in (5, 1, 4, 2, 3)]
    r = run([visit(s, [f"https://{s}/"]) for s in sites])
    back = parse_crawl_log(iter_log_lines([r]))[0]
    assert [v.site_host for v in back.visits] == sites


def test_runs_by_config_sorted():
    runs = [run([], "a", 2), run([], "b", 0), run([], "a", 0)]
    grouped = runs_by_config(runs)
    assert list(grouped) == ["a", "b"]
    assert [r.run_index for r in grouped["a"]] == [0, 2]


def test_large_synthetic_round_trip(tmp_path):
    runs, _ = generate(EcosystemConfig(n_sites=1000, seed=11), 2)
    p = tmp_path / "big.jsonl"
    write_crawl_log(runs, p)
    assert read_crawl_log(p) == runs


_host = st.from_regex(r"[a-z]{1,8}\.(com|net|org)", fullmatch=True)


@st.composite
def crawl_runs(draw):
    out = []
    for idx in range(draw(st.integers(0, 3))):
        visits = []
        for _ in range(draw(st.integers(0, 4))):
            site = draw(_host)
            urls = draw(st.lists(_host, max_size=5))
            reqs = tuple(req(f"https://{h}/x", draw(st.integers(0, 10**6)),
                             draw(st.sampled_from(list(ResourceClass))), draw(st.booleans()), draw(st.booleans()))
                         for h in urls)
            refs = tuple((f"https://{h}/i", draw(st.integers(0, 999))) for h in draw(st.lists(_host, max_size=2)))
            visits.append(SiteVisit(f"https://{site}/", site, reqs, HtmlSummary(draw(st.integers(0, 9999)), refs, ())))
        jar = {CookieEntry(d, n, t) for d, n, t in draw(st.lists(st.tuples(_host, st.sampled_from("ab"), st.booleans())))}
        uniq = {(c.domain, c.name): c for c in jar}
        out.append(CrawlRun(draw(st.sampled_from(["bare", "x"])) , idx, tuple(visits), frozenset(uniq.values())))
    # run_index unique per config
    seen, kept = set(), []
    for r in out:
        if (r.config_id, r.run_index) not in seen:
            seen.add((r.config_id, r.run_index))
            kept.append(r)
    return kept


@settings(max_examples=60, deadline=None)
@given(crawl_runs())
def test_round_trip_property(runs):
    assert parse_crawl_log(iter_log_lines(runs)) == runs

from __future__ import annotations

import csv
import json

import pytest

from privmeter.cli import main
from privmeter.crawl import read_crawl_log


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "cfg.json").write_text(json.dumps({"n_sites": 25, "n_trackers": 15}))
    (d / "roster.json").write_text(json.dumps([
        {"id": "rp", "policy": "BlockAllThirdParty"},
        {"id": "ads", "rule_lists": [{"text": "||adnet00.com^\n||adnet01.com^"}]},
        {"id": "trk", "rule_lists": [{"domains": ["tracker000.com"]}]},
    ]))
    assert main(["--seed", "4", "synth", "--config", str(d / "cfg.json"), "--runs", "4", "--out", str(d / "bare.jsonl"),
                 "--adns-out", str(d / "adns.csv"), "--cdn-out", str(d / "cdn.csv")]) == 0
    assert main(["simulate", "--bare", str(d / "bare.jsonl"), "--blockers", str(d / "roster.json"),
                 "--out", str(d / "prot.jsonl")]) == 0
    return d


def _rows(path):
    return list(csv.DictReader(open(path)))


def test_synth_output(workdir):
    runs = read_crawl_log(workdir / "bare.jsonl")
    assert len(runs) == 4 and len(runs[0].visits) == 25


def test_ingest(workdir, capsys):
    assert main(["ingest", "--in", str(workdir / "prot.jsonl"), "--validate"]) == 0
    out = capsys.readouterr().out
    assert "rp: 4 runs, 100 visits" in out and "(valid)" in out


def test_ingest_reports_errors(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"kind": "visit"}\n')
    assert main(["ingest", "--in", str(bad)]) == 1
    assert "privmeter: error: line 1" in capsys.readouterr().err


def test_metrics_and_rank(workdir, tmp_path):
    combined = tmp_path / "all.jsonl"
    combined.write_text((workdir / "bare.jsonl").read_text() + (workdir / "prot.jsonl").read_text())
    assert main(["metrics", "--in", str(combined), "--out", str(tmp_path / "m.csv")]) == 0
    assert main(["rank", "--metrics", str(tmp_path / "m.csv"), "--metric", "tp_requests",
                 "--out", str(tmp_path / "r.csv"), "--pvalues-out", str(tmp_path / "p.csv")]) == 0
    ranks = {r["config_id"]: int(r["rank"]) for r in _rows(tmp_path / "r.csv")}
    assert ranks["rp"] == 1 and ranks["bare"] == max(ranks.values())
    pv = _rows(tmp_path / "p.csv")
    assert [r["config_id"] for r in pv] == ["bare", "rp", "ads", "trk"]
    assert main(["rank", "--metrics", str(tmp_path / "m.csv"), "--metric", "cookies", "--alpha", "0.01",
                 "--out", str(tmp_path / "rc.csv")]) == 0


def test_stability(workdir, tmp_path):
    assert main(["stability", "--in", str(workdir / "bare.jsonl"), "--max-n", "4", "--out", str(tmp_path / "s.csv")]) == 0
    rows = _rows(tmp_path / "s.csv")
    assert [int(r["n"]) for r in rows] == [2, 3, 4]


def test_stability_too_few_runs(workdir, capsys):
    assert main(["stability", "--in", str(workdir / "bare.jsonl"), "--max-n", "9"]) == 1
    assert "max_n=9" in capsys.readouterr().err


def test_footprint(workdir, tmp_path, capsys):
    assert main(["footprint", "--in", str(workdir / "prot.jsonl"), "--method", "root", "--adns",
                 str(workdir / "adns.csv"), "--cdn", str(workdir / "cdn.csv"), "--config", "rp",
                 "--out", str(tmp_path / "edges.csv")]) == 0
    assert "rp: third_parties=0" in capsys.readouterr().out
    assert (tmp_path / "edges.csv").read_text() == "first_party,third_party\n"


def test_overlap(workdir, tmp_path):
    assert main(["overlap", "--bare", str(workdir / "bare.jsonl"), "--protected", str(workdir / "prot.jsonl"),
                 "--kind", "domains", "--out", str(tmp_path / "o.csv")]) == 0
    rows = {(r["row"], r["col"], r["cell"]): int(r["value"]) for r in _rows(tmp_path / "o.csv")}
    assert rows[("trk", "trk", "size")] == 1 and rows[("ads", "trk", "pairwise")] == 0


def test_report(tmp_path, capsys):
    (tmp_path / "m.json").write_text(json.dumps({
        "dataset": {"synth": {"n_sites": 15, "n_trackers": 10}, "runs": 3},
        "blockers": [{"id": "rp", "policy": "BlockAllThirdParty"}, {"id": "dnt"}]}))
    assert main(["report", "--manifest", str(tmp_path / "m.json"), "--out", str(tmp_path / "b"), "--seed", "2",
                 "--jobs", "2"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 8
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seed"] == 2


def test_report_missing_blockers(tmp_path, capsys):
    (tmp_path / "m.json").write_text(json.dumps({"dataset": {"synth": {}}}))
    assert main(["report", "--manifest", str(tmp_path / "m.json"), "--out", str(tmp_path / "b")]) == 1
    assert "blockers" in capsys.readouterr().err


def test_global_flags_after_subcommand(workdir, tmp_path):
    assert main(["synth", "--runs", "1", "--seed", "9", "--config", str(workdir / "cfg.json"),
                 "--out", str(tmp_path / "x.jsonl")]) == 0
    assert main(["--seed", "9", "synth", "--runs", "1", "--config", str(workdir / "cfg.json"),
                 "--out", str(tmp_path / "y.jsonl")]) == 0
    assert (tmp_path / "x.jsonl").read_bytes() == (tmp_path / "y.jsonl").read_bytes()


def test_custom_psl(workdir, tmp_path, capsys):
    (tmp_path / "tiny.dat").write_text("// tiny\ncom\nnet\nio\n")
    assert main(["--psl", str(tmp_path / "tiny.dat"), "footprint", "--in", str(workdir / "bare.jsonl")]) == 0
    assert "bare: third_parties=" in capsys.readouterr().out

"""Generate a synthetic bare corpus and look at what it contains.

Run with ``python demos/01_synthetic_corpus.py``.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

from privmeter.crawl import read_crawl_log, write_crawl_log
from privmeter.metrics import run_totals
from privmeter.psl import default_rules
from privmeter.synth import EcosystemConfig, generate, slot_of

rules = default_rules()
config = EcosystemConfig(n_sites=100, seed=1)
runs, truth = generate(config, n_runs=10)

first = runs[0].visits[0]
print(f"first site: {first.site}  ({len(first.requests)} requests)")
for r in first.requests[:8]:
    print(f"  {r.resource_class.value:<10} {r.bytes:>7}  {r.url}")

# ads are the only part of a page that changes between reloads
distinct_ads = set()
for run in runs:
    distinct_ads |= {r.url for v in run.visits for r in v.requests if slot_of(r.url)}
    totals = run_totals(run, rules).browsing
    print(f"run {run.run_index}: fp={totals.fp_requests} tp={totals.tp_requests} "
          f"tp_domains={totals.tp_domains} cookies={totals.cookies} distinct ad urls so far={len(distinct_ads)}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "bare.jsonl"
    write_crawl_log(runs, path)
    assert read_crawl_log(path) == runs
    print(f"log round-trips through {path.stat().st_size // 1024} KiB of JSON lines")

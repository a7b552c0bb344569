"""Run the whole pipeline from a manifest and print the summary it writes.

Run with ``python demos/06_full_report.py [out_dir]``.
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

from privmeter.report import ExperimentManifest, run_pipeline

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="privmeter-demo-"))
work.mkdir(parents=True, exist_ok=True)
(work / "ads.txt").write_text("||adnet00.com^\n||adnet01.com^\n||adnet02.com^\n")
(work / "roster.json").write_text(json.dumps([
    {"id": "requestpolicy", "policy": "BlockAllThirdParty"},
    {"id": "noscript", "policy": "BlockAllScripts"},
    {"id": "dnt", "policy": "NoOp"},
    {"id": "adblock", "rule_lists": [{"path": "ads.txt"}]},
    {"id": "badger", "heuristic": {"threshold": 3, "training_passes": 1}},
    {"id": "no-3p-cookies", "cookie_policy": {"kind": "BlockThirdParty"}},
], indent=1))
(work / "manifest.json").write_text(json.dumps({
    "dataset": {"synth": {"n_sites": 100}, "runs": 10},
    "blockers": "roster.json",
    "alpha": 0.05,
    "seed": 6,
    "footprint": {"method": "root"},
}, indent=1))

written = run_pipeline(ExperimentManifest.load(work / "manifest.json"), work / "report")
print((work / "report" / "summary.txt").read_text())
for name, path in written.items():
    print(f"{name:<14} {path.stat().st_size:>8} bytes")

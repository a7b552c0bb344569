"""How many crawls are enough?  Relative standard error of per-site means versus number of runs.

Run with ``python demos/04_stability.py``.
"""

from __future__ import annotations

from privmeter.metrics import visit_metrics
from privmeter.psl import default_rules
from privmeter.stats import stability_curve
from privmeter.synth import ChurnSchedule, EcosystemConfig, generate

rules = default_rules()


def tp_requests(v):
    return visit_metrics(v, rules).browsing.tp_requests


for label, schedule in [("default churn", ChurnSchedule()), ("heavy churn", ChurnSchedule(1.0, 0.8, 10)),
                        ("no churn", ChurnSchedule.none())]:
    runs, _ = generate(EcosystemConfig(seed=4, churn_new_ad_rate=schedule), 10)
    curve = stability_curve(runs, tp_requests, max_n=10)
    print(label)
    for p in curve.points:
        print(f"  n={p.n:>2}  median={p.median:.4f}  p5={p.p5:.4f}  p95={p.p95:.4f}")
    if curve.final_ecdf is not None:
        print(f"  share of sites under 5% RSE after 10 runs: {curve.final_ecdf(0.05):.2f}")

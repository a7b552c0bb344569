"""Simulate a few protection techniques on the same bare traffic and compare their totals.

Run with ``python demos/02_blockers.py``.
"""

from __future__ import annotations

from privmeter.blockers import (
    BlockerSpec, CookiePolicy, CookiePolicyKind, HeuristicBlockerState, Policy, parse_rule_list, simulate,
)
from privmeter.metrics import build_metric_table
from privmeter.psl import default_rules
from privmeter.report import synthetic_indices
from privmeter.synth import EcosystemConfig, generate

rules = default_rules()
bare, _ = generate(EcosystemConfig(seed=2), 10)

ad_list = parse_rule_list("""
! a tiny ad list
||adnet00.com^
||adnet01.com^
||adnet02.com^
@@||img.adnet02.com^
##.sidebar-ad
""", name="ads")
print(f"ad list: {len(ad_list.block_rules)} block rules, {len(ad_list.exception_rules)} exception, "
      f"{ad_list.skipped} skipped")

blockers = [
    BlockerSpec("requestpolicy", policy=Policy.BLOCK_ALL_THIRD_PARTY),
    BlockerSpec("noscript", policy=Policy.BLOCK_ALL_SCRIPTS),
    BlockerSpec("adblock", rule_lists=(ad_list,)),
    BlockerSpec("badger", heuristic=HeuristicBlockerState(threshold=3), training_passes=1),
    BlockerSpec("no-3p-cookies", cookie_policy=CookiePolicy(CookiePolicyKind.BLOCK_THIRD_PARTY)),
]
runs = list(bare)
for b in blockers:
    runs += simulate(b, bare, rules)

table = build_metric_table(runs, rules)
print(f"\n{'config':<15}{'fp':>8}{'tp':>8}{'tp_dom':>8}{'cookies':>9}{'images':>8}  protection  quality")
for idx in synthetic_indices(table, "bare"):
    t = table.config_totals(idx.config_id)
    print(f"{idx.config_id:<15}{t['fp_requests']:>8.0f}{t['tp_requests']:>8.0f}{t['tp_domains']:>8.1f}"
          f"{t['cookies']:>9.1f}{t['n_images']:>8.0f}  {idx.protection_index:>10.3f}  {idx.quality_index:>7.3f}")

"""Rank techniques by comparing the ECDFs of their per-site means with KS tests.

Run with ``python demos/03_ks_ranking.py``.
"""

from __future__ import annotations

from privmeter.blockers import BlockerSpec, Policy, RuleList, simulate
from privmeter.metrics import per_site_means
from privmeter.psl import default_rules
from privmeter.stats import Direction, ecdf, ks_rank, ks_two_sample
from privmeter.synth import EcosystemConfig, generate, tracker_domain

rules = default_rules()
bare, _ = generate(EcosystemConfig(seed=3), 10)

configs = {
    "bare": bare,
    "short-list": simulate(BlockerSpec("short-list", (RuleList.from_domains("s", [tracker_domain(0)]),)), bare, rules),
    "long-list": simulate(
        BlockerSpec("long-list", (RuleList.from_domains("l", [tracker_domain(j) for j in range(15)]),)), bare, rules),
    "requestpolicy": simulate(BlockerSpec("requestpolicy", policy=Policy.BLOCK_ALL_THIRD_PARTY), bare, rules),
}
per_site = {cid: {s: m.means["tp_requests"] for s, m in per_site_means(rs, rules).items()}
            for cid, rs in configs.items()}

f_bare = ecdf(list(per_site["bare"].values()))
f_long = ecdf(list(per_site["long-list"].values()))
for x in (5, 10, 20, 40):
    print(f"share of sites with <= {x:>2} third-party requests: bare {f_bare(x):.2f}  long-list {f_long(x):.2f}")

res = ks_two_sample(list(per_site["bare"].values()), list(per_site["short-list"].values()))
print(f"\nbare vs short-list: D={res.d_statistic:.3f} p={res.p_value:.3g} same={res.same_distribution}")

ranking = ks_rank(per_site, alpha=0.05, direction=Direction.LOWER_IS_BETTER)
print("\nrank  config          mean tp/site")
for cid in sorted(ranking.ranks, key=lambda c: (ranking.ranks[c], ranking.means[c])):
    print(f"{ranking.ranks[cid]:>4}  {cid:<15} {ranking.means[cid]:8.2f}")

"""Privacy footprint graphs and the overlap of what different techniques block.

Run with ``python demos/05_footprint_and_overlap.py``.
"""

from __future__ import annotations

from privmeter.blockers import BlockerSpec, HeuristicBlockerState, RuleList, parse_rule_list, simulate
from privmeter.footprint import GroupingMethod, build_footprint, footprint_metrics
from privmeter.overlap import ResourceKind, blocked_set, overlap_matrix, render_overlap_data
from privmeter.psl import default_rules
from privmeter.synth import EcosystemConfig, adnet_domain, generate, tracker_domain

rules = default_rules()
bare, truth = generate(EcosystemConfig(seed=5), 10)

for method in GroupingMethod:
    g = build_footprint(bare, rules, truth.entity_map, method)
    m = footprint_metrics(g)
    print(f"{method.value:<9} third parties={m.n_third_parties:>3}  mean per first party={m.mean_tp_per_fp:5.2f}  "
          f"top-10 coverage={m.top10_fp_coverage}  unmapped={g.fallback_rate:.1%}")

techniques = [
    BlockerSpec("ads", (parse_rule_list("\n".join(f"||{adnet_domain(j)}^" for j in range(8))),)),
    BlockerSpec("trackers", (RuleList.from_domains("t", [tracker_domain(j) for j in range(10)]),)),
    BlockerSpec("badger", heuristic=HeuristicBlockerState(3), training_passes=1),
]
sets = [blocked_set(bare, simulate(b, bare, rules), ResourceKind.DOMAINS, rules) for b in techniques]
matrix = overlap_matrix(sets)
print("\nblocked domains")
for a in matrix.techniques:
    row = "  ".join(f"{matrix.pairwise[(a, b)]:>4}" for b in matrix.techniques)
    print(f"  {a:<9} size={matrix.sizes[a]:>3} unique={matrix.unique[a]:>3} | {row}")
largest = max(render_overlap_data(matrix), key=lambda c: (c.side_length, c.row, c.col))
print(f"largest square: {largest.row}/{largest.col} ({largest.cell}) value={largest.value}")

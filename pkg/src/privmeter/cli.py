"""``privmeter`` command line."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import __version__
from .blockers import load_roster
from .crawl import CrawlLogError, read_crawl_log, runs_by_config, write_crawl_log
from .footprint import GroupingMethod, build_footprint, edge_list_csv, footprint_metrics, read_entity_map, write_entity_map
from .metrics import SITE_METRICS, build_metric_table, read_metric_csv, visit_metrics, write_metric_csv
from .overlap import ResourceKind, blocked_set, overlap_csv, overlap_matrix
from .psl import default_rules, load_suffix_list
from .report import ExperimentManifest, PipelineError, run_pipeline, simulate_all
from .stats import DEFAULT_ALPHA, Direction, ks_rank, pairwise_pvalues, stability_curve
from .synth import EcosystemConfig, generate, load_config

log = logging.getLogger("privmeter")


def _rules(args):
    return load_suffix_list(args.psl) if args.psl else default_rules()


def _write_rows(path, header, rows):
    out = open(path, "w", newline="", encoding="utf-8") if path else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if path:
            out.close()


def cmd_synth(args):
    cfg = load_config(args.config) if args.config else EcosystemConfig()
    if args.seed is not None:
        cfg = EcosystemConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    runs, truth = generate(cfg, args.runs)
    write_crawl_log(runs, args.out)
    if args.adns_out and args.cdn_out:
        write_entity_map(truth.entity_map, args.adns_out, args.cdn_out)
    log.info("wrote %d runs x %d sites to %s", len(runs), cfg.n_sites, args.out)


def cmd_ingest(args):
    runs = read_crawl_log(args.input)
    n_visits = sum(len(r.visits) for r in runs)
    n_req = sum(len(v.requests) for r in runs for v in r.visits)
    for cid, rs in runs_by_config(runs).items():
        print(f"{cid}: {len(rs)} runs, {sum(len(r.visits) for r in rs)} visits")
    print(f"total: {len(runs)} runs, {n_visits} visits, {n_req} requests" + (" (valid)" if args.validate else ""))


def cmd_simulate(args):
    rules = _rules(args)
    bare = read_crawl_log(args.bare)
    blockers = load_roster(args.blockers)
    protected = simulate_all(blockers, bare, rules, args.jobs)
    write_crawl_log([r for runs in protected.values() for r in runs], args.out)


def cmd_metrics(args):
    table = build_metric_table(read_crawl_log(args.input), _rules(args))
    write_metric_csv(table, args.out)


def cmd_rank(args):
    table = read_metric_csv(args.metrics)
    configs = table.config_ids
    if args.per_run or args.metric not in SITE_METRICS:
        inputs = {c: {str(i): float(v) for i, v in enumerate(table.run_values(c, args.metric))} for c in configs}
    else:
        inputs = {c: table.site_means(c, args.metric) for c in configs}
    ra = ks_rank(inputs, args.alpha, Direction(args.direction), args.linkage)
    _write_rows(args.out, ("config_id", "mean", "std", "rank"),
                [(c, ra.means[c], ra.stds[c], ra.ranks[c]) for g in ra.groups for c in g])
    if args.pvalues_out:
        pv = pairwise_pvalues(inputs)
        _write_rows(args.pvalues_out, ("config_id",) + tuple(configs),
                    [(a,) + tuple(pv[(a, b)] for b in configs) for a in configs])


def cmd_stability(args):
    rules = _rules(args)
    runs = runs_by_config(read_crawl_log(args.input))
    cid = args.config or next(iter(runs))
    curve = stability_curve(runs[cid], lambda v: visit_metrics(v, rules).as_dict()[args.metric], args.max_n)
    _write_rows(args.out, ("n", "median", "p5", "p95", "n_sites"),
                [(p.n, p.median, p.p5, p.p95, p.n_sites) for p in curve.points])


def cmd_footprint(args):
    rules = _rules(args)
    emap = read_entity_map(args.adns, args.cdn)
    for cid, runs in runs_by_config(read_crawl_log(args.input)).items():
        if args.config and cid != args.config:
            continue
        g = build_footprint(runs, rules, emap, GroupingMethod(args.method))
        m = footprint_metrics(g)
        print(f"{cid}: third_parties={m.n_third_parties} mean_tp_per_fp={m.mean_tp_per_fp:.4f} "
              f"top10_fp_coverage={m.top10_fp_coverage} adns_fallback_rate={g.fallback_rate:.3f}")
        if args.out:
            out = Path(args.out)
            if not args.config:
                out = out.with_name(f"{out.stem}.{cid}{out.suffix}")
            out.write_text(edge_list_csv(g), encoding="utf-8")


def cmd_overlap(args):
    rules = _rules(args)
    bare = read_crawl_log(args.bare)
    sets = []
    for path in args.protected:
        for cid, runs in runs_by_config(read_crawl_log(path)).items():
            sets.append(blocked_set(bare, runs, ResourceKind(args.kind), rules, technique=cid))
    text = overlap_csv(overlap_matrix(sets))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_report(args):
    manifest = ExperimentManifest.load(args.manifest)
    if args.seed is not None:
        manifest.seed = args.seed
    if args.alpha is not None:
        manifest.alpha = args.alpha
    if args.psl:
        manifest.psl = str(Path(args.psl).resolve())
    written = run_pipeline(manifest, args.out, jobs=args.jobs)
    for path in written.values():
        print(path)


def build_parser() -> argparse.ArgumentParser:
    def global_flags(suppress: bool) -> argparse.ArgumentParser:
        # given before or after the subcommand; SUPPRESS keeps the subparser from resetting them
        dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--psl", default=dflt(None), help="public suffix list file (default: bundled snapshot)")
        g.add_argument("--seed", type=int, default=dflt(None))
        g.add_argument("--alpha", type=float, default=dflt(None), help=f"KS significance level (default {DEFAULT_ALPHA})")
        g.add_argument("--jobs", type=int, default=dflt(1))
        g.add_argument("-v", "--verbose", action="store_true", default=dflt(False))
        return g

    common = global_flags(suppress=True)
    p = argparse.ArgumentParser(prog="privmeter", parents=[global_flags(suppress=False)])
    p.add_argument("--version", action="version", version=f"privmeter {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic bare corpus")
    s.add_argument("--config")
    s.add_argument("--runs", type=int, default=10)
    s.add_argument("--out", required=True)
    s.add_argument("--adns-out")
    s.add_argument("--cdn-out")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("ingest", parents=[common], help="read and validate a crawl log")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--validate", action="store_true")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("simulate", parents=[common], help="apply a blocker roster to a bare log")
    s.add_argument("--bare", required=True)
    s.add_argument("--blockers", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("metrics", parents=[common], help="compute the metric table")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("rank", parents=[common], help="KS-based ranking of configurations")
    s.add_argument("--metrics", required=True)
    s.add_argument("--metric", default="tp_requests")
    s.add_argument("--direction", choices=[d.value for d in Direction], default=Direction.LOWER_IS_BETTER.value)
    s.add_argument("--linkage", choices=["anchor", "complete"], default="anchor")
    s.add_argument("--per-run", action="store_true", help="compare per-run totals instead of per-site means")
    s.add_argument("--out")
    s.add_argument("--pvalues-out")
    s.set_defaults(func=cmd_rank)

    s = sub.add_parser("stability", parents=[common], help="RSE of per-site means versus number of runs")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--config")
    s.add_argument("--metric", default="tp_requests", choices=SITE_METRICS)
    s.add_argument("--max-n", type=int, default=10)
    s.add_argument("--out")
    s.set_defaults(func=cmd_stability)

    s = sub.add_parser("footprint", parents=[common], help="privacy footprint metrics and edge list")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--method", choices=[m.value for m in GroupingMethod], default="root")
    s.add_argument("--adns")
    s.add_argument("--cdn")
    s.add_argument("--config")
    s.add_argument("--out")
    s.set_defaults(func=cmd_footprint)

    s = sub.add_parser("overlap", parents=[common], help="blocked-resource overlap matrix")
    s.add_argument("--bare", required=True)
    s.add_argument("--protected", nargs="+", required=True)
    s.add_argument("--kind", choices=[k.value for k in ResourceKind], default="domains")
    s.add_argument("--out")
    s.set_defaults(func=cmd_overlap)

    s = sub.add_parser("report", parents=[common], help="run the full pipeline from a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.alpha is None and args.command != "report":
        args.alpha = DEFAULT_ALPHA
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (CrawlLogError, PipelineError, ValueError, OSError) as exc:
        print(f"privmeter: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

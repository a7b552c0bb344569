"""Synthetic indices and the end-to-end report pipeline.

A manifest (JSON) drives the pipeline::

    {
      "dataset": {"synth": {...EcosystemConfig fields...}, "runs": 10},   # or {"bare_log": "bare.jsonl"}
      "blockers": "roster.json",                                          # or an inline list of records
      "alpha": 0.05,
      "metrics": ["fp_requests", "tp_requests", "tp_domains", "cookies"],
      "seed": 0,
      "bare_id": "bare",
      "footprint": {"method": "root", "adns": "adns.csv", "cdn": "cdn.csv"},
      "overlap": {"techniques": ["ublock", "ghostery", "badger"]},
      "psl": "public_suffix_list.dat"
    }

Relative paths are resolved against the manifest's directory.  The bundle
written by :func:`run_pipeline` holds six CSV reports (metrics, ranks,
pvalues, footprint, overlap, indices) plus ``summary.txt`` and
``manifest.json``; every file starts with a comment line carrying the
manifest hash.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .blockers import BlockerSpec, Policy, load_roster, simulate
from .crawl import CrawlRun, read_crawl_log
from .footprint import EntityMap, GroupingMethod, build_footprint, footprint_metrics, read_entity_map
from .metrics import (
    HTML_METRICS, SITE_METRICS, UNSTABLE_METRICS, MetricTable, build_metric_table, metric_table_to_csv,
)
from .overlap import ResourceKind, blocked_set, overlap_matrix, render_overlap_data
from .psl import SuffixRules, default_rules, load_suffix_list
from .stats import DEFAULT_ALPHA, Direction, ks_rank, pairwise_pvalues
from .synth import EcosystemConfig, generate

logger = logging.getLogger(__name__)

PROTECTION_METRICS = ("fp_requests", "tp_requests", "tp_domains", "cookies")
DEFAULT_RANK_METRICS = PROTECTION_METRICS + HTML_METRICS
# fewer requests, domains and cookies mean better protection; less HTML content means worse quality
HIGHER_IS_BETTER = frozenset({"fp_requests"}) | frozenset(HTML_METRICS)
REPORT_FILES = ("metrics.csv", "ranks.csv", "pvalues.csv", "footprint.csv", "overlap.csv", "indices.csv")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException | str):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class SyntheticIndex:
    config_id: str
    protection_index: float
    quality_index: float


def synthetic_indices(
    table: MetricTable,
    bare_id: str = "bare",
    browsing_metrics: Sequence[str] = PROTECTION_METRICS,
    html_metrics: Sequence[str] = HTML_METRICS,
) -> list[SyntheticIndex]:
    """Mean of per-metric total ratios (config / bare) for each configuration."""
    if bare_id not in table.config_ids:
        raise KeyError(f"bare configuration {bare_id!r} not in metric table")
    used = [m for m in browsing_metrics if m not in UNSTABLE_METRICS]
    bare = table.config_totals(bare_id)
    for m in list(used) + list(html_metrics):
        if bare[m] == 0:
            raise ValueError(f"bare total for metric {m!r} is zero; cannot normalize")
    out = []
    for cid in table.config_ids:
        tot = table.config_totals(cid)
        prot = sum(tot[m] / bare[m] for m in used) / len(used) if used else float("nan")
        qual = sum(tot[m] / bare[m] for m in html_metrics) / len(html_metrics) if html_metrics else float("nan")
        out.append(SyntheticIndex(cid, prot, qual))
    return out


# -- manifest -----------------------------------------------------------------------

@dataclass
class ExperimentManifest:
    dataset: dict
    blockers: object
    alpha: float = DEFAULT_ALPHA
    metrics: tuple[str, ...] = DEFAULT_RANK_METRICS
    seed: int | None = None
    bare_id: str = "bare"
    footprint: dict | None = None
    overlap: dict | None = None
    psl: str | None = None
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path = ".") -> "ExperimentManifest":
        for key in ("dataset", "blockers"):
            if key not in d or d[key] in (None, "", []):
                raise PipelineError("manifest", f"missing required field {key!r}")
        known = {"dataset", "blockers", "alpha", "metrics", "seed", "bare_id", "footprint", "overlap", "psl",
                 "toolkit_version"}
        unknown = set(d) - known
        if unknown:
            raise PipelineError("manifest", f"unknown fields {sorted(unknown)}")
        return cls(
            dataset=d["dataset"], blockers=d["blockers"], alpha=float(d.get("alpha", DEFAULT_ALPHA)),
            metrics=tuple(d.get("metrics", DEFAULT_RANK_METRICS)), seed=d.get("seed"),
            bare_id=d.get("bare_id", "bare"), footprint=d.get("footprint"), overlap=d.get("overlap"),
            psl=d.get("psl"), base_dir=Path(base_dir),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentManifest":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), path.parent)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset, "blockers": self.blockers, "alpha": self.alpha,
            "metrics": list(self.metrics), "seed": self.seed, "bare_id": self.bare_id,
            "footprint": self.footprint, "overlap": self.overlap, "psl": self.psl,
            "toolkit_version": __version__,
        }

    def _referenced_files(self) -> list[Path]:
        paths = []
        if "bare_log" in self.dataset:
            paths.append(self.dataset["bare_log"])
        if isinstance(self.blockers, str):
            paths.append(self.blockers)
            roster = json.loads((self.base_dir / self.blockers).read_text(encoding="utf-8"))
            for rec in roster:
                for rl in rec.get("rule_lists", []):
                    if "path" in rl:
                        paths.append(str(Path(self.blockers).parent / rl["path"]))
        else:
            for rec in self.blockers:
                for rl in rec.get("rule_lists", []):
                    if "path" in rl:
                        paths.append(rl["path"])
        for key in ("adns", "cdn"):
            if self.footprint and self.footprint.get(key):
                paths.append(self.footprint[key])
        if self.psl:
            paths.append(self.psl)
        return [self.base_dir / p for p in paths]

    def digest(self) -> str:
        """Hash of the manifest plus the contents of every file it references."""
        h = hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode())
        for p in self._referenced_files():
            h.update(str(p.name).encode())
            h.update(p.read_bytes())
        return h.hexdigest()


# -- pipeline ------------------------------------------------------------------------

def _fmt(x) -> str:
    return format(x, ".10g") if isinstance(x, float) else str(x)


def _csv(header: Sequence[str], rows, digest: str) -> str:
    buf = io.StringIO()
    buf.write(f"# manifest_sha256={digest} privmeter={__version__}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _simulate_one(args):
    blocker, bare, rules = args
    return simulate(blocker, bare, rules)


def simulate_all(blockers: Sequence[BlockerSpec], bare: Sequence[CrawlRun], rules: SuffixRules, jobs: int = 1):
    tasks = [(b, list(bare), rules) for b in blockers]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_simulate_one, tasks))
    else:
        results = [_simulate_one(t) for t in tasks]
    return dict(zip((b.id for b in blockers), results))


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        logger.info("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, exc) from exc
        return False


def _rank_inputs(table: MetricTable, configs: Sequence[str], metric: str) -> dict[str, dict[str, float]]:
    if metric in SITE_METRICS:
        return {cid: table.site_means(cid, metric) for cid in configs}
    # run-level metric: compare the per-run values instead of per-site means
    return {cid: {str(i): float(v) for i, v in enumerate(table.run_values(cid, metric))} for cid in configs}


def run_pipeline(manifest: ExperimentManifest, out_dir: str | Path, jobs: int = 1) -> dict[str, Path]:
    """Run every stage and write the report bundle into ``out_dir``.

    Outputs are assembled in a scratch directory and moved into place only
    when every stage succeeded.
    """
    out_dir = Path(out_dir)
    with _Stage("manifest"):
        digest = manifest.digest()
        rules = load_suffix_list(manifest.base_dir / manifest.psl) if manifest.psl else default_rules()
    files: dict[str, str] = {}

    with _Stage("dataset"):
        emap = EntityMap()
        if "synth" in manifest.dataset:
            cfg = dict(manifest.dataset["synth"])
            if manifest.seed is not None:
                cfg["seed"] = manifest.seed
            bare, truth = generate(EcosystemConfig.from_dict(cfg), int(manifest.dataset.get("runs", 10)),
                                   config_id=manifest.bare_id)
            emap = truth.entity_map
        elif "bare_log" in manifest.dataset:
            bare = [r for r in read_crawl_log(manifest.base_dir / manifest.dataset["bare_log"])
                    if r.config_id == manifest.bare_id]
        else:
            raise ValueError("dataset needs 'synth' or 'bare_log'")
        if not bare:
            raise ValueError(f"no runs for bare configuration {manifest.bare_id!r}")

    with _Stage("simulate"):
        roster = manifest.blockers
        if isinstance(roster, str):
            blockers = load_roster(manifest.base_dir / roster)
        else:
            blockers = load_roster(roster, manifest.base_dir)
        if manifest.bare_id in {b.id for b in blockers}:
            raise ValueError(f"blocker id {manifest.bare_id!r} clashes with the bare configuration")
        protected = simulate_all(blockers, bare, rules, jobs)
        by_config = {manifest.bare_id: bare, **protected}
        configs = list(by_config)

    with _Stage("metrics"):
        table = build_metric_table([r for runs in by_config.values() for r in runs], rules)
        files["metrics.csv"] = f"# manifest_sha256={digest} privmeter={__version__}\n" + metric_table_to_csv(table)

    with _Stage("rank"):
        rank_rows, p_rows = [], []
        for metric in manifest.metrics:
            direction = Direction.HIGHER_IS_BETTER if metric in HIGHER_IS_BETTER else Direction.LOWER_IS_BETTER
            inputs = _rank_inputs(table, configs, metric)
            ra = ks_rank(inputs, manifest.alpha, direction)
            for cid in configs:
                rank_rows.append((metric, cid, ra.means[cid], ra.stds[cid], ra.ranks[cid]))
            pv = pairwise_pvalues(inputs)
            for a in configs:
                for b in configs:
                    p_rows.append((metric, a, b, pv[(a, b)]))
        files["ranks.csv"] = _csv(("metric", "config_id", "mean", "std", "rank"), rank_rows, digest)
        files["pvalues.csv"] = _csv(("metric", "config_a", "config_b", "p_value"), p_rows, digest)

    with _Stage("footprint"):
        fp_cfg = manifest.footprint or {}
        method = GroupingMethod(fp_cfg.get("method", "root"))
        if fp_cfg.get("adns") or fp_cfg.get("cdn"):
            emap = read_entity_map(
                manifest.base_dir / fp_cfg["adns"] if fp_cfg.get("adns") else None,
                manifest.base_dir / fp_cfg["cdn"] if fp_cfg.get("cdn") else None,
            )
        fp_rows = []
        for cid, runs in by_config.items():
            g = build_footprint(runs, rules, emap, method)
            fm = footprint_metrics(g)
            fp_rows.append((cid, method.value, fm.n_third_parties, fm.mean_tp_per_fp, fm.top10_fp_coverage,
                            g.fallback_rate))
        files["footprint.csv"] = _csv(
            ("config_id", "method", "n_third_parties", "mean_tp_per_fp", "top10_fp_coverage", "adns_fallback_rate"),
            fp_rows, digest)

    with _Stage("overlap"):
        ov_cfg = manifest.overlap or {}
        techniques = ov_cfg.get("techniques") or [
            b.id for b in blockers if b.policy is Policy.NO_OP and (b.rule_lists or b.heuristic is not None)
        ]
        ov_rows = []
        if len(techniques) >= 2:
            for kind in (ResourceKind.REQUESTS, ResourceKind.DOMAINS):
                sets = [blocked_set(bare, by_config[t], kind, rules, technique=t) for t in techniques]
                for cell in render_overlap_data(overlap_matrix(sets)):
                    ov_rows.append((kind.value, cell.row, cell.col, cell.cell, cell.value, cell.side_length))
        files["overlap.csv"] = _csv(("kind", "row", "col", "cell", "value", "side_length"), ov_rows, digest)

    with _Stage("indices"):
        idx = synthetic_indices(table, manifest.bare_id)
        files["indices.csv"] = _csv(
            ("config_id", "protection_index", "quality_index"),
            [(s.config_id, s.protection_index, s.quality_index) for s in idx], digest)

    with _Stage("write"):
        summary = [f"# manifest_sha256={digest} privmeter={__version__}",
                   f"configurations: {len(configs)} ({', '.join(configs)})",
                   f"runs per configuration: {len(bare)}",
                   f"sites: {len({v.site for r in bare for v in r.visits})}",
                   f"alpha: {manifest.alpha}",
                   "bytes_total is reported but flagged unstable and left out of the indices", ""]
        for s in idx:
            summary.append(f"{s.config_id:<28} protection={s.protection_index:.4f} quality={s.quality_index:.4f}")
        files["summary.txt"] = "\n".join(summary) + "\n"
        files["manifest.json"] = json.dumps(manifest.to_dict(), sort_keys=True, indent=2) + "\n"

        out_dir.parent.mkdir(parents=True, exist_ok=True)
        scratch = Path(tempfile.mkdtemp(prefix=".privmeter-", dir=out_dir.parent))
        try:
            for name, text in files.items():
                (scratch / name).write_text(text, encoding="utf-8")
            if out_dir.exists():
                shutil.rmtree(out_dir)
            scratch.rename(out_dir)
        except BaseException:
            shutil.rmtree(scratch, ignore_errors=True)
            raise
    return {name: out_dir / name for name in files}

"""Corpus-level runs: method comparison, budget sweeps, ablations, exports.

Run directory layout (all files deterministic except ``metadata.json``)::

    config.json                  resolved config
    metrics.csv                  one row per image x method x region
    summary.json                 corpus means per method and region, plus config
    checks.json                  directional checks and their outcome
    frames/<method>/<id>.bin     sent frame bytes
    plans/<method>/<id>.json     allocation plans
    audit/<method>/<id>.json     matcher output, encoder choices, channel report
    received/<method>/<id>.ppm   reconstructions
    metadata.json                wall-clock timestamp and package version
"""
from __future__ import annotations

import concurrent.futures
import csv
import datetime
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__
from ..intents import SynonymLexicon, generate_intention
from ..kb import KnowledgeBase
from ..metrics import LEVELS, MetricReport, build_masks
from ..phy import ldpc
from ..rng import derive_seed
from ..scene import RasterImage, save_image
from .config import ExperimentConfig
from .corpus import load_intents, read_corpus
from .pipeline import Matching, PipelineResult, StageError, run_pipeline

log = logging.getLogger(__name__)

REGIONS = ("global",) + tuple(f"level{lv}" for lv in LEVELS)


@dataclass
class Corpus:
    samples: list                       # (SceneDescription, RasterImage)
    intents: dict                       # image_id -> Intention

    def __len__(self):
        return len(self.samples)


def load_corpus(config: ExperimentConfig, lexicon: SynonymLexicon | None = None) -> Corpus:
    samples = read_corpus(config.path("annotations"), config.path("images"))
    intents_path = config.path("intents")
    if intents_path is not None and intents_path.exists():
        intents = load_intents(intents_path)
    else:
        lexicon = lexicon or load_lexicon(config)
        intents = {s.image_id: generate_intention(s.labels, lexicon,
                                                  derive_seed(config.seeds.intents, s.image_id),
                                                  config.template)
                   for s, _ in samples}
    missing = [s.image_id for s, _ in samples if s.image_id not in intents]
    if missing:
        raise ValueError(f"no intention for images {missing[:5]}")
    return Corpus(samples, intents)


def load_lexicon(config: ExperimentConfig) -> SynonymLexicon:
    path = config.path("lexicon")
    return SynonymLexicon.load(path) if path else SynonymLexicon.default()


def load_kb(config: ExperimentConfig) -> KnowledgeBase | None:
    path = config.path("kb")
    if path is None or not path.exists():
        return None
    return KnowledgeBase.load(path)


@dataclass
class RunResult:
    config: ExperimentConfig
    metrics: MetricReport
    results: list = field(default_factory=list)     # PipelineResult
    checks: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"config": self.config.to_dict(), "means": self.metrics.summary(),
                "checks": self.checks}


# ---------------------------------------------------------------- running

_WORKER: dict = {}


def _init_worker(config_dict, kb_csv, base_dir):
    cfg = ExperimentConfig.from_dict(config_dict)
    cfg.base_dir = base_dir
    _WORKER.update(config=cfg, kb=KnowledgeBase.from_csv(kb_csv) if kb_csv else None)


def _run_one(args):
    scene, image, intention, methods, budget = args
    cfg, kb = _WORKER["config"], _WORKER["kb"]
    lexicon = load_lexicon(cfg)
    matching = Matching(cfg, lexicon)
    code = ldpc.build_code(cfg.seeds.code)
    return [run_pipeline(cfg, scene, image, intention, kb, m, matching=matching,
                         lexicon=lexicon, code=code, budget=budget) for m in methods]


def run_methods(config: ExperimentConfig, corpus: Corpus, methods, kb,
                budget: int | None = None) -> list[PipelineResult]:
    """Every method on every image; results ordered by image then method."""
    needs_kb = {"pace", "no_voting"} & set(methods)
    if needs_kb and kb is None:
        raise ValueError(f"methods {sorted(needs_kb)} need a knowledge base; run calibrate first")
    jobs = [(scene, image, corpus.intents[scene.image_id], list(methods), budget)
            for scene, image in corpus.samples]
    if config.workers > 1:
        init = (config.to_dict(), kb.to_csv() if kb else None, getattr(config, "base_dir", None))
        with concurrent.futures.ProcessPoolExecutor(config.workers, initializer=_init_worker,
                                                    initargs=init) as pool:
            batches = list(pool.map(_run_one, jobs))
    else:
        _WORKER.update(config=config, kb=kb)
        batches = [_run_one(job) for job in jobs]
    return [r for batch in batches for r in batch]


def _report(results) -> MetricReport:
    report = MetricReport()
    for r in results:
        report.extend(r.metrics)
    return report


def comparison_checks(report: MetricReport) -> dict:
    """Directional checks on the ordering of methods."""
    checks = {}
    methods = report.methods()

    def m(method, region):
        return report.mean(method, region, "psnr")

    if "pace" in methods and "uniform_regions" in methods:
        a, b = m("pace", "level3"), m("uniform_regions", "level3")
        if a is not None and b is not None:
            checks["pace_level3_minus_uniform_level3_db"] = a - b
            checks["pace_level3_exceeds_uniform_by_1db"] = a - b >= 1.0
    if "pace" in methods and "intention_agnostic" in methods:
        a, b = m("intention_agnostic", "global"), m("pace", "global")
        checks["agnostic_global_minus_pace_global_db"] = a - b
        checks["agnostic_global_at_least_pace"] = a >= b
    if "pace" in methods:
        a, b = m("pace", "level3"), m("pace", "level1")
        if a is not None and b is not None:
            checks["pace_level3_at_least_level1"] = a >= b
    return checks


def ablation_checks(report: MetricReport, mode: str) -> dict:
    checks = {}

    def m(method, region):
        return report.mean(method, region, "psnr")

    if mode == "no_kb":
        a, b = m("pace", "level3"), m("no_kb", "level3")
        checks["normal_level3_minus_no_kb_level3_db"] = a - b
        checks["normal_level3_at_least_no_kb"] = a >= b
    elif mode == "no_voting":
        gap_n = m("pace", "level3") - m("pace", "level1")
        gap_v = m("no_voting", "level3") - m("no_voting", "level1")
        checks["normal_gap_db"] = gap_n
        checks["no_voting_gap_db"] = gap_v
        checks["normal_gap_exceeds_no_voting"] = gap_n > gap_v
    return checks


def run_comparison(config: ExperimentConfig, corpus: Corpus, kb=None,
                   methods=None, budget: int | None = None) -> RunResult:
    methods = list(methods or config.methods)
    results = run_methods(config, corpus, methods, kb, budget)
    report = _report(results)
    return RunResult(config, report, results, comparison_checks(report))


def run_ablation(config: ExperimentConfig, corpus: Corpus, mode: str, kb=None) -> RunResult:
    """Normal PACE against one ablation on the same corpus and seeds."""
    if mode not in ("no_voting", "no_kb"):
        raise ValueError(f"ablation mode must be no_voting or no_kb, not {mode!r}")
    results = run_methods(config, corpus, ["pace", mode], kb)
    report = _report(results)
    return RunResult(config, report, results, ablation_checks(report, mode))


def run_sweep(config: ExperimentConfig, corpus: Corpus, budgets, kb=None,
              methods=None) -> tuple[list[dict], dict]:
    """Comparison per wire budget; returns (curve rows, per-budget summaries)."""
    budgets = [int(b) for b in budgets]
    if budgets != sorted(budgets):
        raise ValueError("budgets must be ascending")
    methods = list(methods or config.methods)
    rows, summaries = [], {}
    for budget in budgets:
        run = run_comparison(config, corpus, kb, methods, budget)
        summaries[budget] = run.metrics.summary()
        for method in methods:
            for region in REGIONS:
                rows.append({"budget_bytes": budget, "method": method, "region": region,
                             "psnr": run.metrics.mean(method, region, "psnr"),
                             "ssim": run.metrics.mean(method, region, "ssim")})
    return rows, summaries


# ---------------------------------------------------------------- writing

def _dump(path: Path, text: str | bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(text, bytes):
        path.write_bytes(text)
    else:
        path.write_text(text, encoding="utf-8")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_metadata(out: Path, command: str) -> None:
    """The only file that carries wall-clock time."""
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    _dump(out / "metadata.json", _json({"command": command, "created_utc": stamp,
                                        "pragcomm_version": __version__}))


def write_run(run: RunResult, out, command: str = "run", images: bool = True) -> Path:
    out = Path(out)
    _dump(out / "config.json", run.config.to_json())
    _dump(out / "metrics.csv", run.metrics.to_csv())
    _dump(out / "summary.json", _json(run.summary()))
    _dump(out / "checks.json", _json(run.checks))
    for r in run.results:
        _dump(out / "frames" / r.method / f"{r.image_id}.bin", r.frame)
        _dump(out / "plans" / r.method / f"{r.image_id}.json", r.plan.to_json())
        _dump(out / "audit" / r.method / f"{r.image_id}.json", r.audit_json())
        if images:
            path = out / "received" / r.method / f"{r.image_id}.ppm"
            path.parent.mkdir(parents=True, exist_ok=True)
            save_image(r.received, path)
    write_metadata(out, command)
    return out


def write_sweep(rows, summaries, config: ExperimentConfig, out) -> Path:
    out = Path(out)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["budget_bytes", "method", "region", "psnr", "ssim"])
    for r in rows:
        w.writerow([r["budget_bytes"], r["method"], r["region"],
                    "" if r["psnr"] is None else f"{r['psnr']:.6f}",
                    "" if r["ssim"] is None else f"{r['ssim']:.8f}"])
    _dump(out / "config.json", config.to_json())
    _dump(out / "sweep.csv", buf.getvalue())
    _dump(out / "summary.json", _json({"config": config.to_dict(),
                                       "budgets": {str(k): v for k, v in summaries.items()}}))
    write_metadata(out, "sweep")
    return out


def export_for_neural_metrics(results, corpus: Corpus, out_dir) -> Path:
    """Original/received pairs plus per-level masks and a manifest, for external tools."""
    out = Path(out_dir)
    originals = {s.image_id: (s, img) for s, img in corpus.samples}
    rows = []
    for r in results:
        scene, image = originals[r.image_id]
        base = out / r.method / r.image_id
        base.mkdir(parents=True, exist_ok=True)
        save_image(image, base / "original.ppm")
        save_image(r.received, base / "received.ppm")
        masks = build_masks(corpus.intents[r.image_id], scene)
        mask_files = {}
        for lv in masks.present():
            px = (masks[lv][..., None] * 255).repeat(3, axis=2).astype("uint8")
            save_image(RasterImage(px), base / f"mask_level{lv}.ppm")
            mask_files[f"mask_level{lv}"] = f"{r.method}/{r.image_id}/mask_level{lv}.ppm"
        rows.append({"image_id": r.image_id, "method": r.method,
                     "original": f"{r.method}/{r.image_id}/original.ppm",
                     "received": f"{r.method}/{r.image_id}/received.ppm", **mask_files})
    buf = io.StringIO()
    fields = ["image_id", "method", "original", "received",
              "mask_level3", "mask_level2", "mask_level1"]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n", restval="")
    w.writeheader()
    w.writerows(rows)
    _dump(out / "manifest.csv", buf.getvalue())
    return out


def results_from_run_dir(run_dir, corpus: Corpus) -> list[PipelineResult]:
    """Minimal results (id, method, received image) rebuilt from a written run."""
    from ..scene import load_image
    run_dir = Path(run_dir)
    out = []
    for method_dir in sorted((run_dir / "received").iterdir()):
        for scene, _ in corpus.samples:
            path = method_dir / f"{scene.image_id}.ppm"
            if path.exists():
                out.append(PipelineResult(scene.image_id, method_dir.name, load_image(path),
                                          None, b"", None, MetricReport()))
    return out


__all__ = ["Corpus", "RunResult", "StageError", "load_corpus", "load_kb", "run_comparison",
           "run_ablation", "run_sweep", "run_methods", "write_run", "write_sweep",
           "export_for_neural_metrics", "results_from_run_dir"]

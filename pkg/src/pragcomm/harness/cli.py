"""Command-line entry point: ``pragcomm <command> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..intents import generate_intention
from ..kb import calibrate
from ..rng import derive_seed
from .config import ConfigError, ExperimentConfig
from .corpus import (CorpusSpec, calibration_crops, make_corpus, read_annotations,
                     save_intents, write_corpus)
from .experiments import (export_for_neural_metrics, load_corpus, load_kb, load_lexicon,
                          results_from_run_dir, run_ablation, run_comparison, run_sweep,
                          write_metadata, write_run, write_sweep)

log = logging.getLogger("pragcomm")


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if getattr(args, "workers", None):
        cfg.workers = args.workers
    return cfg


def _out(args, cfg: ExperimentConfig) -> Path:
    return Path(args.out) if args.out else cfg.path("outputs")


def cmd_make_corpus(args) -> int:
    cfg = _config(args)
    c = cfg.corpus
    spec = CorpusSpec(args.count or c.count, c.width, c.height, c.min_objects, c.max_objects,
                      c.min_size, c.max_size)
    seed = cfg.seeds.dataset if args.seed is None else args.seed
    out = Path(args.out)
    write_corpus(out, make_corpus(seed, spec))
    print(f"wrote {spec.count} scenes to {out}")
    return 0


def cmd_gen_intents(args) -> int:
    cfg = _config(args)
    lexicon = load_lexicon(cfg)
    template = args.template or cfg.template
    scenes = read_annotations(args.annotations)
    intents = {s.image_id: generate_intention(s.labels, lexicon, derive_seed(args.seed, s.image_id),
                                              template)
               for s in scenes}
    save_intents(intents, args.out)
    warnings = sum(len(i.warnings) for i in intents.values())
    print(f"wrote {len(intents)} intentions to {args.out} ({warnings} lexicon warnings)")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _config(args)
    cal = cfg.calibration
    crops = calibration_crops(cfg.seeds.calibration, per_category=cal.crops_per_category,
                              size=cal.crop_size)
    kb = calibrate(crops, cfg.channel.state(), cal.bit_grid, seed=cfg.seeds.calibration)
    out = Path(args.out) if args.out else cfg.path("kb")
    out.parent.mkdir(parents=True, exist_ok=True)
    kb.save(out)
    print(f"wrote {len(kb)} curves to {out}")
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    corpus = load_corpus(cfg)
    methods = args.methods.split(",") if args.methods else None
    run = run_comparison(cfg, corpus, load_kb(cfg), methods)
    out = write_run(run, _out(args, cfg), "run")
    _print_summary(run)
    print(f"results in {out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    corpus = load_corpus(cfg)
    budgets = [int(b) for b in args.budgets.split(",")]
    methods = args.methods.split(",") if args.methods else None
    rows, summaries = run_sweep(cfg, corpus, budgets, load_kb(cfg), methods)
    out = write_sweep(rows, summaries, cfg, _out(args, cfg))
    print(f"{len(rows)} curve points in {out / 'sweep.csv'}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _config(args)
    mode = args.mode or cfg.ablation
    if mode == "normal":
        raise ConfigError("choose an ablation with --mode no_voting or --mode no_kb")
    corpus = load_corpus(cfg)
    run = run_ablation(cfg, corpus, mode, load_kb(cfg))
    out = write_run(run, _out(args, cfg), f"ablate {mode}")
    _print_summary(run)
    print(f"results in {out}")
    return 0


def cmd_export(args) -> int:
    cfg = _config(args)
    corpus = load_corpus(cfg)
    results = results_from_run_dir(args.run, corpus)
    out = export_for_neural_metrics(results, corpus, args.out)
    write_metadata(out, "export")
    print(f"exported {len(results)} image pairs to {out}")
    return 0


def _print_summary(run) -> None:
    for method, regions in run.metrics.summary().items():
        cells = []
        for region, v in regions.items():
            if v["psnr"] is not None:
                ssim = "-" if v["ssim"] is None else f"{v['ssim']:.3f}"
                cells.append(f"{region} {v['psnr']:.2f} dB / {ssim}")
        print(f"{method:20s} " + " | ".join(cells))
    for name, value in run.checks.items():
        print(f"  {name}: {value}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pragcomm", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="experiment config (JSON)")
        sp.set_defaults(func=func)
        return sp

    sp = add("make-corpus", cmd_make_corpus, "write a synthetic annotated corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--count", type=int)
    sp.add_argument("--seed", type=int)

    sp = add("gen-intents", cmd_gen_intents, "generate intentions for annotated scenes")
    sp.add_argument("--annotations", required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--template")

    sp = add("calibrate", cmd_calibrate, "build the rate-distortion knowledge base")
    sp.add_argument("--out")

    sp = add("run", cmd_run, "compare PACE with the baselines")
    sp.add_argument("--out")
    sp.add_argument("--methods", help="comma-separated subset of methods")
    sp.add_argument("--workers", type=int)

    sp = add("sweep", cmd_sweep, "comparison across wire budgets")
    sp.add_argument("--budgets", required=True, help="comma-separated bytes, ascending")
    sp.add_argument("--out")
    sp.add_argument("--methods")
    sp.add_argument("--workers", type=int)

    sp = add("ablate", cmd_ablate, "normal PACE against one ablation")
    sp.add_argument("--mode", choices=["no_voting", "no_kb"])
    sp.add_argument("--out")
    sp.add_argument("--workers", type=int)

    sp = add("export", cmd_export, "export image pairs and masks for external metrics")
    sp.add_argument("--run", required=True, help="run directory written by `run`")
    sp.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Send one synthetic scene with every method and compare what arrives.

    python3 demos/one_image.py [out_dir]

Builds a scene, draws an intention for it, calibrates a small knowledge base
and prints per-method PSNR on the whole image and on each match level.
Reconstructions are written as PPM files when an output directory is given.
"""
import sys
from pathlib import Path

from pragcomm.harness.config import ExperimentConfig
from pragcomm.harness.corpus import calibration_crops, make_scene
from pragcomm.harness.pipeline import run_pipeline
from pragcomm.intents import SynonymLexicon, generate_intention
from pragcomm.kb import calibrate
from pragcomm.phy import ldpc
from pragcomm.scene import save_image

METHODS = ["pace", "uniform_regions", "intention_agnostic", "lexical_sim", "no_kb", "no_voting"]


def main(out=None):
    cfg = ExperimentConfig()
    code = ldpc.build_code(cfg.seeds.code)
    scene, image = make_scene(0, seed=cfg.seeds.dataset)
    intention = generate_intention(scene.labels, SynonymLexicon.default(), seed=7)
    print(f"scene {scene.image_id}: {', '.join(scene.labels)}")
    print(f"intention: {intention.text!r}")
    for term, level in intention.targets:
        print(f"  {term:15s} level {int(level)}")

    # a coarse grid keeps this under a minute
    crops = calibration_crops(cfg.seeds.calibration, per_category=1, size=64)
    kb = calibrate(crops, cfg.channel.state(), [2048, 8192, 32768, 131072], seed=1, code=code)

    print(f"\nwire budget {cfg.channel.wire_budget_bytes} bytes at {cfg.channel.snr_db} dB")
    print(f"{'method':20s} {'global':>8s} {'level3':>8s} {'level2':>8s} {'level1':>8s}  lost")
    for method in METHODS:
        r = run_pipeline(cfg, scene, image, intention, kb, method, code=code)
        cells = []
        for region in ("global", "level3", "level2", "level1"):
            row = r.metrics.get(scene.image_id, method, region)
            cells.append(f"{row['psnr']:8.2f}" if row else f"{'-':>8s}")
        print(f"{method:20s} {' '.join(cells)}  {sum(r.audit['lost'])}")
        if out:
            Path(out).mkdir(parents=True, exist_ok=True)
            save_image(r.received, Path(out) / f"{method}.ppm")
    if out:
        save_image(image, Path(out) / "original.ppm")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else None)

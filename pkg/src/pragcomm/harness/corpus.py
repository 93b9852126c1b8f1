"""Synthetic scenes: textured rectangles with known boxes, categories and captions.

Every category has a fixed texture family, so categories differ in how hard
they are to compress (flat gradients are cheap, fine noise is expensive).
Objects in one image have distinct categories and do not overlap.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from ..rng import derive_seed
from ..scene import (BBox, ObjectAnnotation, RasterImage, SceneDescription, load_image,
                     load_scene, save_image, save_scene)

# category -> (texture family, parameters, base RGB)
CATEGORY_STYLES = {
    "car": ("gradient", {"detail": 16.0, "detail_sigma": 1.5, "grain": 3.0}, (180, 40, 40)),
    "vase": ("gradient", {"detail": 22.0, "detail_sigma": 3.0, "grain": 3.0}, (60, 120, 190)),
    "clock": ("rings", {"period": 9.0, "amp": 50.0, "grain": 2.0}, (200, 200, 170)),
    "bus": ("stripes", {"period": 10.0, "amp": 60.0, "grain": 3.0}, (220, 180, 40)),
    "umbrella": ("stripes", {"period": 6.0, "amp": 55.0, "grain": 4.0}, (120, 60, 150)),
    "book": ("checker", {"block": 6, "amp": 40.0, "grain": 4.0}, (90, 140, 90)),
    "bottle": ("blobs", {"sigma": 4.0, "amp": 45.0, "grain": 4.0}, (40, 150, 120)),
    "horse": ("blobs", {"sigma": 1.5, "amp": 45.0, "grain": 8.0}, (140, 90, 50)),
    "cat": ("noise", {"amp": 22.0, "grain": 0.0}, (150, 150, 150)),
    "bird": ("noise", {"amp": 32.0, "grain": 0.0}, (90, 110, 170)),
    "kite": ("checker", {"block": 2, "amp": 50.0, "grain": 10.0}, (210, 90, 120)),
    "boat": ("stripes", {"period": 3.0, "amp": 45.0, "grain": 12.0}, (230, 230, 235)),
}
CORPUS_CATEGORIES = tuple(CATEGORY_STYLES)

_COLOR_WORDS = ("red", "blue", "pale", "dark", "bright", "grey", "green", "yellow")
_PHRASES = ("in soft light", "seen from the side", "near the edge of the frame",
            "partly in shadow", "at rest", "under a clear sky", "close to the camera")


def texture(family: str, h: int, w: int, rng: np.random.Generator, base,
            **params) -> np.ndarray:
    """Float RGB texture of shape (h, w, 3) around ``base``."""
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    base = np.asarray(base, dtype=np.float64) + rng.normal(0, 12, 3)
    theta = rng.uniform(0, np.pi)
    phase = rng.uniform(0, 2 * np.pi)
    if family == "gradient":
        t = (x * np.cos(theta) + y * np.sin(theta)) / max(h, w)
        field = 60.0 * (t - 0.5)
    elif family == "rings":
        r = np.hypot(x - w / 2, y - h / 2)
        field = params["amp"] * np.sin(r / params["period"] * 2 * np.pi + phase)
    elif family == "stripes":
        u = x * np.cos(theta) + y * np.sin(theta)
        field = params["amp"] * np.sin(u / params["period"] * 2 * np.pi + phase)
    elif family == "checker":
        b = params["block"]
        ox, oy = rng.integers(0, b, 2)
        field = params["amp"] * ((((x + ox) // b + (y + oy) // b) % 2) * 2 - 1)
    elif family == "blobs":
        field = gaussian_filter(rng.standard_normal((h, w)), params["sigma"], mode="wrap")
        field *= params["amp"] / max(field.std(), 1e-9)
    elif family == "noise":
        field = params["amp"] * rng.standard_normal((h, w))
    else:
        raise ValueError(f"unknown texture family {family!r}")
    if params.get("detail"):
        extra = gaussian_filter(rng.standard_normal((h, w)), params["detail_sigma"], mode="wrap")
        field = field + extra * (params["detail"] / max(extra.std(), 1e-9))
    tint = 1.0 + rng.normal(0, 0.15, 3)
    img = base + field[..., None] * tint
    grain = params.get("grain", 0.0)
    if grain:
        img = img + rng.normal(0, grain, img.shape)
    return img


def background_texture(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    base = rng.uniform(70, 190, 3)
    low = gaussian_filter(rng.standard_normal((h, w)), 12.0, mode="wrap")
    low *= 35.0 / max(low.std(), 1e-9)
    return base + low[..., None] + rng.normal(0, 5.0, (h, w, 3))


def render_object(category: str, h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    family, params, base = CATEGORY_STYLES[category]
    return texture(family, h, w, rng, base, **params)


def _to_u8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def _place(rng, width, height, count, min_size, max_size, gap=4, tries=400) -> list[BBox]:
    boxes: list[BBox] = []
    for _ in range(tries):
        if len(boxes) == count:
            break
        w = int(rng.integers(min_size, max_size + 1))
        h = int(rng.integers(min_size, max_size + 1))
        x = int(rng.integers(0, width - w + 1))
        y = int(rng.integers(0, height - h + 1))
        clash = any(x < b.x + b.w + gap and b.x < x + w + gap and
                    y < b.y + b.h + gap and b.y < y + h + gap for b in boxes)
        if not clash:
            boxes.append(BBox(x, y, w, h))
    return boxes


def _join(items: list[str]) -> str:
    if len(items) <= 1:
        return "".join(items)
    return ", ".join(items[:-1]) + " and " + items[-1]


@dataclass(frozen=True)
class CorpusSpec:
    count: int = 24
    width: int = 256
    height: int = 256
    min_objects: int = 3
    max_objects: int = 5
    min_size: int = 56
    max_size: int = 104
    categories: tuple = CORPUS_CATEGORIES


def make_scene(index: int, seed: int, spec: CorpusSpec = CorpusSpec()):
    rng = np.random.default_rng(derive_seed(seed, "scene", index))
    n = int(rng.integers(spec.min_objects, spec.max_objects + 1))
    cats = [spec.categories[i] for i in rng.permutation(len(spec.categories))[:n]]
    boxes = _place(rng, spec.width, spec.height, n, spec.min_size, spec.max_size)
    canvas = background_texture(spec.height, spec.width, rng)
    objects = []
    for i, (cat, box) in enumerate(zip(cats, boxes)):
        canvas[box.slices()] = render_object(cat, box.h, box.w, rng)
        caption = (f"a {_COLOR_WORDS[rng.integers(len(_COLOR_WORDS))]} {cat} "
                   f"{_PHRASES[rng.integers(len(_PHRASES))]}")
        objects.append(ObjectAnnotation(i, cat, caption, box))
    caption = "a scene with " + _join([f"a {o.category}" for o in objects])
    scene = SceneDescription(f"syn{index:05d}", spec.width, spec.height, caption, tuple(objects))
    return scene, RasterImage(_to_u8(canvas))


def make_corpus(seed: int, spec: CorpusSpec = CorpusSpec()):
    return [make_scene(i, seed, spec) for i in range(spec.count)]


def calibration_crops(seed: int, categories=CORPUS_CATEGORIES, per_category: int = 3,
                      size: int = 80) -> dict:
    """Fresh object renders per category, independent of the evaluation corpus."""
    crops = {}
    for cat in categories:
        rng = np.random.default_rng(derive_seed(seed, "calib", cat))
        crops[cat] = [RasterImage(_to_u8(render_object(cat, size, size, rng)))
                      for _ in range(per_category)]
    return crops


# ---------------------------------------------------------------- disk layout

ANNOTATIONS = "annotations"
IMAGES = "images"


def write_corpus(root, samples) -> None:
    root = Path(root)
    (root / ANNOTATIONS).mkdir(parents=True, exist_ok=True)
    (root / IMAGES).mkdir(parents=True, exist_ok=True)
    for scene, image in samples:
        save_scene(scene, root / ANNOTATIONS / f"{scene.image_id}.json")
        save_image(image, root / IMAGES / f"{scene.image_id}.ppm")


def read_annotations(ann_dir) -> list[SceneDescription]:
    ann_dir = Path(ann_dir)
    return [load_scene(p) for p in sorted(ann_dir.glob("*.json"))]


def read_corpus(ann_dir, img_dir) -> list:
    out = []
    for scene in read_annotations(ann_dir):
        path = Path(img_dir) / f"{scene.image_id}.ppm"
        if not path.exists():
            path = Path(img_dir) / f"{scene.image_id}.png"
        image = load_image(path)
        if (image.width, image.height) != (scene.width, scene.height):
            raise ValueError(f"{scene.image_id}: image is {image.width}x{image.height}, "
                             f"annotation says {scene.width}x{scene.height}")
        out.append((scene, image))
    return out


def save_intents(intents: dict, path) -> None:
    data = {k: v.to_dict() for k, v in sorted(intents.items())}
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_intents(path) -> dict:
    from ..scene import Intention
    data = json.loads(Path(os.fspath(path)).read_text(encoding="utf-8"))
    return {k: Intention.from_dict(v) for k, v in data.items()}

"""PSNR, SSIM and their match-level masked variants."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from .scene import Intention, RasterImage, SceneDescription

PSNR_CAP = 100.0
LEVELS = (3, 2, 1)
WIN = 11
SIGMA = 1.5
K1, K2, L = 0.01, 0.03, 255.0
_LUMA = np.array([0.299, 0.587, 0.114])


class MetricError(ValueError):
    pass


def _pixels(img) -> np.ndarray:
    return img.pixels if isinstance(img, RasterImage) else np.asarray(img)


def _check(a, b, mask):
    if a.shape != b.shape:
        raise MetricError(f"image shapes differ: {a.shape} vs {b.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape[:2]:
            raise MetricError(f"mask shape {mask.shape} does not match image {a.shape[:2]}")
        if not mask.any():
            raise MetricError("empty mask")
    return mask


def psnr(a, b, mask=None) -> float:
    """PSNR over masked pixels (all channels), capped at 100 dB."""
    a, b = _pixels(a), _pixels(b)
    mask = _check(a, b, mask)
    d = a.astype(np.float64) - b.astype(np.float64)
    if mask is not None:
        d = d[mask]
    mse = float(np.mean(d * d))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(L * L / mse))


def luminance(img) -> np.ndarray:
    px = _pixels(img).astype(np.float64)
    return px @ _LUMA if px.ndim == 3 else px


def gaussian_window(size: int = WIN, sigma: float = SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-x * x / (2 * sigma * sigma))
    return g / g.sum()


def ssim_map(a, b) -> np.ndarray:
    """Local SSIM at every window position fully inside the image, (H-10, W-10)."""
    x, y = luminance(a), luminance(b)
    g = gaussian_window()
    half = WIN // 2

    def filt(z):
        z = correlate1d(z, g, axis=0, mode="constant")
        z = correlate1d(z, g, axis=1, mode="constant")
        return z[half:z.shape[0] - half, half:z.shape[1] - half]

    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    c1, c2 = (K1 * L) ** 2, (K2 * L) ** 2
    return ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))


def window_mask(mask: np.ndarray) -> np.ndarray:
    """Window positions (top-left indexed) whose 11x11 support lies inside ``mask``."""
    m = np.asarray(mask, dtype=np.int64)
    s = np.pad(m.cumsum(0).cumsum(1), ((1, 0), (1, 0)))
    tot = s[WIN:, WIN:] - s[:-WIN, WIN:] - s[WIN:, :-WIN] + s[:-WIN, :-WIN]
    return tot == WIN * WIN


def ssim(a, b, mask=None) -> float:
    """Mean local SSIM on luminance over windows fully inside the mask."""
    a, b = _pixels(a), _pixels(b)
    mask = _check(a, b, mask)
    if a.shape[0] < WIN or a.shape[1] < WIN:
        raise MetricError(f"image smaller than the {WIN}x{WIN} window")
    smap = ssim_map(a, b)
    if mask is None:
        return float(smap.mean())
    valid = window_mask(mask)
    if not valid.any():
        raise MetricError(f"mask holds no full {WIN}x{WIN} window")
    return float(smap[valid].mean())


# ---------------------------------------------------------------- masks

@dataclass
class LevelMasks:
    masks: dict   # level -> (H, W) bool

    def __getitem__(self, level: int) -> np.ndarray:
        return self.masks[level]

    def present(self) -> list[int]:
        return [lv for lv in LEVELS if self.masks[lv].any()]


def object_levels(intention: Intention, scene: SceneDescription) -> list[int | None]:
    return [None if (lv := intention.level_of(o.category)) is None else int(lv)
            for o in scene.objects]


def build_masks(intention: Intention, scene: SceneDescription) -> LevelMasks:
    """Per-level union of object boxes; a pixel belongs to its highest level only."""
    shape = (scene.height, scene.width)
    masks = {lv: np.zeros(shape, dtype=bool) for lv in LEVELS}
    for obj, lv in zip(scene.objects, object_levels(intention, scene)):
        if lv is not None:
            masks[lv][obj.bbox.slices()] = True
    claimed = np.zeros(shape, dtype=bool)
    for lv in LEVELS:
        masks[lv] &= ~claimed
        claimed |= masks[lv]
    return LevelMasks(masks)


# ---------------------------------------------------------------- reports

@dataclass
class MetricReport:
    """One row per (image, region) where region is ``global`` or ``level1..3``."""
    rows: list = field(default_factory=list)

    FIELDS = ("image_id", "method", "region", "psnr", "ssim", "lost_regions")

    def add(self, image_id: str, method: str, region: str, p, s, lost: int = 0) -> None:
        self.rows.append({"image_id": image_id, "method": method, "region": region,
                          "psnr": p, "ssim": s, "lost_regions": lost})

    def extend(self, other: "MetricReport") -> None:
        self.rows.extend(other.rows)

    def get(self, image_id: str, method: str, region: str):
        for r in self.rows:
            if (r["image_id"], r["method"], r["region"]) == (image_id, method, region):
                return r
        return None

    def methods(self) -> list[str]:
        return list(dict.fromkeys(r["method"] for r in self.rows))

    def mean(self, method: str, region: str, metric: str = "psnr"):
        vals = [r[metric] for r in self.rows
                if r["method"] == method and r["region"] == region and r[metric] is not None]
        return float(np.mean(vals)) if vals else None

    def summary(self) -> dict:
        """Corpus means laid out as method -> region -> metric."""
        regions = ["global"] + [f"level{lv}" for lv in LEVELS]
        out = {}
        for m in self.methods():
            out[m] = {reg: {"psnr": self.mean(m, reg, "psnr"), "ssim": self.mean(m, reg, "ssim"),
                            "images": sum(1 for r in self.rows
                                          if r["method"] == m and r["region"] == reg)}
                      for reg in regions}
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.FIELDS)
        for r in self.rows:
            w.writerow([r["image_id"], r["method"], r["region"],
                        "" if r["psnr"] is None else f"{r['psnr']:.6f}",
                        "" if r["ssim"] is None else f"{r['ssim']:.8f}",
                        r["lost_regions"]])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


def evaluate(original, received, masks: LevelMasks | None, image_id: str = "",
             method: str = "", lost: int = 0) -> MetricReport:
    """Global and per-level PSNR/SSIM; levels with an empty mask are left out."""
    a, b = _pixels(original), _pixels(received)
    _check(a, b, None)
    report = MetricReport()
    g_ssim = ssim(a, b) if min(a.shape[:2]) >= WIN else None
    report.add(image_id, method, "global", psnr(a, b), g_ssim, lost)
    if masks is not None:
        for lv in LEVELS:
            m = masks[lv]
            if not m.any():
                continue
            s = ssim(a, b, m) if window_mask(m).any() else None
            report.add(image_id, method, f"level{lv}", psnr(a, b, m), s, lost)
    return report

"""Rate-distortion knowledge base: per-category curves of source bits to mean PSNR.

File format: one version comment line, then CSV with header
``category,snr_db,modulation,code_rate,source_bits,mean_psnr_db``::

    # pragcomm-kb v1 channel_seed=7
    category,snr_db,modulation,code_rate,source_bits,mean_psnr_db
    car,20.0,QAM16,0.5,2048,21.37...
"""
from __future__ import annotations

import csv
import io
import logging
import math
import os
import re
from dataclasses import dataclass

import numpy as np

from . import codec
from .metrics import psnr
from .phy import link
from .rng import derive_seed
from .scene import BBox, ChannelState, RasterImage

log = logging.getLogger(__name__)

KB_VERSION = 1
FALLBACK = "*"
CSV_HEADER = ["category", "snr_db", "modulation", "code_rate", "source_bits", "mean_psnr_db"]
_VERSION_RE = re.compile(r"^#\s*pragcomm-kb\s+v(\d+)(.*)$")


class KbError(ValueError):
    pass


def default_bit_grid(low: int = 2048, high: int = 262_144, points: int = 8) -> list[int]:
    return [int(round(v)) for v in np.geomspace(low, high, points)]


def isotonic(values) -> list[float]:
    """Pool-adjacent-violators fit, non-decreasing, equal weights."""
    blocks: list[list[float]] = []   # [sum, count]
    for v in values:
        blocks.append([float(v), 1.0])
        while len(blocks) > 1 and blocks[-2][0] / blocks[-2][1] > blocks[-1][0] / blocks[-1][1]:
            s, c = blocks.pop()
            blocks[-1][0] += s
            blocks[-1][1] += c
    out = []
    for s, c in blocks:
        out += [s / c] * int(c)
    return out


@dataclass(frozen=True)
class RdCurve:
    category: str
    channel_key: tuple[float, str, float]
    points: tuple[tuple[int, float], ...]

    def __post_init__(self):
        pts = tuple((int(b), float(p)) for b, p in self.points)
        if not pts:
            raise KbError(f"curve {self.category!r} has no points")
        if any(b2 <= b1 for (b1, _), (b2, _) in zip(pts, pts[1:])):
            raise KbError(f"curve {self.category!r}: bits not strictly increasing")
        if any(p2 < p1 for (_, p1), (_, p2) in zip(pts, pts[1:])):
            raise KbError(f"curve {self.category!r}: PSNR decreases with bits")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "channel_key", (float(self.channel_key[0]),
                                                 str(self.channel_key[1]),
                                                 float(self.channel_key[2])))

    @classmethod
    def repaired(cls, category, channel_key, bits, psnrs) -> "RdCurve":
        return cls(category, channel_key, tuple(zip(bits, isotonic(psnrs))))

    def bits_for(self, target_psnr: float) -> int:
        pts = self.points
        if target_psnr <= pts[0][1]:
            return pts[0][0]
        if target_psnr >= pts[-1][1]:
            return pts[-1][0]
        for (b0, p0), (b1, p1) in zip(pts, pts[1:]):
            if p1 >= target_psnr:
                if p1 == target_psnr:
                    return b1
                x = b0 + (b1 - b0) * (target_psnr - p0) / (p1 - p0)
                return int(math.ceil(x - 1e-9))
        return pts[-1][0]


class KnowledgeBase:
    def __init__(self, curves=(), meta: dict | None = None):
        self.curves: dict[tuple[str, tuple], RdCurve] = {}
        for c in curves:
            self.curves[(c.category, c.channel_key)] = c
        self.meta = dict(meta or {})

    def __len__(self):
        return len(self.curves)

    def __eq__(self, other):
        return isinstance(other, KnowledgeBase) and self.curves == other.curves

    def categories(self, channel_key=None) -> list[str]:
        return sorted({cat for cat, key in self.curves if channel_key in (None, key)})

    def _resolve_key(self, channel: ChannelState):
        key = channel.key
        keys = {k for _, k in self.curves}
        if key in keys:
            return key
        same = [k for k in keys if k[1:] == key[1:]]
        if not same:
            raise KbError(f"no curves for channel {key}")
        near = min(same, key=lambda k: (abs(k[0] - key[0]), k[0]))
        log.info("no curves at %s; using nearest SNR %s", key, near)
        return near

    def curve(self, category: str, channel: ChannelState) -> RdCurve:
        key = self._resolve_key(channel)
        c = self.curves.get((category, key)) or self.curves.get((FALLBACK, key))
        if c is None:
            raise KbError(f"no curve for {category!r} and no fallback at {key}")
        return c

    def query_bits(self, category: str, channel: ChannelState, target_psnr: float) -> int:
        return self.curve(category, channel).bits_for(target_psnr)

    # ------------------------------------------------------------ persistence

    def to_csv(self) -> str:
        buf = io.StringIO()
        extras = " ".join(f"{k}={self.meta[k]}" for k in sorted(self.meta))
        buf.write(f"# pragcomm-kb v{KB_VERSION}{' ' + extras if extras else ''}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for (cat, key) in sorted(self.curves, key=lambda ck: (ck[1], ck[0])):
            for bits, p in self.curves[(cat, key)].points:
                w.writerow([cat, repr(key[0]), key[1], repr(key[2]), bits, repr(p)])
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "KnowledgeBase":
        lines = text.splitlines()
        if not lines:
            raise KbError("empty kb file")
        m = _VERSION_RE.match(lines[0])
        if not m:
            raise KbError("missing kb version line")
        if int(m.group(1)) != KB_VERSION:
            raise KbError(f"kb version {m.group(1)} unsupported (expected {KB_VERSION})")
        meta = dict(tok.split("=", 1) for tok in m.group(2).split() if "=" in tok)
        reader = csv.reader(lines[1:])
        header = next(reader, None)
        if header != CSV_HEADER:
            raise KbError(f"bad kb header {header!r}")
        rows: dict[tuple, list] = {}
        for lineno, row in enumerate(reader, start=3):
            if not row:
                continue
            try:
                cat, snr, mod, rate, bits, p = row
                key = (float(snr), mod, float(rate))
                point = (int(bits), float(p))
                if not cat or not math.isfinite(point[1]) or not math.isfinite(key[0]):
                    raise ValueError("empty category or non-finite value")
            except ValueError as exc:
                raise KbError(f"row {lineno}: malformed ({exc}): {row!r}") from None
            rows.setdefault((cat, key), []).append(point)
        curves = []
        for (cat, key), pts in rows.items():
            try:
                curves.append(RdCurve(cat, key, tuple(pts)))
            except KbError as exc:
                raise KbError(f"curve ({cat}, {key}): {exc}") from None
        return cls(curves, meta)

    @classmethod
    def load(cls, path) -> "KnowledgeBase":
        with open(os.fspath(path), encoding="utf-8") as fh:
            return cls.from_csv(fh.read())


# ---------------------------------------------------------------- calibration

def roundtrip_patch(patch: RasterImage, bits: int, channel: ChannelState, seed,
                    code=None) -> tuple[RasterImage, bool]:
    """Encode, send as a one-region frame, decode. Returns (patch, lost)."""
    stream = codec.encode_region(patch, bits)
    bbox = BBox(0, 0, patch.width, patch.height)
    frame = link.Frame(patch.width, patch.height,
                       [link.Region(link.KIND_OBJECT, 0, bbox, stream.data)])
    result = link.transmit(frame, channel.snr_db, seed, code)
    if result.lost[0]:
        return RasterImage.filled(patch.width, patch.height), True
    try:
        return codec.decode_region(result.frame.regions[0].payload, bbox).pixels, False
    except codec.DecodeError:
        return RasterImage.filled(patch.width, patch.height), True


def calibrate(crops: dict, channel: ChannelState, bit_grid=None, seed: int = 0,
              code=None) -> KnowledgeBase:
    """Mean PSNR per (category, grid bits) through codec and simulated channel."""
    grid = sorted(int(b) for b in (bit_grid or default_bit_grid()))
    if not grid:
        raise KbError("empty bit grid")
    if grid[0] < codec.MIN_BUDGET_BITS:
        raise KbError(f"grid starts below the codec minimum {codec.MIN_BUDGET_BITS}")
    if not crops:
        raise KbError("no calibration categories")
    key = channel.key
    curves, raw = [], {}
    for cat in sorted(crops):
        patches = list(crops[cat])
        if not patches:
            raise KbError(f"category {cat!r} has no calibration crops")
        means = []
        for bits in grid:
            vals = []
            for i, patch in enumerate(patches):
                rx, _ = roundtrip_patch(patch, bits, channel, derive_seed(seed, cat, bits, i), code)
                vals.append(psnr(patch, rx))
            means.append(float(np.mean(vals)))
        raw[cat] = means
        curves.append(RdCurve.repaired(cat, key, grid, means))
    fallback = np.mean([[p for _, p in c.points] for c in curves], axis=0)
    curves.append(RdCurve.repaired(FALLBACK, key, grid, fallback))
    return KnowledgeBase(curves, {"channel_seed": seed})

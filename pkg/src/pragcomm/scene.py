"""Scene, intention and raster-image types plus their file formats.

Annotation files are UTF-8 JSON::

    {"image_id": "...", "width": W, "height": H, "global_caption": "...",
     "objects": [{"index": 0, "category": "dog", "caption": "...",
                  "bbox": [x, y, w, h]}]}

Images are binary PPM (P6, maxval 255); PNG is accepted when Pillow is
importable.
"""
from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class SceneError(ValueError):
    """Invalid or unparsable scene annotation."""


class ImageFormatError(ValueError):
    """Unsupported, malformed or truncated image file."""


class MatchLevel(enum.IntEnum):
    LOW = 1
    MEDIUM = 2
    HIGH = 3

    @classmethod
    def parse(cls, value) -> "MatchLevel":
        if isinstance(value, MatchLevel):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise ValueError(f"unknown match level {value!r}") from None
        return cls(int(value))


@dataclass(frozen=True)
class BBox:
    x: int
    y: int
    w: int
    h: int

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        """(cx, cy) in pixel coordinates."""
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def as_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]

    def fits(self, width: int, height: int) -> bool:
        return (self.x >= 0 and self.y >= 0 and self.w >= 1 and self.h >= 1
                and self.x + self.w <= width and self.y + self.h <= height)

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)


@dataclass(frozen=True)
class ObjectAnnotation:
    index: int
    category: str
    caption: str
    bbox: BBox


@dataclass(frozen=True)
class SceneDescription:
    image_id: str
    width: int
    height: int
    global_caption: str
    objects: tuple[ObjectAnnotation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        _validate_scene(self)

    @property
    def labels(self) -> list[str]:
        """Distinct categories in first-appearance order."""
        return list(dict.fromkeys(o.category for o in self.objects))


@dataclass(frozen=True)
class Intention:
    text: str
    targets: tuple[tuple[str, MatchLevel], ...] = ()
    template: str = ""
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.text:
            raise ValueError("intention text must be non-empty")
        targets = tuple((str(t), MatchLevel.parse(lv)) for t, lv in self.targets)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "warnings", tuple(self.warnings))

    def level_of(self, term: str) -> MatchLevel | None:
        term = term.lower()
        for t, lv in self.targets:
            if t.lower() == term:
                return lv
        return None

    def to_dict(self) -> dict:
        return {"text": self.text,
                "targets": [[t, int(lv)] for t, lv in self.targets],
                "template": self.template,
                "warnings": list(self.warnings)}

    @classmethod
    def from_dict(cls, d: dict) -> "Intention":
        return cls(text=d["text"],
                   targets=tuple((t, lv) for t, lv in d.get("targets", [])),
                   template=d.get("template", ""),
                   warnings=tuple(d.get("warnings", ())))


@dataclass(frozen=True)
class ChannelState:
    snr_db: float = 20.0
    modulation: str = "QAM16"
    code_rate: float = 0.5
    wire_budget_bytes: int = 10_000

    def __post_init__(self):
        if not 0.0 < self.code_rate <= 1.0:
            raise ValueError(f"code_rate must be in (0, 1], got {self.code_rate}")
        if self.modulation != "QAM16":
            raise ValueError(f"unsupported modulation {self.modulation!r}")
        if self.wire_budget_bytes < 1:
            raise ValueError("wire_budget_bytes must be positive")

    @property
    def key(self) -> tuple[float, str, float]:
        return (float(self.snr_db), self.modulation, float(self.code_rate))


@dataclass
class RasterImage:
    """8-bit RGB raster; ``pixels`` has shape (height, width, 3)."""

    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) samples, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        self.pixels = np.ascontiguousarray(px, dtype=np.uint8)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def samples(self) -> bytes:
        """Row-major interleaved RGB bytes."""
        return self.pixels.tobytes()

    def crop(self, bbox: BBox) -> "RasterImage":
        rows, cols = bbox.slices()
        return RasterImage(self.pixels[rows, cols].copy())

    def copy(self) -> "RasterImage":
        return RasterImage(self.pixels.copy())

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    @classmethod
    def filled(cls, width: int, height: int, value=(128, 128, 128)) -> "RasterImage":
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[...] = np.asarray(value, dtype=np.uint8)
        return cls(px)


def _validate_scene(scene: SceneDescription) -> None:
    if not isinstance(scene.width, int) or not isinstance(scene.height, int):
        raise SceneError("width and height must be integers")
    if scene.width < 1 or scene.height < 1:
        raise SceneError(f"image dims must be positive, got {scene.width}x{scene.height}")
    seen = set()
    for obj in scene.objects:
        if obj.index in seen:
            raise SceneError(f"duplicate object index {obj.index}")
        seen.add(obj.index)
        if not obj.category:
            raise SceneError(f"object {obj.index}: empty category")
        if not obj.bbox.fits(scene.width, scene.height):
            raise SceneError(
                f"object {obj.index}: bbox {obj.bbox.as_list()} outside "
                f"{scene.width}x{scene.height} image")


# ---------------------------------------------------------------- annotations

def scene_to_dict(scene: SceneDescription) -> dict:
    return {
        "image_id": scene.image_id,
        "width": scene.width,
        "height": scene.height,
        "global_caption": scene.global_caption,
        "objects": [{"index": o.index, "category": o.category,
                     "caption": o.caption, "bbox": o.bbox.as_list()}
                    for o in scene.objects],
    }


def _field(d: dict, key: str, where: str, kind):
    if key not in d:
        raise SceneError(f"{where}: missing field {key!r}")
    value = d[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise SceneError(f"{where}: field {key!r} must be an integer, got {value!r}")
    if kind is str and not isinstance(value, str):
        raise SceneError(f"{where}: field {key!r} must be a string, got {value!r}")
    return value


def scene_from_dict(d: dict) -> SceneDescription:
    if not isinstance(d, dict):
        raise SceneError("annotation root must be an object")
    objects = []
    raw_objects = d.get("objects", [])
    if not isinstance(raw_objects, list):
        raise SceneError("field 'objects' must be a list")
    for pos, o in enumerate(raw_objects):
        where = f"objects[{pos}]"
        if not isinstance(o, dict):
            raise SceneError(f"{where}: expected an object")
        index = _field(o, "index", where, int)
        bbox = o.get("bbox")
        if (not isinstance(bbox, list) or len(bbox) != 4
                or any(isinstance(v, bool) or not isinstance(v, int) for v in bbox)):
            raise SceneError(f"{where} (index {index}): bbox must be 4 integers, got {bbox!r}")
        objects.append(ObjectAnnotation(
            index=index,
            category=_field(o, "category", where, str).strip().lower(),
            caption=o.get("caption", "") or "",
            bbox=BBox(*bbox)))
    return SceneDescription(
        image_id=str(_field(d, "image_id", "root", str)),
        width=_field(d, "width", "root", int),
        height=_field(d, "height", "root", int),
        global_caption=d.get("global_caption", "") or "",
        objects=tuple(objects))


def load_scene(path: str | os.PathLike) -> SceneDescription:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from exc
    try:
        return scene_from_dict(data)
    except SceneError as exc:
        raise SceneError(f"{path}: {exc}") from None


def save_scene(scene: SceneDescription, path: str | os.PathLike) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=2) + "\n",
                          encoding="utf-8")


# ---------------------------------------------------------------- images

def _ppm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace-separated header integers after the magic."""
    pos, out = 2, []
    n = len(data)
    while len(out) < count:
        while pos < n and (data[pos:pos + 1].isspace() or data[pos:pos + 1] == b"#"):
            if data[pos:pos + 1] == b"#":
                while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < n and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated or malformed PPM header")
        out.append(int(data[start:pos]))
    if pos >= n or not data[pos:pos + 1].isspace():
        raise ImageFormatError("truncated PPM header")
    return out, pos + 1


def decode_ppm(data: bytes) -> RasterImage:
    if len(data) == 0:
        raise ImageFormatError("truncated file: zero bytes")
    if data[:2] != b"P6":
        raise ImageFormatError("not a binary PPM (P6)")
    (w, h, maxval), offset = _ppm_tokens(data, 3)
    if maxval != 255:
        raise ImageFormatError(f"unsupported PPM maxval {maxval}")
    if w < 1 or h < 1:
        raise ImageFormatError(f"bad PPM dims {w}x{h}")
    need = w * h * 3
    body = data[offset:offset + need]
    if len(body) < need:
        raise ImageFormatError(f"truncated file: {len(body)} of {need} sample bytes")
    return RasterImage(np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3))


def encode_ppm(image: RasterImage) -> bytes:
    return b"P6\n%d %d\n255\n" % (image.width, image.height) + image.samples


def load_image(path: str | os.PathLike) -> RasterImage:
    path = Path(path)
    data = path.read_bytes()
    if len(data) == 0:
        raise ImageFormatError(f"{path}: truncated file: zero bytes")
    if data[:2] == b"P6":
        return decode_ppm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        try:
            from PIL import Image
        except ImportError:  # pragma: no cover
            raise ImageFormatError("PNG support needs Pillow") from None
        try:
            with Image.open(path) as im:
                return RasterImage(np.asarray(im.convert("RGB")))
        except OSError as exc:
            raise ImageFormatError(f"{path}: {exc}") from exc
    raise ImageFormatError(f"{path}: unsupported image format")


def save_image(image: RasterImage, path: str | os.PathLike) -> None:
    path = Path(path)
    if path.suffix.lower() == ".png":
        from PIL import Image
        Image.fromarray(image.pixels, "RGB").save(path)
        return
    path.write_bytes(encode_ppm(image))

"""Rate-controlled 8x8 DCT region codec, region extraction and reassembly.

Stream layout (big-endian)::

    "PC" | quality u8 | width u16 | height u16 | payload bits

The payload starts with a truncation flag bit (followed by a 24-bit coded
block count when set), then a canonical Huffman table (symbol count u8,
then ``symbol u8, code length u4`` per symbol) and the entropy-coded
blocks. Blocks are visited in raster order with the Y, Cb and Cr blocks of
each position interleaved; every channel keeps its own DC predictor.

Symbol alphabet:

* ``0..14``   DC difference size class, followed by that many extra bits
* ``15..28``  run of 2**c .. 2**(c+1)-1 empty blocks (zero DC difference,
  no AC), followed by c extra bits
* ``29``      end of block, ``30`` sixteen zero AC coefficients
* ``31..254`` AC (zero run 0..15, size 1..14), followed by size extra bits

Samples are coded in full-resolution YCbCr with one uniform quantiser
step for every coefficient; the quality byte selects the step.
"""
from __future__ import annotations

import heapq
import os
import shlex
import subprocess
import tempfile
from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from .scene import BBox, RasterImage, load_image, save_image

MAGIC = b"PC"
HEADER_BYTES = 7
MIN_BUDGET_BITS = 256
MAX_QUALITY = 255
MAX_CODE_LEN = 15
MAX_SIZE = 14
MAX_SKIP = (1 << 14) - 1
MID_GRAY = 128

SYM_SKIP = 15
SYM_EOB = 29
SYM_ZRL = 30
SYM_AC = 31

_ZIGZAG = np.array(sorted(((u, v) for u in range(8) for v in range(8)),
                          key=lambda p: (p[0] + p[1], p[1] if (p[0] + p[1]) % 2 == 0 else p[0])))
ZIGZAG = _ZIGZAG[:, 0] * 8 + _ZIGZAG[:, 1]

_RGB2YCC = np.array([[0.299, 0.587, 0.114],
                     [-0.168736, -0.331264, 0.5],
                     [0.5, -0.418688, -0.081312]])
_YCC2RGB = np.linalg.inv(_RGB2YCC)


class CodecError(ValueError):
    pass


class DecodeError(CodecError):
    pass


def quant_step(quality: int) -> float:
    """Uniform quantiser step: 1024 at quality 0 down to ~0.23 at 255."""
    return float(2.0 ** ((210 - quality) / 21.0))


@dataclass(frozen=True)
class SourceBitstream:
    data: bytes
    quality: int
    truncated: bool = False

    @property
    def declared_len(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class RegionPatch:
    kind: str                  # "background" | "object"
    bbox: BBox
    category_id: int
    pixels: RasterImage


# ---------------------------------------------------------------- transforms

def _forward(pixels: np.ndarray) -> tuple[np.ndarray, int, int]:
    """Zigzag-ordered DCT coefficients, shape (blocks, 64), interleaved channels."""
    h, w = pixels.shape[:2]
    ph, pw = -(-h // 8) * 8, -(-w // 8) * 8
    px = pixels.astype(np.float64)
    if (ph, pw) != (h, w):
        px = np.pad(px, ((0, ph - h), (0, pw - w), (0, 0)), mode="edge")
    ycc = px @ _RGB2YCC.T
    ycc[..., 0] -= 128.0
    blocks = ycc.reshape(ph // 8, 8, pw // 8, 8, 3).transpose(0, 2, 4, 1, 3)
    coefs = dctn(blocks, axes=(-2, -1), norm="ortho")
    return coefs.reshape(-1, 64)[:, ZIGZAG], ph, pw


def _inverse(zz: np.ndarray, ph: int, pw: int, w: int, h: int) -> np.ndarray:
    coefs = np.empty_like(zz)
    coefs[:, ZIGZAG] = zz
    blocks = idctn(coefs.reshape(ph // 8, pw // 8, 3, 8, 8), axes=(-2, -1), norm="ortho")
    ycc = blocks.transpose(0, 3, 1, 4, 2).reshape(ph, pw, 3)
    ycc[..., 0] += 128.0
    rgb = ycc @ _YCC2RGB.T
    return np.clip(np.rint(rgb[:h, :w]), 0, 255).astype(np.uint8)


def _quantize(coefs: np.ndarray, quality: int) -> np.ndarray:
    q = np.rint(coefs / quant_step(quality))
    lim = (1 << MAX_SIZE) - 1
    return np.clip(q, -lim, lim).astype(np.int64)


# ---------------------------------------------------------------- symbols

def _bit_length(v: np.ndarray) -> np.ndarray:
    a = np.abs(v)
    out = np.zeros(a.shape, dtype=np.int64)
    nz = a > 0
    out[nz] = np.floor(np.log2(a[nz])).astype(np.int64) + 1
    return out


def _extra(v: np.ndarray, size: np.ndarray) -> np.ndarray:
    return np.where(v >= 0, v, v + (1 << size) - 1)


@dataclass
class _Symbols:
    sym: np.ndarray
    extra: np.ndarray
    extra_len: np.ndarray
    key: np.ndarray


def _symbols(q: np.ndarray) -> _Symbols:
    nblocks = q.shape[0]
    if nblocks == 0:
        e = np.zeros(0, dtype=np.int64)
        return _Symbols(e, e, e, e)
    dc = q[:, 0]
    pad = (-nblocks) % 3
    dc3 = np.concatenate([dc, np.zeros(pad, dtype=np.int64)]).reshape(-1, 3)
    diff = np.diff(dc3, axis=0, prepend=0).ravel()[:nblocks]
    ac = q[:, 1:]
    nz = ac != 0
    has_ac = nz.any(axis=1)
    skip = (diff == 0) & ~has_ac
    parts = []

    # runs of empty blocks
    edges = np.diff(np.concatenate([[0], skip.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    lengths = np.flatnonzero(edges == -1) - starts
    if starts.size:
        nchunk = -(-lengths // MAX_SKIP)
        first = np.repeat(np.cumsum(nchunk) - nchunk, nchunk)
        j = np.arange(nchunk.sum()) - first
        run_start = np.repeat(starts, nchunk) + j * MAX_SKIP
        run_len = np.minimum(MAX_SKIP, np.repeat(lengths, nchunk) - j * MAX_SKIP)
        c = _bit_length(run_len) - 1
        parts.append((SYM_SKIP + c, run_len - (1 << c), c, run_start * 256))

    coded = np.flatnonzero(~skip)
    # DC
    d = diff[coded]
    s = _bit_length(d)
    parts.append((s, _extra(d, s), s, coded * 256))
    # AC
    rows, cols = np.nonzero(nz & ~skip[:, None])
    if rows.size:
        vals = ac[rows, cols]
        pos = cols + 1
        prev = np.empty_like(pos)
        prev[0] = 0
        prev[1:] = np.where(rows[1:] == rows[:-1], pos[:-1], 0)
        run = pos - prev - 1
        nzrl = run // 16
        size = _bit_length(vals)
        parts.append((SYM_AC + (run % 16) * MAX_SIZE + size - 1, _extra(vals, size), size,
                      rows * 256 + 2 * pos + 1))
        if nzrl.any():
            zr = np.repeat(np.arange(rows.size), nzrl)
            zeros = np.zeros(zr.size, dtype=np.int64)
            parts.append((np.full(zr.size, SYM_ZRL), zeros, zeros, rows[zr] * 256 + 2 * pos[zr]))
        last = np.zeros(nblocks, dtype=np.int64)
        np.maximum.at(last, rows, pos)
    else:
        last = np.zeros(nblocks, dtype=np.int64)
    eob = coded[last[coded] < 63]
    zeros = np.zeros(eob.size, dtype=np.int64)
    parts.append((np.full(eob.size, SYM_EOB), zeros, zeros, eob * 256 + 255))

    sym, extra, elen, key = (np.concatenate([np.asarray(p[i], dtype=np.int64) for p in parts])
                             for i in range(4))
    return _Symbols(sym, extra, elen, key)


# ---------------------------------------------------------------- huffman

def huffman_lengths(freqs: dict[int, int], max_len: int = MAX_CODE_LEN) -> dict[int, int]:
    """Code lengths for symbols with positive frequency, capped at ``max_len``."""
    freqs = {s: f for s, f in freqs.items() if f > 0}
    if not freqs:
        return {}
    if len(freqs) == 1:
        return {next(iter(freqs)): 1}
    while True:
        lengths = dict.fromkeys(freqs, 0)
        heap = [(f, s, [s]) for s, f in freqs.items()]
        heapq.heapify(heap)
        while len(heap) > 1:
            fa, ta, a = heapq.heappop(heap)
            fb, tb, b = heapq.heappop(heap)
            for sym in a:
                lengths[sym] += 1
            for sym in b:
                lengths[sym] += 1
            heapq.heappush(heap, (fa + fb, min(ta, tb), a + b))
        if max(lengths.values()) <= max_len:
            return lengths
        freqs = {s: max(1, f >> 1) for s, f in freqs.items()}


def canonical_codes(lengths: dict[int, int]) -> dict[int, tuple[int, int]]:
    codes, code, prev = {}, 0, 0
    for sym, ln in sorted(lengths.items(), key=lambda kv: (kv[1], kv[0])):
        code <<= ln - prev
        codes[sym] = (code, ln)
        code += 1
        prev = ln
    return codes


def _payload_bits(symbols: _Symbols, truncated: bool) -> tuple[int, dict[int, int]]:
    counts = np.bincount(symbols.sym, minlength=256) if symbols.sym.size else np.zeros(256, int)
    freqs = {int(s): int(c) for s, c in enumerate(counts) if c}
    lengths = huffman_lengths(freqs)
    bits = 1 + (24 if truncated else 0) + 8 + 12 * len(lengths)
    bits += sum(freqs[s] * lengths[s] for s in freqs) + int(symbols.extra_len.sum())
    return bits, lengths


def _stream_bytes(payload_bits: int) -> int:
    return HEADER_BYTES + -(-payload_bits // 8)


def _write(symbols: _Symbols, lengths: dict[int, int], quality: int, width: int,
           height: int, coded_blocks: int | None) -> bytes:
    codes = canonical_codes(lengths)
    order = np.argsort(symbols.key, kind="stable")
    sym = symbols.sym[order]
    lut_code = np.zeros(256, dtype=np.int64)
    lut_len = np.zeros(256, dtype=np.int64)
    for s, (c, ln) in codes.items():
        lut_code[s], lut_len[s] = c, ln

    head_vals = [1 if coded_blocks is not None else 0]
    head_lens = [1]
    if coded_blocks is not None:
        head_vals.append(coded_blocks)
        head_lens.append(24)
    head_vals.append(len(lengths))
    head_lens.append(8)
    for s, ln in sorted(lengths.items()):
        head_vals += [s, ln]
        head_lens += [8, 4]

    vals = np.empty(2 * sym.size, dtype=np.int64)
    lens = np.empty(2 * sym.size, dtype=np.int64)
    vals[0::2], lens[0::2] = lut_code[sym], lut_len[sym]
    vals[1::2], lens[1::2] = symbols.extra[order], symbols.extra_len[order]
    vals = np.concatenate([np.asarray(head_vals, dtype=np.int64), vals])
    lens = np.concatenate([np.asarray(head_lens, dtype=np.int64), lens])

    total = int(lens.sum())
    starts = np.cumsum(lens) - lens
    owner = np.repeat(np.arange(lens.size), lens)
    offset = np.arange(total) - starts[owner]
    bits = (vals[owner] >> (lens[owner] - 1 - offset)) & 1
    header = MAGIC + bytes([quality]) + width.to_bytes(2, "big") + height.to_bytes(2, "big")
    return header + np.packbits(bits.astype(np.uint8)).tobytes()


# ---------------------------------------------------------------- encode

def encode_region(patch: RasterImage, budget_bits: int) -> SourceBitstream:
    """Highest quality whose stream fits ``budget_bits``, found by bisection."""
    if budget_bits < MIN_BUDGET_BITS:
        raise CodecError(f"budget {budget_bits} bits below codec minimum {MIN_BUDGET_BITS}")
    if patch.width > 0xFFFF or patch.height > 0xFFFF:
        raise CodecError("patch dimensions exceed 65535")
    budget_bytes = budget_bits // 8
    coefs, _, _ = _forward(patch.pixels)

    def measure(q):
        syms = _symbols(_quantize(coefs, q))
        bits, lengths = _payload_bits(syms, False)
        return _stream_bytes(bits) <= budget_bytes, syms, lengths

    fits, syms, lengths = measure(0)
    if not fits:
        return _encode_truncated(coefs, patch, budget_bytes)
    best = (0, syms, lengths)
    fits, syms, lengths = measure(MAX_QUALITY)
    if fits:
        best = (MAX_QUALITY, syms, lengths)
    else:
        lo, hi = 0, MAX_QUALITY
        while hi - lo > 1:
            mid = (lo + hi) // 2
            fits, syms, lengths = measure(mid)
            if fits:
                lo, best = mid, (mid, syms, lengths)
            else:
                hi = mid
    q, syms, lengths = best
    data = _write(syms, lengths, q, patch.width, patch.height, None)
    assert len(data) <= budget_bytes
    return SourceBitstream(data, q)


def _encode_truncated(coefs, patch, budget_bytes) -> SourceBitstream:
    q = _quantize(coefs, 0)

    def fits(count):
        syms = _symbols(q[:count])
        bits, lengths = _payload_bits(syms, True)
        return _stream_bytes(bits) <= budget_bytes, syms, lengths

    lo, hi = 0, q.shape[0]
    ok, syms, lengths = fits(0)
    best = (0, syms, lengths)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        ok, syms, lengths = fits(mid)
        if ok:
            lo, best = mid, (mid, syms, lengths)
        else:
            hi = mid
    count, syms, lengths = best
    data = _write(syms, lengths, 0, patch.width, patch.height, count)
    return SourceBitstream(data, 0, truncated=True)


# ---------------------------------------------------------------- decode

class _BitReader:
    def __init__(self, data: bytes):
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8)).astype(np.int64)
        self.nbits = bits.size
        padded = np.concatenate([bits, np.zeros(16, dtype=np.int64)])
        windows = np.lib.stride_tricks.sliding_window_view(padded, 16)[:self.nbits + 1]
        self.win = (windows @ (1 << np.arange(15, -1, -1))).tolist()
        self.pos = 0

    def read(self, n: int) -> int:
        if n == 0:
            return 0
        if self.pos + n > self.nbits:
            raise DecodeError("stream truncated")
        if n > 16:
            hi = self.read(n - 16)
            return (hi << 16) | self.read(16)
        v = self.win[self.pos] >> (16 - n)
        self.pos += n
        return v

    def peek15(self) -> int:
        if self.pos >= self.nbits:
            raise DecodeError("stream truncated")
        return self.win[self.pos] >> 1


def _read_table(reader: _BitReader):
    nsym = reader.read(8)
    entries = [(reader.read(8), reader.read(4)) for _ in range(nsym)]
    syms = [s for s, _ in entries]
    if len(set(syms)) != nsym or any(s > 254 for s in syms):
        raise DecodeError("corrupt Huffman table: bad symbols")
    if any(ln < 1 for _, ln in entries):
        raise DecodeError("corrupt Huffman table: zero code length")
    if sum(2.0 ** -ln for _, ln in entries) > 1.0 + 1e-12:
        raise DecodeError("corrupt Huffman table: over-subscribed lengths")
    lut_sym = [-1] * (1 << MAX_CODE_LEN)
    lut_len = [0] * (1 << MAX_CODE_LEN)
    for s, (c, ln) in canonical_codes(dict(entries)).items():
        lo = c << (MAX_CODE_LEN - ln)
        hi = (c + 1) << (MAX_CODE_LEN - ln)
        lut_sym[lo:hi] = [s] * (hi - lo)
        lut_len[lo:hi] = [ln] * (hi - lo)
    return lut_sym, lut_len


def _signed(v: int, size: int) -> int:
    if size == 0:
        return 0
    return v if v >= 1 << (size - 1) else v - (1 << size) + 1


def decode_stream(data: bytes) -> tuple[RasterImage, int, bool]:
    """Decode a stream to (image, quality, truncated)."""
    if len(data) < HEADER_BYTES:
        raise DecodeError("stream shorter than its header")
    if data[:2] != MAGIC:
        raise DecodeError("bad stream magic")
    quality = data[2]
    width = int.from_bytes(data[3:5], "big")
    height = int.from_bytes(data[5:7], "big")
    if width < 1 or height < 1:
        raise DecodeError(f"bad stream dims {width}x{height}")
    ph, pw = -(-height // 8) * 8, -(-width // 8) * 8
    total = (ph // 8) * (pw // 8) * 3
    reader = _BitReader(data[HEADER_BYTES:])
    truncated = bool(reader.read(1))
    count = reader.read(24) if truncated else total
    if count > total:
        raise DecodeError("coded block count exceeds image size")
    lut_sym, lut_len = _read_table(reader)

    def next_symbol():
        w = reader.peek15()
        s = lut_sym[w]
        if s < 0:
            raise DecodeError("invalid Huffman code")
        ln = lut_len[w]
        if reader.pos + ln > reader.nbits:
            raise DecodeError("stream truncated")
        reader.pos += ln
        return s

    q = np.zeros((total, 64), dtype=np.int64)
    diffs = np.zeros(total, dtype=np.int64)
    b = 0
    while b < count:
        s = next_symbol()
        if SYM_SKIP <= s < SYM_EOB:
            c = s - SYM_SKIP
            b += (1 << c) + reader.read(c)
            if b > count:
                raise DecodeError("empty-block run overruns image")
            continue
        if s > MAX_SIZE:
            raise DecodeError(f"unexpected symbol {s} at block start")
        diffs[b] = _signed(reader.read(s), s)
        pos = 1
        while pos < 64:
            s = next_symbol()
            if s == SYM_EOB:
                break
            if s == SYM_ZRL:
                pos += 16
                continue
            if s < SYM_AC:
                raise DecodeError(f"unexpected symbol {s} inside block")
            run, size = divmod(s - SYM_AC, MAX_SIZE)
            pos += run
            if pos > 63:
                raise DecodeError("AC coefficient index past block end")
            q[b, pos] = _signed(reader.read(size + 1), size + 1)
            pos += 1
        b += 1

    pad = (-total) % 3
    d3 = np.concatenate([diffs, np.zeros(pad, dtype=np.int64)]).reshape(-1, 3)
    q[:, 0] = np.cumsum(d3, axis=0).ravel()[:total]
    q[count:] = 0
    zz = q.astype(np.float64) * quant_step(quality)
    return RasterImage(_inverse(zz, ph, pw, width, height)), quality, truncated


def decode_region(stream: SourceBitstream | bytes, bbox: BBox, kind: str = "object",
                  category_id: int = 0) -> RegionPatch:
    data = stream.data if isinstance(stream, SourceBitstream) else bytes(stream)
    image, _, _ = decode_stream(data)
    if (image.width, image.height) != (bbox.w, bbox.h):
        raise DecodeError(f"stream is {image.width}x{image.height}, bbox is {bbox.w}x{bbox.h}")
    return RegionPatch(kind, bbox, category_id, image)


def gray_patch(bbox: BBox, kind: str = "object", category_id: int = 0) -> RegionPatch:
    return RegionPatch(kind, bbox, category_id, RasterImage.filled(bbox.w, bbox.h))


# ---------------------------------------------------------------- regions

WHITE = (255, 255, 255)


def extract_regions(image: RasterImage, bboxes, category_ids=None):
    """Object crops in the given order, and the background with boxes painted white."""
    bboxes = list(bboxes)
    category_ids = list(category_ids) if category_ids is not None else [0] * len(bboxes)
    background = image.pixels.copy()
    objects = []
    for bbox, cat in zip(bboxes, category_ids):
        if not bbox.fits(image.width, image.height):
            raise CodecError(f"bbox {bbox.as_list()} outside image")
        objects.append(RegionPatch("object", bbox, cat, image.crop(bbox)))
    for bbox in bboxes:
        rows, cols = bbox.slices()
        background[rows, cols] = WHITE
    full = BBox(0, 0, image.width, image.height)
    return RegionPatch("background", full, 0, RasterImage(background)), objects


def reassemble(background: RegionPatch, objects) -> RasterImage:
    canvas = background.pixels.pixels.copy()
    h, w = canvas.shape[:2]
    for patch in objects:
        if not patch.bbox.fits(w, h):
            raise CodecError(f"bbox {patch.bbox.as_list()} outside {w}x{h} canvas")
        rows, cols = patch.bbox.slices()
        canvas[rows, cols] = patch.pixels.pixels
    return RasterImage(canvas)


def ordering(bboxes) -> list[int]:
    """Transmit order: raster order of box centres, ties by original position."""
    bboxes = list(bboxes)
    return sorted(range(len(bboxes)),
                  key=lambda i: (bboxes[i].center[1], bboxes[i].center[0], i))


# ---------------------------------------------------------------- external codec

class ExternalCodec:
    """Shell-out adapter for an external image codec (e.g. a BPG build).

    ``encode_cmd`` and ``decode_cmd`` are templates with ``{input}``,
    ``{output}`` and (encode only) ``{quality}`` fields; quality 0 is the
    finest setting, as with BPG's ``-q``. Rate control bisects the quality
    flag to the finest value whose output fits the budget.
    """

    def __init__(self, encode_cmd: str, decode_cmd: str, quality_range=(0, 51),
                 suffix: str = ".bin"):
        self.encode_cmd = encode_cmd
        self.decode_cmd = decode_cmd
        self.quality_range = quality_range
        self.suffix = suffix

    def _run(self, template: str, **fields) -> None:
        cmd = [part.format(**fields) for part in shlex.split(template)]
        subprocess.run(cmd, check=True, capture_output=True)

    def _encode_at(self, src: str, quality: int, tmp: str) -> bytes:
        out = os.path.join(tmp, f"q{quality}{self.suffix}")
        self._run(self.encode_cmd, input=src, output=out, quality=quality)
        with open(out, "rb") as fh:
            return fh.read()

    def encode(self, patch: RasterImage, budget_bits: int) -> tuple[bytes, int]:
        budget = budget_bits // 8
        with tempfile.TemporaryDirectory() as tmp:
            src = os.path.join(tmp, "in.ppm")
            save_image(patch, src)
            finest, coarsest = self.quality_range
            data = self._encode_at(src, coarsest, tmp)
            if len(data) > budget:
                raise CodecError(f"external codec cannot meet {budget_bits} bits")
            best = (data, coarsest)
            lo, hi = finest, coarsest
            while lo < hi:
                mid = (lo + hi) // 2
                data = self._encode_at(src, mid, tmp)
                if len(data) <= budget:
                    best, hi = (data, mid), mid
                else:
                    lo = mid + 1
            return best

    def decode(self, data: bytes) -> RasterImage:
        with tempfile.TemporaryDirectory() as tmp:
            src = os.path.join(tmp, "in" + self.suffix)
            out = os.path.join(tmp, "out.ppm")
            with open(src, "wb") as fh:
                fh.write(data)
            self._run(self.decode_cmd, input=src, output=out)
            return load_image(out)

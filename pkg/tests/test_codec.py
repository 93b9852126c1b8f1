import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import textured
from pragcomm import codec
from pragcomm.codec import (HEADER_BYTES, MIN_BUDGET_BITS, CodecError, DecodeError,
                            ExternalCodec, canonical_codes, decode_region, decode_stream,
                            encode_region, extract_regions, huffman_lengths, ordering,
                            quant_step, reassemble)
from pragcomm.metrics import psnr
from pragcomm.scene import BBox, RasterImage


def test_flat_patch_fits_minimum_budget():
    patch = RasterImage.filled(64, 64, (30, 200, 90))
    s = encode_region(patch, MIN_BUDGET_BITS)
    assert len(s.data) * 8 <= MIN_BUDGET_BITS and not s.truncated
    assert psnr(patch, decode_region(s, BBox(0, 0, 64, 64)).pixels) > 45


def test_random_block_near_lossless_at_max_budget():
    rng = np.random.default_rng(4)
    patch = RasterImage(rng.integers(0, 256, (8, 8, 3), dtype=np.uint8))
    s = encode_region(patch, 1 << 20)
    assert s.quality == codec.MAX_QUALITY
    assert psnr(patch, decode_region(s, BBox(0, 0, 8, 8)).pixels) >= 45


def test_loopback_huge_budget():
    patch = textured(70, 53, seed=2)
    out = decode_region(encode_region(patch, 1 << 22), BBox(3, 4, 53, 70))
    assert (out.pixels.width, out.pixels.height) == (53, 70)
    assert psnr(patch, out.pixels) >= 45


def test_header_layout():
    s = encode_region(textured(20, 300), 4000)
    assert s.data[:2] == b"PC"
    assert s.data[2] == s.quality
    assert int.from_bytes(s.data[3:5], "big") == 300
    assert int.from_bytes(s.data[5:7], "big") == 20
    assert s.declared_len == len(s.data)


def test_budget_below_minimum():
    with pytest.raises(CodecError):
        encode_region(RasterImage.filled(8, 8), MIN_BUDGET_BITS - 1)


def test_truncated_stream_fills_gray():
    rng = np.random.default_rng(0)
    # random black/white 8x8 blocks: every DC survives even the coarsest step
    blocks = rng.integers(0, 2, (32, 32, 3)).astype(np.uint8) * 255
    patch = RasterImage(np.kron(blocks, np.ones((8, 8, 1), dtype=np.uint8)))
    s = encode_region(patch, MIN_BUDGET_BITS)
    assert s.truncated and len(s.data) * 8 <= MIN_BUDGET_BITS
    img, q, trunc = decode_stream(s.data)
    assert trunc and q == 0
    assert (img.pixels[-8:, -8:] == 128).all()


def test_cut_stream_raises():
    s = encode_region(textured(40, 40), 6000)
    with pytest.raises(DecodeError):
        decode_stream(s.data[:len(s.data) // 2])
    with pytest.raises(DecodeError):
        decode_stream(s.data[:HEADER_BYTES - 1])
    with pytest.raises(DecodeError):
        decode_stream(b"XX" + s.data[2:])


def test_decode_dimension_mismatch():
    s = encode_region(textured(16, 16), 3000)
    with pytest.raises(DecodeError):
        decode_region(s, BBox(0, 0, 16, 17))


def test_decode_deterministic():
    s = encode_region(textured(33, 47, seed=5), 3000)
    a = decode_region(s, BBox(0, 0, 47, 33)).pixels
    b = decode_region(s.data, BBox(0, 0, 47, 33)).pixels
    assert a == b


@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2 ** 16),
       st.integers(MIN_BUDGET_BITS, 20_000))
@settings(max_examples=60, deadline=None)
def test_budget_compliance_and_dims(h, w, seed, budget):
    rng = np.random.default_rng(seed)
    patch = RasterImage(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))
    s = encode_region(patch, budget)
    assert len(s.data) * 8 <= budget
    img, _, _ = decode_stream(s.data)
    assert (img.width, img.height) == (w, h)


@given(st.integers(0, 1000), st.integers(400, 6000), st.integers(1, 6000))
@settings(max_examples=30, deadline=None)
def test_quality_monotone_in_budget(seed, b1, extra):
    patch = textured(48, 48, seed)
    lo = decode_stream(encode_region(patch, b1).data)[0]
    hi = decode_stream(encode_region(patch, b1 + extra).data)[0]
    assert psnr(patch, hi) >= psnr(patch, lo) - 0.1


def test_quant_step_decreasing():
    steps = [quant_step(q) for q in range(256)]
    assert all(b < a for a, b in zip(steps, steps[1:]))


@given(st.dictionaries(st.integers(0, 254), st.integers(1, 10_000), min_size=1, max_size=255))
@settings(max_examples=100)
def test_huffman_is_prefix_free_and_limited(freqs):
    lengths = huffman_lengths(freqs)
    assert set(lengths) == set(freqs)
    assert max(lengths.values()) <= codec.MAX_CODE_LEN
    assert sum(2.0 ** -l for l in lengths.values()) <= 1.0 + 1e-12
    codes = canonical_codes(lengths)
    words = [format(c, f"0{n}b") for c, n in codes.values()]
    for a in words:
        for b in words:
            assert a == b or not b.startswith(a)


# ---------------------------------------------------------------- regions

def test_extract_no_objects_is_identity():
    img = textured(30, 30)
    bg, objs = extract_regions(img, [])
    assert bg.pixels == img and objs == []


def test_extract_full_box_all_white():
    img = textured(30, 30)
    bg, objs = extract_regions(img, [BBox(0, 0, 30, 30)])
    assert (bg.pixels.pixels == 255).all()
    assert objs[0].pixels == img


def test_extract_pixel_scan():
    img = textured(50, 60, seed=9)
    boxes = [BBox(2, 3, 10, 12), BBox(30, 20, 25, 20)]
    bg, objs = extract_regions(img, boxes, [4, 7])
    inside = np.zeros((50, 60), dtype=bool)
    for b in boxes:
        inside[b.slices()] = True
    assert (bg.pixels.pixels[inside] == 255).all()
    assert np.array_equal(bg.pixels.pixels[~inside], img.pixels[~inside])
    assert [o.category_id for o in objs] == [4, 7]
    assert objs[1].pixels == img.crop(boxes[1])


def test_reassemble_rules():
    bg = codec.RegionPatch("background", BBox(0, 0, 10, 10), 0, RasterImage.filled(10, 10, (1, 1, 1)))
    assert reassemble(bg, []) == bg.pixels
    full = codec.RegionPatch("object", BBox(0, 0, 10, 10), 0, RasterImage.filled(10, 10, (9, 9, 9)))
    assert reassemble(bg, [full]) == full.pixels
    a = codec.RegionPatch("object", BBox(0, 0, 6, 6), 0, RasterImage.filled(6, 6, (50, 0, 0)))
    b = codec.RegionPatch("object", BBox(4, 4, 6, 6), 0, RasterImage.filled(6, 6, (0, 50, 0)))
    out = reassemble(bg, [a, b]).pixels
    assert tuple(out[5, 5]) == (0, 50, 0) and tuple(out[1, 1]) == (50, 0, 0)
    with pytest.raises(CodecError):
        reassemble(bg, [codec.RegionPatch("object", BBox(8, 8, 4, 4), 0, RasterImage.filled(4, 4))])


def test_extract_then_reassemble_is_lossless():
    img = textured(64, 64, seed=3)
    boxes = [BBox(0, 0, 20, 20), BBox(10, 10, 30, 30), BBox(40, 5, 20, 50)]
    bg, objs = extract_regions(img, boxes)
    assert reassemble(bg, objs) == img


def test_ordering_examples():
    # centres as (y, x): (10, 10) and (5, 90), the smaller y goes first
    assert ordering([BBox(5, 5, 10, 10), BBox(85, 0, 10, 10)]) == [1, 0]
    # same row: left to right
    assert ordering([BBox(40, 0, 10, 10), BBox(0, 0, 10, 10)]) == [1, 0]
    # identical centres keep their original order
    assert ordering([BBox(0, 0, 4, 4), BBox(1, 1, 2, 2)]) == [0, 1]


@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50), st.integers(1, 20),
                          st.integers(1, 20)), max_size=15))
def test_ordering_is_sorted_permutation(raw):
    boxes = [BBox(*r) for r in raw]
    order = ordering(boxes)
    assert sorted(order) == list(range(len(boxes)))
    keys = [(boxes[i].center[1], boxes[i].center[0], i) for i in order]
    assert keys == sorted(keys)


# ---------------------------------------------------------------- external adapter

FAKE = """
import sys
mode, src, dst = sys.argv[1:4]
data = open(src, "rb").read()
if mode == "enc":
    q = int(sys.argv[4])
    open(dst, "wb").write(bytes([q]) + data[: max(1, len(data) >> (q // 8))])
else:
    open(dst, "wb").write(b"P6\\n2 2\\n255\\n" + bytes(12))
"""


def test_external_codec_bisects_quality(tmp_path):
    script = tmp_path / "fake.py"
    script.write_text(FAKE)
    ext = ExternalCodec(f"{sys.executable} {script} enc {{input}} {{output}} {{quality}}",
                        f"{sys.executable} {script} dec {{input}} {{output}}")
    patch = textured(16, 16)
    data, q = ext.encode(patch, 8 * 200)
    assert len(data) <= 200 and data[0] == q
    # 781-byte PPM: q=16 keeps 781 >> 2 = 195 bytes (+1), q=15 would keep 390
    assert q == 16
    assert ext.decode(data).width == 2
    with pytest.raises(CodecError):
        ext.encode(patch, 8)

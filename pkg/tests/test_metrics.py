import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import textured
from pragcomm.metrics import (LEVELS, PSNR_CAP, MetricError, MetricReport, build_masks,
                              evaluate, gaussian_window, luminance, psnr, ssim, window_mask)
from pragcomm.scene import BBox, Intention, ObjectAnnotation, RasterImage, SceneDescription


def naive_ssim(a, b, mask=None):
    """Window-by-window SSIM straight from the weighted moments."""
    x, y = luminance(a), luminance(b)
    g = np.outer(gaussian_window(), gaussian_window())
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    vals = []
    for i in range(x.shape[0] - 10):
        for j in range(x.shape[1] - 10):
            if mask is not None and not mask[i:i + 11, j:j + 11].all():
                continue
            wx, wy = x[i:i + 11, j:j + 11], y[i:i + 11, j:j + 11]
            mx, my = (g * wx).sum(), (g * wy).sum()
            vx = (g * (wx - mx) ** 2).sum()
            vy = (g * (wy - my) ** 2).sum()
            cxy = (g * (wx - mx) * (wy - my)).sum()
            vals.append((2 * mx * my + c1) * (2 * cxy + c2)
                        / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


def _pair(seed, h=30, w=36, noise=20):
    a = textured(h, w, seed)
    rng = np.random.default_rng(seed + 100)
    b = np.clip(a.pixels.astype(int) + rng.integers(-noise, noise + 1, a.pixels.shape), 0, 255)
    return a, RasterImage(b.astype(np.uint8))


# ---------------------------------------------------------------- psnr

def test_psnr_examples():
    a = RasterImage.filled(4, 4, (100, 100, 100))
    b = RasterImage.filled(4, 4, (110, 110, 110))
    assert psnr(a, b) == pytest.approx(10 * math.log10(255 ** 2 / 100))
    assert psnr(a, a) == PSNR_CAP
    c = a.pixels.copy()
    c[0, 0, 0] = 101          # mse = 1/48
    assert psnr(a, c) == pytest.approx(10 * math.log10(255 ** 2 * 48))


def test_psnr_masked_region_only():
    a = RasterImage.filled(10, 10, (0, 0, 0))
    b = a.pixels.copy()
    b[:, 5:] = 50
    m = np.zeros((10, 10), bool)
    m[:, :5] = True
    assert psnr(a, b, m) == PSNR_CAP
    assert psnr(a, b, ~m) == pytest.approx(10 * math.log10(255 ** 2 / 2500))


def test_psnr_full_mask_equals_global():
    a, b = _pair(1)
    assert psnr(a, b, np.ones((30, 36), bool)) == psnr(a, b)


def test_metric_errors():
    a = RasterImage.filled(12, 12)
    with pytest.raises(MetricError):
        psnr(a, RasterImage.filled(12, 13))
    with pytest.raises(MetricError):
        psnr(a, a, np.zeros((12, 12), bool))
    with pytest.raises(MetricError):
        psnr(a, a, np.ones((3, 3), bool))
    with pytest.raises(MetricError):
        ssim(RasterImage.filled(10, 10), RasterImage.filled(10, 10))
    m = np.zeros((12, 12), bool)
    m[:5, :5] = True
    with pytest.raises(MetricError):
        ssim(a, a, m)


# ---------------------------------------------------------------- ssim

@pytest.mark.parametrize("seed", range(3))
def test_ssim_matches_naive(seed):
    a, b = _pair(seed)
    assert ssim(a, b) == pytest.approx(naive_ssim(a, b), abs=1e-9)


def test_masked_ssim_matches_naive():
    a, b = _pair(7, 40, 40)
    m = np.zeros((40, 40), bool)
    m[3:30, 10:38] = True
    assert ssim(a, b, m) == pytest.approx(naive_ssim(a, b, m), abs=1e-9)


def test_ssim_identity_and_symmetry():
    a, b = _pair(4)
    assert ssim(a, a) == pytest.approx(1.0)
    assert ssim(a, b) == pytest.approx(ssim(b, a))
    assert ssim(a, b) < 1.0


def test_window_mask_counts():
    m = np.zeros((20, 20), bool)
    m[2:15, 4:16] = True       # 13 x 12 block holds 3 x 2 windows
    assert window_mask(m).sum() == 6
    assert window_mask(np.ones((11, 11), bool)).shape == (1, 1)


@given(st.integers(0, 2 ** 16), st.integers(11, 24), st.integers(11, 24))
@settings(max_examples=25, deadline=None)
def test_ssim_bounded_and_symmetric(seed, h, w):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
    b = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
    s = ssim(a, b)
    assert -1.0 <= s <= 1.0
    assert s == pytest.approx(ssim(b, a), abs=1e-12)


# ---------------------------------------------------------------- masks

def _scene():
    objs = (ObjectAnnotation(0, "dog", "a dog", BBox(0, 0, 20, 20)),
            ObjectAnnotation(1, "cat", "a cat", BBox(10, 10, 20, 20)),
            ObjectAnnotation(2, "car", "a car", BBox(30, 30, 10, 10)),
            ObjectAnnotation(3, "bus", "a bus", BBox(0, 35, 5, 5)))
    return SceneDescription("s", 40, 40, "a dog, a cat and a car", objs)


INTENT = Intention("the dog, maybe a kitty", (("dog", 3), ("cat", 2), ("car", 1)))


def test_mask_precedence_and_disjointness():
    m = build_masks(INTENT, _scene())
    assert m[3].sum() == 400
    assert m[2].sum() == 400 - 100        # overlap goes to the dog
    assert m[1].sum() == 100
    total = sum(m[lv].astype(int) for lv in LEVELS)
    assert total.max() == 1
    assert not total[35:, :5].any()       # the bus is not targeted
    assert m.present() == [3, 2, 1]


def test_evaluate_skips_absent_levels():
    scene = _scene()
    intent = Intention("the dog", (("dog", 3),))
    a, b = _pair(2, 40, 40)
    rep = evaluate(a, b, build_masks(intent, scene), "s", "m")
    assert [r["region"] for r in rep.rows] == ["global", "level3"]
    assert rep.get("s", "m", "level3")["psnr"] == psnr(a, b, build_masks(intent, scene)[3])


def test_level3_beats_level1_when_only_level3_is_clean():
    scene = _scene()
    masks = build_masks(INTENT, scene)
    a = textured(40, 40, 9)
    rng = np.random.default_rng(0)
    noisy = np.clip(a.pixels.astype(int) + rng.integers(-40, 41, a.pixels.shape), 0, 255)
    b = np.where(masks[3][..., None], a.pixels, noisy).astype(np.uint8)
    rep = evaluate(a, b, masks, "s", "m")
    assert rep.get("s", "m", "level3")["psnr"] == PSNR_CAP
    assert rep.get("s", "m", "level3")["psnr"] > rep.get("s", "m", "level1")["psnr"] + 10
    # the level-1 box is 10 x 10, too small for a full window
    assert rep.get("s", "m", "level1")["ssim"] is None


def test_report_csv_and_summary():
    rep = MetricReport()
    rep.add("a", "x", "global", 30.0, 0.9)
    rep.add("b", "x", "global", 40.0, 0.7, lost=1)
    rep.add("a", "x", "level3", None, None)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "image_id,method,region,psnr,ssim,lost_regions"
    assert lines[2] == "b,x,global,40.000000,0.70000000,1"
    assert lines[3] == "a,x,level3,,,0"
    s = rep.summary()["x"]
    assert s["global"]["psnr"] == 35.0 and s["global"]["ssim"] == pytest.approx(0.8)
    assert s["level3"]["psnr"] is None and s["level2"]["images"] == 0

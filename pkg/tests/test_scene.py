import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pragcomm.scene import (BBox, ChannelState, ImageFormatError, Intention, MatchLevel,
                            ObjectAnnotation, RasterImage, SceneDescription, SceneError,
                            load_image, load_scene, save_image, save_scene, scene_from_dict,
                            scene_to_dict)


def _write(tmp_path, data, name="scene.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data), encoding="utf-8")
    return p


def test_minimal_scene_without_objects(tmp_path):
    p = _write(tmp_path, {"image_id": "x", "width": 4, "height": 3, "global_caption": "",
                          "objects": []})
    s = load_scene(p)
    assert s.objects == () and (s.width, s.height) == (4, 3)


def test_bbox_outside_image_names_object(tmp_path):
    p = _write(tmp_path, {"image_id": "x", "width": 10, "height": 10, "global_caption": "",
                          "objects": [{"index": 7, "category": "dog", "caption": "",
                                       "bbox": [5, 0, 6, 2]}]})
    with pytest.raises(SceneError, match="object 7"):
        load_scene(p)


def test_parse_error_carries_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"image_id": "x",\n "width": }', encoding="utf-8")
    with pytest.raises(SceneError, match="line 2"):
        load_scene(p)


def test_bad_field_type_is_named(tmp_path):
    p = _write(tmp_path, {"image_id": "x", "width": "10", "height": 10})
    with pytest.raises(SceneError, match="width"):
        load_scene(p)


def test_duplicate_index_rejected():
    o = ObjectAnnotation(0, "dog", "", BBox(0, 0, 1, 1))
    with pytest.raises(SceneError, match="duplicate"):
        SceneDescription("x", 4, 4, "", (o, o))


def test_category_lowercased_multiword_kept(tmp_path):
    p = _write(tmp_path, {"image_id": "x", "width": 10, "height": 10, "global_caption": "",
                          "objects": [{"index": 0, "category": "Traffic Light", "caption": "",
                                       "bbox": [0, 0, 2, 2]}]})
    assert load_scene(p).objects[0].category == "traffic light"


def test_two_object_fixture_roundtrips_byte_identical(tmp_path):
    scene = SceneDescription("img1", 64, 48, "a dog and a cat", (
        ObjectAnnotation(0, "dog", "a brown dog", BBox(1, 2, 30, 20)),
        ObjectAnnotation(3, "cat", "a cat asleep", BBox(33, 10, 31, 38)),
    ))
    first = tmp_path / "a.json"
    second = tmp_path / "b.json"
    save_scene(scene, first)
    loaded = load_scene(first)
    save_scene(loaded, second)
    assert loaded == scene
    assert first.read_bytes() == second.read_bytes()


@st.composite
def scenes(draw):
    w = draw(st.integers(1, 200))
    h = draw(st.integers(1, 200))
    n = draw(st.integers(0, 5))
    objs = []
    for i in range(n):
        bw = draw(st.integers(1, w))
        bh = draw(st.integers(1, h))
        x = draw(st.integers(0, w - bw))
        y = draw(st.integers(0, h - bh))
        cat = draw(st.sampled_from(["dog", "cat", "traffic light", "car"]))
        cap = draw(st.text(max_size=20))
        objs.append(ObjectAnnotation(i * 2, cat, cap, BBox(x, y, bw, bh)))
    return SceneDescription(draw(st.text(min_size=1, max_size=8)), w, h,
                            draw(st.text(max_size=30)), tuple(objs))


@given(scenes())
@settings(max_examples=60, deadline=None)
def test_scene_dict_roundtrip(scene):
    assert scene_from_dict(json.loads(json.dumps(scene_to_dict(scene)))) == scene


def test_white_pixel_roundtrip(tmp_path):
    img = RasterImage.filled(1, 1, (255, 255, 255))
    save_image(img, tmp_path / "w.ppm")
    assert load_image(tmp_path / "w.ppm").samples == img.samples


def test_gradient_roundtrip(tmp_path):
    y, x = np.mgrid[0:256, 0:256]
    px = np.stack([x, y, (x + y) // 2], axis=-1).astype(np.uint8)
    img = RasterImage(px)
    save_image(img, tmp_path / "g.ppm")
    assert load_image(tmp_path / "g.ppm").samples == img.samples


def test_zero_byte_file_is_truncated(tmp_path):
    p = tmp_path / "empty.ppm"
    p.write_bytes(b"")
    with pytest.raises(ImageFormatError, match="truncated"):
        load_image(p)


def test_short_body_is_truncated(tmp_path):
    p = tmp_path / "short.ppm"
    p.write_bytes(b"P6\n4 4\n255\n" + bytes(10))
    with pytest.raises(ImageFormatError, match="truncated"):
        load_image(p)


def test_unsupported_format(tmp_path):
    p = tmp_path / "x.bmp"
    p.write_bytes(b"BM" + bytes(40))
    with pytest.raises(ImageFormatError, match="unsupported"):
        load_image(p)


def test_ppm_header_comments(tmp_path):
    p = tmp_path / "c.ppm"
    p.write_bytes(b"P6\n# made by hand\n2 1\n255\n" + bytes([1, 2, 3, 4, 5, 6]))
    assert load_image(p).samples == bytes([1, 2, 3, 4, 5, 6])


def test_match_level_order_and_parse():
    assert MatchLevel.LOW < MatchLevel.MEDIUM < MatchLevel.HIGH
    assert MatchLevel.parse("high") is MatchLevel.HIGH
    assert MatchLevel.parse(2) is MatchLevel.MEDIUM
    with pytest.raises(ValueError):
        MatchLevel.parse("maybe")


def test_intention_and_channel_invariants():
    with pytest.raises(ValueError):
        Intention("")
    with pytest.raises(ValueError):
        Intention("x", (("dog", 4),))
    with pytest.raises(ValueError):
        ChannelState(code_rate=0.0)
    i = Intention("a dog", (("dog", 3),))
    assert Intention.from_dict(i.to_dict()) == i

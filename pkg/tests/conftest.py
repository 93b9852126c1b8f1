import numpy as np
import pytest

from pragcomm.kb import KnowledgeBase, RdCurve
from pragcomm.phy import ldpc
from pragcomm.scene import BBox, ChannelState, ObjectAnnotation, RasterImage, SceneDescription

CHANNEL = ChannelState()
KEY = CHANNEL.key

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, name): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    number, name = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _CRITERIA[number] = (name, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        name, verdict, detail = _CRITERIA[n]
        line = f"criterion {n:2d} {verdict}  {name}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))


@pytest.fixture(scope="session")
def code():
    return ldpc.build_code(0)


@pytest.fixture
def channel():
    return CHANNEL


def hand_kb() -> KnowledgeBase:
    """Two-point curves that make every query a one-line interpolation."""
    return KnowledgeBase([
        RdCurve("a", KEY, ((1000, 24.0), (9000, 38.0))),
        RdCurve("b", KEY, ((2000, 24.0), (16000, 38.0))),
        RdCurve("c", KEY, ((500, 24.0), (4000, 38.0))),
        RdCurve("*", KEY, ((1000, 20.0), (3000, 30.0))),
    ])


@pytest.fixture
def kb3():
    return hand_kb()


def three_object_scene() -> SceneDescription:
    """100x100 image; areas 2000, 1000, 1000 px; 60% uncovered."""
    return SceneDescription("fixture", 100, 100, "a, b and c", (
        ObjectAnnotation(0, "a", "an a", BBox(0, 0, 50, 40)),
        ObjectAnnotation(1, "b", "a b", BBox(50, 0, 50, 20)),
        ObjectAnnotation(2, "c", "a c", BBox(0, 50, 20, 50)),
    ))


@pytest.fixture
def scene3():
    return three_object_scene()


def textured(h: int, w: int, seed: int = 0) -> RasterImage:
    """Smooth gradients plus moderate noise, kept away from 0 and 255."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:h, 0:w]
    base = 128 + 40 * np.sin(x / 9.0)[..., None] * np.array([1.0, 0.6, -0.4])
    base = base + 25 * np.cos(y / 13.0)[..., None]
    img = base + rng.normal(0, 12, (h, w, 3))
    return RasterImage(np.clip(np.rint(img), 10, 245).astype(np.uint8))

import itertools
import json
import math
from fractions import Fraction

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import CHANNEL, KEY, hand_kb, three_object_scene
from pragcomm.allocation import (MIN_REGION_BITS, AllocationPlan, InfeasibleBudget,
                                 SimilarityTargetTable, allocate, background_area_share,
                                 direct_score_allocate, expected_similarity, importance,
                                 linear_fixed_bits, relevance, split_pool, uniform_plan,
                                 weighted_plan)
from pragcomm.kb import KnowledgeBase, RdCurve
from pragcomm.matcher import MatchTriple
from pragcomm.phy.link import wire_cost
from pragcomm.scene import BBox, ChannelState, MatchLevel, ObjectAnnotation, SceneDescription

LEVELS = list(MatchLevel)
POOL_AT_10K = 12 * 3072


def _hand_split(weights, pool):
    """Floor each exact share, hand the remainder to the largest fractions."""
    total = sum(weights)
    exact = [Fraction(pool) * w / total for w in weights]
    base = [math.floor(e) for e in exact]
    order = sorted(range(len(exact)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:pool - sum(base)]:
        base[i] += 1
    return base


def _hand_plan(kb_bits):
    """Factors for the three-object fixture: areas 0.2, 0.1, 0.1, background 0.6."""
    areas = [Fraction(1, 5), Fraction(1, 10), Fraction(1, 10), Fraction(3, 5)]
    total = sum(kb_bits)
    factors = [Fraction(1, 2) * a + Fraction(1, 2) * Fraction(b, total)
               for a, b in zip(areas, kb_bits)]
    return factors, _hand_split(factors, POOL_AT_10K)


# ---------------------------------------------------------------- relevance

@pytest.mark.parametrize("c,g,o", list(itertools.product(LEVELS, repeat=3)))
def test_relevance_closed_form(c, g, o):
    assert relevance(MatchTriple(c, g, o)) == 2 * c + (g - 2) + (o - 2)


def test_relevance_examples_and_image():
    H, M, L = MatchLevel.HIGH, MatchLevel.MEDIUM, MatchLevel.LOW
    assert relevance(MatchTriple(H, H, H)) == 8
    assert relevance(MatchTriple(L, L, L)) == 0
    assert relevance(MatchTriple(M, H, L)) == 4
    image = {relevance(MatchTriple(*t)) for t in itertools.product(LEVELS, repeat=3)}
    assert image == set(range(9))


@given(st.sampled_from(LEVELS), st.sampled_from(LEVELS), st.sampled_from(LEVELS),
       st.integers(0, 2))
def test_relevance_strictly_monotone(c, g, o, pos):
    t = [c, g, o]
    assume(t[pos] < MatchLevel.HIGH)
    up = list(t)
    up[pos] = MatchLevel(t[pos] + 1)
    assert relevance(MatchTriple(*up)) > relevance(MatchTriple(*t))


# ---------------------------------------------------------------- targets, importance

def test_default_similarity_table():
    assert expected_similarity(0) == 24.0
    assert expected_similarity(8) == 38.0
    assert expected_similarity(4) == 31.0
    with pytest.raises(ValueError):
        expected_similarity(9)
    with pytest.raises(ValueError):
        SimilarityTargetTable((30.0, 20.0) + (40.0,) * 7)


def _flat_kb(bits_by_cat):
    return KnowledgeBase([RdCurve(c, KEY, ((b, 0.0),)) for c, b in bits_by_cat.items()])


def test_importance_examples():
    assert importance([("x", 3)], _flat_kb({"x": 700}), CHANNEL) == [1.0]
    kb = _flat_kb({"x": 3000, "y": 1000})
    assert importance([("x", 1), ("y", 1)], kb, CHANNEL) == [0.75, 0.25]
    assert importance([("x", 5), ("x", 5)], kb, CHANNEL) == [0.5, 0.5]
    assert importance([("z", 0), ("z", 0)], _flat_kb({"z": 0}), CHANNEL) == [0.5, 0.5]
    with pytest.raises(ValueError):
        importance([], kb, CHANNEL)


# ---------------------------------------------------------------- hand oracle

def test_allocate_matches_hand_oracle(scene3, kb3):
    # kb bits: a@38 dB 9000, b@27.5 dB 2000 + 14000*3.5/14 = 5500, c@24 dB 500,
    # background on "*" @24 dB 1000 + 2000*4/10 = 1800
    factors, bits = _hand_plan([9000, 5500, 500, 1800])
    plan = allocate(scene3, [8, 2, 0], CHANNEL, kb3)
    assert plan.source_pool_bits == POOL_AT_10K
    assert plan.details["kb_bits"] == [9000, 5500, 500, 1800]
    got = [e.source_bits for e in plan.objects] + [plan.background_bits]
    assert got == bits
    for e, f in zip(plan.objects, factors):
        assert e.factor == pytest.approx(float(f), abs=1e-12)
    assert plan.background_factor == pytest.approx(float(factors[-1]), abs=1e-12)
    assert plan.projected_wire_bytes() <= 10_000


def test_no_voting_matches_hand_oracle(scene3, kb3):
    # stub scores 6, 0, 3: a@34.5 -> 7000, b@24 -> 2000, c@29.25 -> 1812.5 -> 1813
    _, bits = _hand_plan([7000, 2000, 1813, 1800])
    plan = direct_score_allocate(scene3, [6, 0, 3], CHANNEL, "no_voting", kb=kb3)
    assert [e.source_bits for e in plan.objects] + [plan.background_bits] == bits
    assert plan.method == "no_voting"


def test_no_kb_uses_fixed_bits(scene3):
    fixed = linear_fixed_bits()
    _, bits = _hand_plan([fixed[8], fixed[2], fixed[0], fixed[0]])
    plan = direct_score_allocate(scene3, [8, 2, 0], CHANNEL, "no_kb")
    assert [e.source_bits for e in plan.objects] + [plan.background_bits] == bits


# ---------------------------------------------------------------- examples

def test_whole_image_object_gets_at_least_its_importance_share(kb3):
    scene = SceneDescription("s", 64, 64, "", (ObjectAnnotation(0, "a", "", BBox(0, 0, 64, 64)),))
    assert background_area_share(scene) == 0.0
    plan = allocate(scene, [8], CHANNEL, kb3)
    imp = importance([("a", 8), ("*", 0)], kb3, CHANNEL)[0]
    assert plan.objects[0].factor >= 0.5 * imp
    assert plan.total_bits == plan.source_pool_bits


def _pair(cat_a="a", cat_b="a"):
    return SceneDescription("s", 100, 100, "", (
        ObjectAnnotation(0, cat_a, "", BBox(0, 0, 40, 40)),
        ObjectAnnotation(1, cat_b, "", BBox(50, 50, 40, 40))))


def test_symmetric_objects_get_equal_bits(kb3):
    plan = allocate(_pair(), [5, 5], CHANNEL, kb3)
    a, b = plan.objects
    assert abs(a.source_bits - b.source_bits) <= 1


def test_no_kb_equal_scores_equal_bits():
    plan = direct_score_allocate(_pair("a", "b"), [3, 3], CHANNEL, "no_kb")
    a, b = plan.objects
    assert abs(a.source_bits - b.source_bits) <= 1


def test_no_kb_uniform_fixed_bits_ignore_category():
    plan = direct_score_allocate(_pair("a", "c"), [8, 0], CHANNEL, "no_kb",
                                 fixed_bits=[4096] * 9)
    a, b = plan.objects
    assert abs(a.source_bits - b.source_bits) <= 1


def test_no_kb_importance_ratio_follows_fixed_bits():
    # with alpha=0 the split is exactly the fixed-bit ratio 18432:2048
    plan = direct_score_allocate(_pair("a", "b"), [8, 0], CHANNEL, "no_kb", alpha=0.0)
    fixed = linear_fixed_bits()
    a, b, bg = plan.objects[0].source_bits, plan.objects[1].source_bits, plan.background_bits
    assert a / b == pytest.approx(fixed[8] / fixed[0], rel=1e-3)
    assert b == pytest.approx(bg, abs=1)


def test_direct_score_errors(scene3, kb3):
    with pytest.raises(ValueError):
        direct_score_allocate(scene3, [9, 0, 0], CHANNEL, "no_kb")
    with pytest.raises(ValueError):
        direct_score_allocate(scene3, [1, 2], CHANNEL, "no_kb")
    with pytest.raises(ValueError):
        direct_score_allocate(scene3, [1, 2, 3], CHANNEL, "no_voting")
    with pytest.raises(ValueError):
        direct_score_allocate(scene3, [1, 2, 3], CHANNEL, "sideways", kb=kb3)


def test_infeasible_budget(scene3, kb3):
    with pytest.raises(InfeasibleBudget):
        allocate(scene3, [1, 2, 3], ChannelState(wire_budget_bytes=800), kb3)
    with pytest.raises(InfeasibleBudget, match="short"):
        split_pool([1, 1, 1], 700)


def test_plan_json_roundtrip(scene3, kb3):
    plan = allocate(scene3, [8, 2, 0], CHANNEL, kb3)
    back = AllocationPlan.from_dict(json.loads(plan.to_json()))
    assert back == plan
    assert plan.to_json() == back.to_json()


def test_uniform_and_weighted_plans(scene3):
    u = uniform_plan(scene3, CHANNEL)
    bits = [e.source_bits for e in u.objects] + [u.background_bits]
    assert max(bits) - min(bits) <= 1 and sum(bits) == POOL_AT_10K
    w = weighted_plan(scene3, [1.0, 0.0, 0.0, 0.0], CHANNEL, alpha=0.0)
    assert w.objects[0].source_bits == POOL_AT_10K - 3 * MIN_REGION_BITS


# ---------------------------------------------------------------- properties

@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=12),
       st.integers(0, 500_000))
@settings(max_examples=200)
def test_split_pool_conserves_and_floors(factors, extra):
    pool = MIN_REGION_BITS * len(factors) + extra
    bits = split_pool(factors, pool)
    assert sum(bits) == pool
    assert min(bits) >= MIN_REGION_BITS


@st.composite
def alloc_cases(draw):
    n = draw(st.integers(1, 5))
    objs = []
    for i in range(n):
        w = draw(st.integers(8, 120))
        h = draw(st.integers(8, 120))
        x = draw(st.integers(0, 256 - w))
        y = draw(st.integers(0, 256 - h))
        objs.append(ObjectAnnotation(i, draw(st.sampled_from("abcz")), "", BBox(x, y, w, h)))
    scene = SceneDescription("p", 256, 256, "", tuple(objs))
    scores = draw(st.lists(st.integers(0, 8), min_size=n, max_size=n))
    budget = draw(st.integers(4000, 60_000))
    alpha = draw(st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]))
    return scene, scores, budget, alpha


@given(alloc_cases())
@settings(max_examples=120, deadline=None)
def test_allocate_properties(case):
    scene, scores, budget, alpha = case
    kb = hand_kb()
    channel = ChannelState(wire_budget_bytes=budget)
    plan = allocate(scene, scores, channel, kb, alpha=alpha)
    assert abs(plan.total_bits - plan.source_pool_bits) <= plan.region_count
    assert wire_cost(plan.total_bits, plan.region_count) <= budget
    assert all(e.source_bits >= MIN_REGION_BITS for e in plan.objects)
    assert plan == allocate(scene, scores, channel, kb, alpha=alpha)
    assert sum(e.factor for e in plan.objects) + plan.background_factor == pytest.approx(1.0)


@given(alloc_cases(), st.integers(0, 4))
@settings(max_examples=120, deadline=None)
def test_raising_a_score_never_lowers_its_bits(case, pick):
    scene, scores, budget, alpha = case
    i = pick % len(scores)
    assume(scores[i] < 8)
    kb = hand_kb()
    channel = ChannelState(wire_budget_bytes=budget)
    before = allocate(scene, scores, channel, kb, alpha=alpha).objects[i].source_bits
    raised = list(scores)
    raised[i] += 1
    after = allocate(scene, raised, channel, kb, alpha=alpha).objects[i].source_bits
    assert after >= before


def test_fixture_helper_is_consistent():
    scene = three_object_scene()
    assert background_area_share(scene) == pytest.approx(0.6)

"""Relevance scoring and region bit allocation.

A plan splits the source-bit pool implied by the wire budget across the
objects and the background. Each region's factor mixes its area share with
an importance share, ``alpha * area + (1 - alpha) * importance``; the
background competes as a score-0 pseudo-object on the fallback curve.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .matcher import MatchTriple
from .phy.link import BudgetError, source_pool, wire_cost
from .scene import BBox, ChannelState, SceneDescription

MIN_REGION_BITS = 256
MAX_SCORE = 8
BACKGROUND_CATEGORY = "*"


class InfeasibleBudget(ValueError):
    pass


def relevance(triple: MatchTriple) -> int:
    """0..8 score: category gives 6/4/2, each caption adds +1/0/-1."""
    c, g, o = triple.as_tuple()
    return 2 * c + (g - 2) + (o - 2)


def _check_score(score) -> int:
    if isinstance(score, bool) or int(score) != score or not 0 <= score <= MAX_SCORE:
        raise ValueError(f"score {score!r} outside 0..{MAX_SCORE}")
    return int(score)


@dataclass(frozen=True)
class SimilarityTargetTable:
    """Target PSNR (dB) for each score 0..8."""
    targets: tuple[float, ...]

    def __post_init__(self):
        t = tuple(float(v) for v in self.targets)
        if len(t) != MAX_SCORE + 1:
            raise ValueError(f"need {MAX_SCORE + 1} targets, got {len(t)}")
        if any(b < a for a, b in zip(t, t[1:])):
            raise ValueError("similarity targets must be non-decreasing in score")
        object.__setattr__(self, "targets", t)

    @classmethod
    def linear(cls, low: float = 24.0, high: float = 38.0) -> "SimilarityTargetTable":
        return cls(tuple(low + (high - low) * s / MAX_SCORE for s in range(MAX_SCORE + 1)))

    @classmethod
    def default(cls) -> "SimilarityTargetTable":
        return cls.linear()


def expected_similarity(score: int, table: SimilarityTargetTable | None = None) -> float:
    table = table or SimilarityTargetTable.default()
    return table.targets[_check_score(score)]


def _shares(bits) -> list[float]:
    bits = [float(b) for b in bits]
    if any(b < 0 for b in bits):
        raise ValueError("bit lengths must be non-negative")
    total = sum(bits)
    if total <= 0:
        return [1.0 / len(bits)] * len(bits)
    return [b / total for b in bits]


def importance(objects, kb, channel: ChannelState,
               table: SimilarityTargetTable | None = None) -> list[float]:
    """Share of each object's kb bit length; ``objects`` is a list of (category, score)."""
    objects = list(objects)
    if not objects:
        raise ValueError("importance needs at least one object")
    return _shares(kb.query_bits(cat, channel, expected_similarity(s, table))
                   for cat, s in objects)


# ---------------------------------------------------------------- plans

@dataclass(frozen=True)
class PlanEntry:
    index: int
    category: str
    bbox: BBox
    score: int | None
    factor: float
    source_bits: int


@dataclass(frozen=True)
class AllocationPlan:
    objects: tuple[PlanEntry, ...]
    background_bits: int
    background_factor: float
    wire_budget_bytes: int
    source_pool_bits: int
    method: str = "pace"
    alpha: float | None = None
    details: dict = field(default_factory=dict)

    @property
    def total_bits(self) -> int:
        return self.background_bits + sum(e.source_bits for e in self.objects)

    @property
    def region_count(self) -> int:
        return len(self.objects) + 1

    def projected_wire_bytes(self) -> int:
        return wire_cost(self.total_bits, self.region_count)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "alpha": self.alpha,
            "wire_budget_bytes": self.wire_budget_bytes,
            "source_pool_bits": self.source_pool_bits,
            "projected_wire_bytes": self.projected_wire_bytes(),
            "background": {"factor": self.background_factor, "source_bits": self.background_bits},
            "objects": [{"index": e.index, "category": e.category, "bbox": e.bbox.as_list(),
                         "score": e.score, "factor": e.factor, "source_bits": e.source_bits}
                        for e in self.objects],
            "details": self.details,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "AllocationPlan":
        objs = tuple(PlanEntry(o["index"], o["category"], BBox(*o["bbox"]), o["score"],
                               o["factor"], o["source_bits"]) for o in d["objects"])
        return cls(objs, d["background"]["source_bits"], d["background"]["factor"],
                   d["wire_budget_bytes"], d["source_pool_bits"], d["method"], d["alpha"],
                   d.get("details", {}))


def background_area_share(scene: SceneDescription) -> float:
    covered = np.zeros((scene.height, scene.width), dtype=bool)
    for obj in scene.objects:
        covered[obj.bbox.slices()] = True
    return float(1.0 - covered.mean())


def split_pool(factors, pool: int, minimum: int = MIN_REGION_BITS) -> list[int]:
    """Integer split of ``pool`` proportional to ``factors`` with a per-region floor.

    Regions whose share falls below ``minimum`` are pinned there and the
    rest of the pool is re-split among the others until stable; fractional
    bits go to the largest remainders.
    """
    f = np.asarray(factors, dtype=np.float64)
    n = f.size
    if n == 0:
        return []
    if pool < minimum * n:
        raise InfeasibleBudget(
            f"source pool {pool} bits is {minimum * n - pool} bits short of "
            f"{n} regions x {minimum} bit minimum")
    if f.sum() <= 0:
        f = np.ones(n)
    pinned = np.zeros(n, dtype=bool)
    while True:
        free = pool - minimum * pinned.sum()
        weights = np.where(pinned, 0.0, f)
        share = free * weights / weights.sum()
        alloc = np.where(pinned, float(minimum), share)
        low = ~pinned & (alloc < minimum)
        if not low.any():
            break
        pinned |= low
    base = np.floor(alloc).astype(np.int64)
    short = pool - int(base.sum())
    frac = alloc - base
    order = sorted(range(n), key=lambda i: (-frac[i], i))
    for i in order[:short]:
        base[i] += 1
    return [int(b) for b in base]


def plan_from_factors(scene: SceneDescription, factors, channel: ChannelState, *,
                      scores=None, method: str = "pace", alpha: float | None = None,
                      details: dict | None = None) -> AllocationPlan:
    """``factors``: one per object then the background, normalized here."""
    factors = [float(v) for v in factors]
    if len(factors) != len(scene.objects) + 1:
        raise ValueError("need one factor per object plus the background")
    total = sum(factors)
    factors = [v / total for v in factors] if total > 0 else [1.0 / len(factors)] * len(factors)
    try:
        pool = source_pool(channel.wire_budget_bytes, len(scene.objects) + 1)
    except BudgetError as exc:
        raise InfeasibleBudget(str(exc)) from exc
    bits = split_pool(factors, pool)
    scores = list(scores) if scores is not None else [None] * len(scene.objects)
    entries = tuple(PlanEntry(o.index, o.category, o.bbox, s, f, b)
                    for o, s, f, b in zip(scene.objects, scores, factors, bits))
    return AllocationPlan(entries, bits[-1], factors[-1], channel.wire_budget_bytes, pool,
                          method, alpha, details or {})


def mixed_factors(scene: SceneDescription, region_bits, alpha: float) -> list[float]:
    """alpha * area share + (1 - alpha) * bit-length share, background last."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha {alpha} outside [0, 1]")
    image_area = scene.width * scene.height
    areas = [o.bbox.area / image_area for o in scene.objects] + [background_area_share(scene)]
    imp = _shares(region_bits)
    return [alpha * a + (1 - alpha) * i for a, i in zip(areas, imp)]


def allocate(scene: SceneDescription, scores, channel: ChannelState, kb,
             table: SimilarityTargetTable | None = None, alpha: float = 0.5,
             method: str = "pace") -> AllocationPlan:
    scores = [_check_score(s) for s in scores]
    if len(scores) != len(scene.objects):
        raise ValueError("one score per object required")
    table = table or SimilarityTargetTable.default()
    bits = [kb.query_bits(o.category, channel, expected_similarity(s, table))
            for o, s in zip(scene.objects, scores)]
    bits.append(kb.query_bits(BACKGROUND_CATEGORY, channel, expected_similarity(0, table)))
    factors = mixed_factors(scene, bits, alpha)
    return plan_from_factors(scene, factors, channel, scores=scores, method=method,
                             alpha=alpha, details={"kb_bits": bits})


def linear_fixed_bits(step: int = 2048) -> tuple[int, ...]:
    return tuple(step * (s + 1) for s in range(MAX_SCORE + 1))


def direct_score_allocate(scene: SceneDescription, llm_scores, channel: ChannelState,
                          mode: str, kb=None, table: SimilarityTargetTable | None = None,
                          fixed_bits=None, alpha: float = 0.5) -> AllocationPlan:
    """Ablation allocators.

    ``no_voting``: the given 0..8 scores replace the relevance arithmetic and
    go through the normal kb-backed allocation. ``no_kb``: ``fixed_bits[score]``
    replaces the kb bit length, the area term is unchanged.
    """
    scores = [_check_score(s) for s in llm_scores]
    if len(scores) != len(scene.objects):
        raise ValueError("one score per object required")
    if mode == "no_voting":
        if kb is None:
            raise ValueError("no_voting mode needs a knowledge base")
        return allocate(scene, scores, channel, kb, table, alpha, method="no_voting")
    if mode == "no_kb":
        fixed = tuple(fixed_bits) if fixed_bits is not None else linear_fixed_bits()
        if len(fixed) != MAX_SCORE + 1 or any(b < 0 for b in fixed):
            raise ValueError("fixed_bits needs 9 non-negative entries")
        bits = [fixed[s] for s in scores] + [fixed[0]]
        return plan_from_factors(scene, mixed_factors(scene, bits, alpha), channel,
                                 scores=scores, method="no_kb", alpha=alpha,
                                 details={"fixed_bits": list(fixed)})
    raise ValueError(f"unknown ablation mode {mode!r}")


def uniform_plan(scene: SceneDescription, channel: ChannelState) -> AllocationPlan:
    return plan_from_factors(scene, [1.0] * (len(scene.objects) + 1), channel,
                             method="uniform_regions")


def weighted_plan(scene: SceneDescription, weights, channel: ChannelState,
                  alpha: float = 0.5, method: str = "lexical_sim") -> AllocationPlan:
    """Allocation with importance taken from arbitrary non-negative weights (background last)."""
    return plan_from_factors(scene, mixed_factors(scene, weights, alpha), channel,
                             method=method, alpha=alpha, details={"weights": list(weights)})

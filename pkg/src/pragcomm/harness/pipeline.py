"""One image through match, allocation, coding, the channel and evaluation."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from .. import codec
from ..allocation import (AllocationPlan, allocate, direct_score_allocate, relevance,
                          uniform_plan, weighted_plan)
from ..intents import SynonymLexicon
from ..matcher import (AdapterError, MatchTriple, ServiceConfig, direct_score,
                       lexical_similarity, scripted_triple, service_direct_score, service_match)
from ..metrics import MetricReport, build_masks, evaluate
from ..phy import ldpc, link
from ..phy.link import source_pool
from ..rng import derive_seed
from ..scene import BBox, Intention, MatchLevel, RasterImage, SceneDescription
from .config import ExperimentConfig

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    """A pipeline failure labelled with the stage and image that raised it."""

    def __init__(self, stage: str, image_id: str, cause: Exception):
        super().__init__(f"[{image_id}] {stage}: {cause}")
        self.stage = stage
        self.image_id = image_id
        self.cause = cause


# ---------------------------------------------------------------- matching

class Matching:
    """Match triples and direct 0..8 scores from the configured matcher."""

    def __init__(self, config: ExperimentConfig, lexicon: SynonymLexicon):
        self.mode = config.matcher.mode
        self.lexicon = lexicon
        self.fallback = config.matcher.fallback_to_scripted
        self.service = None
        self.stub = None
        if self.mode == "service":
            m = config.matcher
            self.service = ServiceConfig(m.endpoint, m.model_name, m.temperature,
                                         m.vote_count, m.timeout)
        elif self.mode == "stub":
            with open(config.path("stub_file"), encoding="utf-8") as fh:
                self.stub = json.load(fh)

    def triples(self, scene: SceneDescription, intention: Intention):
        """(triples, flags); flags name objects that fell back to the scripted matcher."""
        out, flags = [], []
        for pos, obj in enumerate(scene.objects):
            if self.mode == "stub":
                levels = self.stub[scene.image_id]["triples"][pos]
                out.append(MatchTriple(*(MatchLevel.parse(v) for v in levels)))
                continue
            if self.mode == "service":
                texts = {"category": obj.category, "global": scene.global_caption,
                         "object": obj.caption}
                try:
                    out.append(service_match(texts, intention, self.service))
                    continue
                except AdapterError:
                    if not self.fallback:
                        raise
                    flags.append(obj.index)
            out.append(scripted_triple(scene, obj, intention, self.lexicon))
        return out, flags

    def direct_scores(self, scene: SceneDescription, intention: Intention):
        if self.mode == "stub":
            return list(self.stub[scene.image_id]["direct_scores"]), []
        scores, flags = [], []
        for obj in scene.objects:
            if self.mode == "service":
                texts = {"category": obj.category, "global": scene.global_caption,
                         "object": obj.caption}
                try:
                    scores.append(service_direct_score(texts, intention, self.service))
                    continue
                except AdapterError:
                    if not self.fallback:
                        raise
                    flags.append(obj.index)
            scores.append(direct_score(obj, intention))
        return scores, flags


# ---------------------------------------------------------------- planning

def agnostic_plan(scene: SceneDescription, channel) -> AllocationPlan:
    """The whole image as one region holding the full source pool."""
    pool = source_pool(channel.wire_budget_bytes, 1)
    return AllocationPlan((), pool, 1.0, channel.wire_budget_bytes, pool,
                          method="intention_agnostic")


def make_plan(method: str, config: ExperimentConfig, scene: SceneDescription,
              intention: Intention, kb, matching: Matching, budget: int | None = None):
    """(plan, audit) for one method."""
    channel = config.channel.state(budget)
    alloc = config.allocator
    audit: dict = {}
    if method == "intention_agnostic":
        return agnostic_plan(scene, channel), audit
    if method == "uniform_regions":
        return uniform_plan(scene, channel), audit
    if method == "lexical_sim":
        weights = [lexical_similarity(f"{o.category} {o.caption}", intention.text)
                   for o in scene.objects] + [0.0]
        audit["lexical_weights"] = weights
        return weighted_plan(scene, weights, channel, alloc.alpha), audit
    if method == "no_voting":
        scores, flags = matching.direct_scores(scene, intention)
        audit.update(direct_scores=scores, matcher_fallback=flags)
        return direct_score_allocate(scene, scores, channel, "no_voting", kb=kb,
                                     table=alloc.table(), alpha=alloc.alpha), audit
    if method not in ("pace", "no_kb"):
        raise ValueError(f"unknown method {method!r}")
    triples, flags = matching.triples(scene, intention)
    scores = [relevance(t) for t in triples]
    audit.update(triples=[t.as_tuple() for t in triples], scores=scores,
                 matcher_fallback=flags)
    if method == "no_kb":
        return direct_score_allocate(scene, scores, channel, "no_kb",
                                     fixed_bits=alloc.fixed_bits, alpha=alloc.alpha), audit
    return allocate(scene, scores, channel, kb, alloc.table(), alloc.alpha), audit


# ---------------------------------------------------------------- transport

@dataclass
class PipelineResult:
    image_id: str
    method: str
    received: RasterImage
    plan: AllocationPlan
    frame: bytes
    channel: link.ChannelReport
    metrics: MetricReport
    audit: dict = field(default_factory=dict)

    def audit_json(self) -> str:
        return json.dumps(self.audit, indent=2, sort_keys=True) + "\n"


def encode_frame(image: RasterImage, plan: AllocationPlan):
    """Encode every region of ``plan`` and lay out the frame.

    Returns (frame, encode audit). The background comes first, then objects
    in raster order of their box centres.
    """
    if plan.method == "intention_agnostic":
        background = codec.RegionPatch("background", BBox(0, 0, image.width, image.height),
                                       0, image)
        objects = []
    else:
        background, objects = codec.extract_regions(image, [e.bbox for e in plan.objects])
    order = codec.ordering([e.bbox for e in plan.objects])
    regions, info = [], []
    bg = codec.encode_region(background.pixels, plan.background_bits)
    regions.append(link.Region(link.KIND_BACKGROUND, 0, background.bbox, bg.data))
    info.append({"region": "background", "budget_bits": plan.background_bits,
                 "bytes": len(bg.data), "quality": bg.quality, "truncated": bg.truncated})
    for i in order:
        entry = plan.objects[i]
        stream = codec.encode_region(objects[i].pixels, entry.source_bits)
        regions.append(link.Region(link.KIND_OBJECT, i, entry.bbox, stream.data))
        info.append({"region": f"object{entry.index}", "budget_bits": entry.source_bits,
                     "bytes": len(stream.data), "quality": stream.quality,
                     "truncated": stream.truncated})
    return link.Frame(image.width, image.height, regions), {"order": order, "regions": info}


def _decode_or_gray(region: link.Region) -> tuple[codec.RegionPatch, bool]:
    kind = "background" if region.kind == link.KIND_BACKGROUND else "object"
    try:
        return codec.decode_region(region.payload, region.bbox, kind, region.category_id), False
    except codec.DecodeError as exc:
        log.warning("region at %s undecodable: %s", region.bbox.as_list(), exc)
    return codec.gray_patch(region.bbox, kind, region.category_id), True


def receive(result: link.TransmitResult, width: int, height: int):
    """Reassembled image and per-region loss flags (frame order).

    A background lost on the channel becomes a mid-gray canvas; a lost
    object is skipped so the background shows through. A stream that
    arrives but will not decode is replaced by a mid-gray patch.
    """
    if result.frame is None:
        return RasterImage.filled(width, height), list(result.lost)
    flags = []
    background = None
    objects = []
    for region, lost in zip(result.frame.regions, result.lost):
        is_bg = region.kind == link.KIND_BACKGROUND and background is None
        if lost:
            flags.append(True)
            if is_bg:
                background = codec.gray_patch(region.bbox, "background")
            continue
        patch, failed = _decode_or_gray(region)
        flags.append(failed)
        if is_bg:
            background = patch
        else:
            objects.append(patch)
    if background is None or (background.bbox.w, background.bbox.h) != (width, height):
        background = codec.gray_patch(BBox(0, 0, width, height), "background")
    return codec.reassemble(background, objects), flags


def run_pipeline(config: ExperimentConfig, scene: SceneDescription, image: RasterImage,
                 intention: Intention, kb, method: str = "pace", *, matching: Matching = None,
                 lexicon: SynonymLexicon = None, code=None,
                 budget: int | None = None) -> PipelineResult:
    if (image.width, image.height) != (scene.width, scene.height):
        raise StageError("ingest", scene.image_id, ValueError("image and annotation dims differ"))
    lexicon = lexicon or SynonymLexicon.default()
    matching = matching or Matching(config, lexicon)
    code = code or ldpc.build_code(config.seeds.code)
    stage = "plan"
    try:
        plan, audit = make_plan(method, config, scene, intention, kb, matching, budget)
        stage = "encode"
        frame, enc = encode_frame(image, plan)
        stage = "transmit"
        seed = derive_seed(config.seeds.channel, scene.image_id)
        sent = link.transmit(frame, config.channel.snr_db, seed, code,
                             max_iter=config.channel.max_iter, algorithm=config.channel.decoder)
        stage = "decode"
        received, lost = receive(sent, scene.width, scene.height)
        stage = "evaluate"
        masks = build_masks(intention, scene)
        report = evaluate(image, received, masks, scene.image_id, method, sum(lost))
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, scene.image_id, exc) from exc
    wire = len(frame.to_bytes())
    audit.update(
        image_id=scene.image_id, method=method, intention=intention.to_dict(),
        plan=plan.to_dict(), encode=enc, channel=sent.report.to_dict(),
        lost=lost, frame_bytes=wire,
        projected_wire_bytes=link.wire_cost(8 * len(frame.payload_section()), len(frame.regions)))
    return PipelineResult(scene.image_id, method, received, plan, frame.to_bytes(),
                          sent.report, report, audit)

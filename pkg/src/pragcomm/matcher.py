"""Match-level judgement between scene text and an intention.

Two routes produce a :class:`MatchTriple` per object: a deterministic
token matcher (:func:`scripted_match`) and an HTTP adapter for an external
text model (:func:`service_match`). Both feed :func:`vote`.
"""
from __future__ import annotations

import collections
import json
import logging
import math
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from importlib import resources

from .intents import SynonymLexicon, contains_phrase, tokenize
from .scene import Intention, MatchLevel, ObjectAnnotation, SceneDescription

log = logging.getLogger(__name__)

PROMPT_SECTIONS = ("role", "task", "steps", "examples", "notes", "output_format")

# Words that carry no content for the lexical scorers.
STOPWORDS = frozenset(
    "a an the of with on in and or is are to at for by from its it this that "
    "please transmit clearly".split())


@dataclass(frozen=True)
class MatchTriple:
    category_match: MatchLevel
    global_match: MatchLevel
    object_match: MatchLevel

    def as_tuple(self) -> tuple[int, int, int]:
        return (int(self.category_match), int(self.global_match), int(self.object_match))


def vote(levels) -> MatchLevel:
    """Plurality vote; ties resolve to the lowest tied level."""
    levels = [MatchLevel.parse(lv) for lv in levels]
    if not levels:
        raise ValueError("vote needs at least one level")
    counts = collections.Counter(levels)
    best = max(counts.values())
    return min(lv for lv, c in counts.items() if c == best)


# ---------------------------------------------------------------- scripted

def _occurs(term: str, tokens: list[str], lexicon: SynonymLexicon) -> tuple[bool, bool]:
    """(direct hit, synonym hit) of ``term`` in ``tokens``."""
    direct = contains_phrase(tokens, tokenize(term))
    via_syn = any(contains_phrase(tokens, tokenize(s)) for s in lexicon.synonyms(term))
    return direct, via_syn


def intention_terms(intention: Intention, lexicon: SynonymLexicon) -> list[str]:
    """Target terms the intention text actually mentions, directly or by synonym."""
    tokens = tokenize(intention.text)
    return [t for t, _ in intention.targets if any(_occurs(t, tokens, lexicon))]


def scripted_match(part_text: str, part_kind: str, intention: Intention,
                   lexicon: SynonymLexicon) -> MatchLevel:
    if part_kind == "category":
        direct, via_syn = _occurs(part_text, tokenize(intention.text), lexicon)
        if direct:
            return MatchLevel.HIGH
        return MatchLevel.MEDIUM if via_syn else MatchLevel.LOW
    if part_kind != "caption":
        raise ValueError(f"unknown part kind {part_kind!r}")
    terms = intention_terms(intention, lexicon)
    caption = tokenize(part_text)
    hits = sum(1 for t in terms if any(_occurs(t, caption, lexicon)))
    if hits == 0:
        return MatchLevel.LOW
    return MatchLevel.HIGH if hits == len(terms) else MatchLevel.MEDIUM


def scripted_triple(scene: SceneDescription, obj: ObjectAnnotation,
                    intention: Intention, lexicon: SynonymLexicon) -> MatchTriple:
    return MatchTriple(
        scripted_match(obj.category, "category", intention, lexicon),
        scripted_match(scene.global_caption, "caption", intention, lexicon),
        scripted_match(obj.caption, "caption", intention, lexicon))


# ---------------------------------------------------------------- lexical

def lexical_similarity(description: str, intention_text: str) -> float:
    """Cosine similarity of content-token count vectors, in [0, 1]."""
    a = collections.Counter(t for t in tokenize(description) if t not in STOPWORDS)
    b = collections.Counter(t for t in tokenize(intention_text) if t not in STOPWORDS)
    if not a or not b:
        return 0.0
    dot = sum(a[t] * b[t] for t in a)
    return dot / math.sqrt(sum(v * v for v in a.values()) * sum(v * v for v in b.values()))


def direct_score(obj: ObjectAnnotation, intention: Intention) -> int:
    """One-shot 0-8 relevance from lexical overlap, without the three-part match."""
    sim = lexical_similarity(f"{obj.category} {obj.caption}", intention.text)
    return int(math.floor(8 * sim + 0.5))


# ---------------------------------------------------------------- service

class AdapterError(RuntimeError):
    """The text-model service failed or replied with something unusable."""


def load_prompt_bundle() -> dict[str, str]:
    root = resources.files("pragcomm.data").joinpath("prompts")
    files = sorted(p for p in root.iterdir() if p.name.endswith(".txt"))
    if len(files) != len(PROMPT_SECTIONS):
        raise RuntimeError(f"expected {len(PROMPT_SECTIONS)} prompt files, found {len(files)}")
    return {name: f.read_text("utf-8").strip() for name, f in zip(PROMPT_SECTIONS, files)}


@dataclass(frozen=True)
class ServiceConfig:
    endpoint: str
    model_name: str = "text-model"
    temperature: float = 0.0
    vote_count: int = 3
    timeout: float = 30.0
    max_retries: int = 3
    prompt_bundle: dict = field(default_factory=load_prompt_bundle)

    def __post_init__(self):
        if self.vote_count < 1 or self.vote_count % 2 == 0:
            raise ValueError("vote_count must be an odd positive integer")
        missing = set(PROMPT_SECTIONS) - set(self.prompt_bundle)
        if missing:
            raise ValueError(f"prompt bundle lacks sections {sorted(missing)}")


def _post(config: ServiceConfig, body: dict) -> dict:
    data = json.dumps(body).encode("utf-8")
    last = None
    for attempt in range(config.max_retries):
        req = urllib.request.Request(config.endpoint, data=data,
                                     headers={"Content-Type": "application/json"})
        try:
            with urllib.request.urlopen(req, timeout=config.timeout) as resp:
                reply = json.loads(resp.read().decode("utf-8"))
            if not isinstance(reply, dict):
                raise ValueError("reply is not a JSON object")
            return reply
        except (urllib.error.URLError, OSError, ValueError) as exc:
            last = exc
            log.warning("service call %d/%d failed: %s", attempt + 1, config.max_retries, exc)
    raise AdapterError(f"service unusable after {config.max_retries} attempts: {last}")


def _request_body(config: ServiceConfig, texts: dict, intention: Intention, mode: str) -> dict:
    return {
        "model": config.model_name,
        "temperature": config.temperature,
        "mode": mode,
        "prompt_sections": dict(config.prompt_bundle),
        "parts": [{"kind": k, "text": v} for k, v in texts.items()],
        "intention": intention.text,
    }


def _query_triple(config: ServiceConfig, body: dict) -> MatchTriple:
    for attempt in range(config.max_retries):
        reply = _post(config, body)
        try:
            return MatchTriple(*(MatchLevel.parse(reply[k])
                                 for k in ("category", "global", "object")))
        except (KeyError, ValueError, TypeError) as exc:
            log.warning("malformed reply %d/%d: %r (%s)", attempt + 1, config.max_retries, reply, exc)
    raise AdapterError(f"malformed replies after {config.max_retries} attempts")


def service_match(texts: dict, intention: Intention, config: ServiceConfig) -> MatchTriple:
    """Ask the service ``vote_count`` times and majority-vote each part.

    ``texts`` maps part kind (``category``, ``global``, ``object``) to text.
    """
    body = _request_body(config, texts, intention, "match")
    replies = [_query_triple(config, body) for _ in range(config.vote_count)]
    return MatchTriple(vote([r.category_match for r in replies]),
                       vote([r.global_match for r in replies]),
                       vote([r.object_match for r in replies]))


def service_direct_score(texts: dict, intention: Intention, config: ServiceConfig) -> int:
    body = _request_body(config, texts, intention, "direct")
    for attempt in range(config.max_retries):
        reply = _post(config, body)
        score = reply.get("score")
        if isinstance(score, int) and not isinstance(score, bool) and 0 <= score <= 8:
            return score
        log.warning("malformed direct score %d/%d: %r", attempt + 1, config.max_retries, reply)
    raise AdapterError(f"malformed direct scores after {config.max_retries} attempts")

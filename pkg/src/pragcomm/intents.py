"""Intention generation with controlled ground-truth match levels.

Each label independently keeps its name (level 3), is swapped for a
lexicon synonym (level 2) or is dropped (level 1), each with probability
1/3; the surviving terms are joined into a text template.
"""
from __future__ import annotations

import json
import os
import re
from importlib import resources
from pathlib import Path

from .rng import PortableRng
from .scene import Intention, MatchLevel

DEFAULT_TEMPLATE = "Please transmit clearly: {labels}."
LEXICON_RESOURCE = "lexicon_v1.json"

_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumerics."""
    return _TOKEN.findall(text.lower())


def contains_phrase(haystack: list[str], phrase: list[str]) -> bool:
    """True when ``phrase`` occurs as a contiguous token run in ``haystack``."""
    n = len(phrase)
    if n == 0:
        return False
    return any(haystack[i:i + n] == phrase for i in range(len(haystack) - n + 1))


class AbsentTermError(KeyError):
    pass


class SynonymLexicon:
    """Case-insensitive map from a term to its ordered synonym list."""

    def __init__(self, entries: dict[str, list[str]]):
        self._map: dict[str, tuple[str, ...]] = {}
        for term, syns in entries.items():
            key = term.strip().lower()
            syns = tuple(s.strip().lower() for s in syns)
            if not syns:
                raise ValueError(f"lexicon term {term!r} has no synonyms")
            if key in syns:
                raise ValueError(f"lexicon term {term!r} maps to itself")
            self._map[key] = syns

    def __contains__(self, term: str) -> bool:
        return term.lower() in self._map

    def __len__(self):
        return len(self._map)

    def synonyms(self, term: str) -> tuple[str, ...]:
        return self._map.get(term.lower(), ())

    def terms(self) -> list[str]:
        return list(self._map)

    def to_dict(self) -> dict[str, list[str]]:
        return {k: list(v) for k, v in self._map.items()}

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SynonymLexicon":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def default(cls) -> "SynonymLexicon":
        text = resources.files("pragcomm.data").joinpath(LEXICON_RESOURCE).read_text("utf-8")
        return cls(json.loads(text))


def lookup_synonym(term: str, lexicon: SynonymLexicon, rng: PortableRng) -> str:
    syns = lexicon.synonyms(term)
    if not syns:
        raise AbsentTermError(term)
    return syns[rng.below(len(syns))]


def generate_intention(labels: list[str], lexicon: SynonymLexicon, seed: int,
                       template: str = DEFAULT_TEMPLATE) -> Intention:
    if "{labels}" not in template:
        raise ValueError("template needs a {labels} placeholder")
    if len(set(labels)) != len(labels):
        raise ValueError("labels must be deduplicated")
    rng = PortableRng(seed)
    targets, surviving, warnings = [], [], []
    for label in labels:
        branch = rng.below(3)
        if branch == 0:
            targets.append((label, MatchLevel.HIGH))
            surviving.append(label)
        elif branch == 1:
            try:
                surviving.append(lookup_synonym(label, lexicon, rng))
                targets.append((label, MatchLevel.MEDIUM))
            except AbsentTermError:
                warnings.append(f"no synonym for {label!r}; kept unchanged")
                targets.append((label, MatchLevel.HIGH))
                surviving.append(label)
        else:
            targets.append((label, MatchLevel.LOW))
    text = template.replace("{labels}", ", ".join(surviving))
    return Intention(text=text, targets=tuple(targets), template=template,
                     warnings=tuple(warnings))

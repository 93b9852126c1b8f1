"""Experiment configuration: one JSON file of nested sections.

Every section and field has a default, so ``{}`` is a valid config. The
resolved config (defaults filled in) is embedded in every report.

Example::

    {
      "paths": {"annotations": "corpus/annotations", "images": "corpus/images",
                "intents": "corpus/intents.json", "kb": "kb.csv", "outputs": "runs/main"},
      "channel": {"snr_db": 20, "wire_budget_bytes": 10000},
      "allocator": {"alpha": 0.5},
      "matcher": {"mode": "scripted"},
      "seeds": {"dataset": 1, "channel": 2, "code": 0, "calibration": 3}
    }
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..allocation import SimilarityTargetTable, linear_fixed_bits
from ..intents import DEFAULT_TEMPLATE
from ..kb import default_bit_grid
from ..scene import ChannelState


class ConfigError(ValueError):
    pass


@dataclass
class Paths:
    annotations: str = "corpus/annotations"
    images: str = "corpus/images"
    intents: str = "corpus/intents.json"
    lexicon: str | None = None          # None: bundled lexicon
    kb: str = "kb.csv"
    outputs: str = "runs/main"


@dataclass
class Channel:
    snr_db: float = 20.0
    modulation: str = "QAM16"
    ldpc_k: int = 3072
    ldpc_n: int = 6144
    wire_budget_bytes: int = 10_000
    decoder: str = "sum-product"
    max_iter: int = 50
    budget_semantics: str = "wire bytes after channel coding, headers included"

    def state(self, budget: int | None = None) -> ChannelState:
        return ChannelState(self.snr_db, self.modulation, self.ldpc_k / self.ldpc_n,
                            budget if budget is not None else self.wire_budget_bytes)


@dataclass
class Allocator:
    alpha: float = 0.5
    similarity_table: list = field(
        default_factory=lambda: list(SimilarityTargetTable.default().targets))
    fixed_bits: list = field(default_factory=lambda: list(linear_fixed_bits()))

    def table(self) -> SimilarityTargetTable:
        return SimilarityTargetTable(tuple(self.similarity_table))


@dataclass
class Matcher:
    mode: str = "scripted"              # scripted | service | stub
    vote_count: int = 3
    tie_rule: str = "lowest"
    endpoint: str | None = None
    model_name: str = "text-model"
    temperature: float = 0.0
    timeout: float = 30.0
    stub_file: str | None = None        # canned replies for stub mode
    fallback_to_scripted: bool = True


@dataclass
class Seeds:
    dataset: int = 1
    channel: int = 2
    code: int = 0
    calibration: int = 3
    intents: int = 4


@dataclass
class Corpus:
    count: int = 24
    width: int = 256
    height: int = 256
    min_objects: int = 3
    max_objects: int = 5
    min_size: int = 56
    max_size: int = 104


@dataclass
class Calibration:
    bit_grid: list = field(default_factory=default_bit_grid)
    crops_per_category: int = 3
    crop_size: int = 80


@dataclass
class ExperimentConfig:
    paths: Paths = field(default_factory=Paths)
    channel: Channel = field(default_factory=Channel)
    allocator: Allocator = field(default_factory=Allocator)
    matcher: Matcher = field(default_factory=Matcher)
    seeds: Seeds = field(default_factory=Seeds)
    corpus: Corpus = field(default_factory=Corpus)
    calibration: Calibration = field(default_factory=Calibration)
    ablation: str = "normal"            # normal | no_voting | no_kb
    template: str = DEFAULT_TEMPLATE
    methods: list = field(default_factory=lambda: [
        "pace", "intention_agnostic", "uniform_regions", "lexical_sim"])
    workers: int = 1

    def validate(self) -> "ExperimentConfig":
        if self.ablation not in ("normal", "no_voting", "no_kb"):
            raise ConfigError(f"ablation must be normal, no_voting or no_kb, not {self.ablation!r}")
        if self.matcher.mode not in ("scripted", "service", "stub"):
            raise ConfigError(f"matcher.mode {self.matcher.mode!r} unknown")
        if self.matcher.mode == "service" and not self.matcher.endpoint:
            raise ConfigError("matcher.mode 'service' needs matcher.endpoint")
        if self.matcher.mode == "stub" and not self.matcher.stub_file:
            raise ConfigError("matcher.mode 'stub' needs matcher.stub_file")
        if self.matcher.vote_count < 1 or self.matcher.vote_count % 2 == 0:
            raise ConfigError("matcher.vote_count must be odd")
        if not 0.0 <= self.allocator.alpha <= 1.0:
            raise ConfigError("allocator.alpha must lie in [0, 1]")
        if len(self.allocator.fixed_bits) != 9:
            raise ConfigError("allocator.fixed_bits needs 9 entries")
        try:
            self.allocator.table()
            self.channel.state()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if (self.channel.ldpc_k, self.channel.ldpc_n) != (3072, 6144):
            raise ConfigError("only the (6144, 3072) LDPC code is built in")
        if self.channel.decoder not in ("sum-product", "min-sum"):
            raise ConfigError(f"channel.decoder {self.channel.decoder!r} unknown")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config root must be a JSON object")
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in d:
                continue
            value = d[f.name]
            sub = _SECTIONS.get(f.name)
            if sub is not None:
                if not isinstance(value, dict):
                    raise ConfigError(f"section {f.name!r} must be an object")
                names = {sf.name for sf in dataclasses.fields(sub)}
                extra = set(value) - names
                if extra:
                    raise ConfigError(f"unknown keys in {f.name!r}: {sorted(extra)}")
                value = sub(**value)
            kwargs[f.name] = value
        extra = set(d) - {f.name for f in dataclasses.fields(cls)}
        if extra:
            raise ConfigError(f"unknown top-level keys {sorted(extra)}")
        return cls(**kwargs).validate()

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from None
        cfg = cls.from_dict(data)
        cfg.base_dir = str(Path(path).resolve().parent)
        return cfg

    def path(self, name: str) -> Path | None:
        """A ``paths`` entry resolved against the config file's directory."""
        value = getattr(self.paths, name) if name != "stub_file" else self.matcher.stub_file
        if value is None:
            return None
        p = Path(value)
        base = getattr(self, "base_dir", None)
        return p if p.is_absolute() or base is None else Path(base) / p


_SECTIONS = {"paths": Paths, "channel": Channel, "allocator": Allocator, "matcher": Matcher,
             "seeds": Seeds, "corpus": Corpus, "calibration": Calibration}

METHODS = ("pace", "intention_agnostic", "uniform_regions", "lexical_sim",
           "no_voting", "no_kb")

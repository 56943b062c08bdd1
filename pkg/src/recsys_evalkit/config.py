"""Experiment configuration: a YAML document validated against a JSON schema.

All keys are optional. An empty document gives the default protocol:
binarize at ceil(4n/5), 5-core, 5 user folds, hold-1-out validation and test,
Bayesian search with 50 evaluations, HitRate@50 as the tuned metric.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .data import Schema
from .errors import DomainError, SchemaError
from .hyperopt.space import SearchSpace, domain_from_json
from .metrics import MetricSpec
from .models import FAMILIES, SEARCH_SPACES
from .splitting import SplitPlan


def load_schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("config.schema.json").read_text())


@dataclass(frozen=True)
class DatasetConfig:
    name: str = "dataset"
    path: str | None = None
    processed: str | None = None
    schema: dict = field(default_factory=lambda: {"user": 0, "item": 1, "rating": 2, "timestamp": 3, "delimiter": "\t", "header": False})
    strict: bool = True
    scale_levels: int = 5
    min_degree: int = 5

    def parse_schema(self) -> Schema:
        return Schema(**self.schema)


@dataclass(frozen=True)
class ModelConfig:
    family: str
    space: dict = field(default_factory=dict)

    def search_space(self) -> SearchSpace:
        base = SEARCH_SPACES[self.family]
        if not self.space:
            return base
        return base.override(**{n: domain_from_json(d) for n, d in self.space.items()})


@dataclass(frozen=True)
class SearchConfig:
    strategy: str = "bayes"
    budget: int = 50
    n_init: int = 10


@dataclass(frozen=True)
class MetricsConfig:
    primary: str = "hitrate@50"
    report: tuple = ("hitrate@50", "recall@10", "recall@25", "ndcg@10")

    @property
    def primary_spec(self) -> MetricSpec:
        return MetricSpec.parse(self.primary)

    @property
    def report_specs(self) -> list[MetricSpec]:
        return [MetricSpec.parse(m) for m in self.report]


@dataclass(frozen=True)
class StatsConfig:
    ci_level: float = 0.95
    n_resamples: int = 10000
    alpha: float = 0.01
    seed: int = 0
    per_user_bootstrap: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    split: SplitPlan = field(default_factory=SplitPlan)
    models: tuple = tuple(ModelConfig(f) for f in FAMILIES)
    search: SearchConfig = field(default_factory=SearchConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    stats: StatsConfig = field(default_factory=StatsConfig)
    output_dir: str = "results"

    def __post_init__(self):
        if self.metrics.primary not in self.metrics.report:
            object.__setattr__(self, "metrics", MetricsConfig(self.metrics.primary, (self.metrics.primary, *self.metrics.report)))
        for m in self.models:
            if m.family not in FAMILIES:
                raise DomainError(f"unknown model family {m.family!r}")
            m.search_space()  # unknown override keys raise here

    @classmethod
    def from_dict(cls, doc: dict | None) -> ExperimentConfig:
        doc = doc or {}
        try:
            jsonschema.validate(doc, load_schema())
        except jsonschema.ValidationError as e:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            raise SchemaError(f"config {where}: {e.message}") from None
        models = doc.get("models")
        return cls(
            dataset=DatasetConfig(**{**asdict(DatasetConfig()), **doc.get("dataset", {}), "schema": {**DatasetConfig().schema, **doc.get("dataset", {}).get("schema", {})}}),
            split=SplitPlan(**doc.get("split", {})),
            models=tuple(ModelConfig(m["family"], m.get("space", {})) for m in models) if models is not None else cls.models,
            search=SearchConfig(**doc.get("search", {})),
            metrics=MetricsConfig(**{k: tuple(v) if k == "report" else v for k, v in doc.get("metrics", {}).items()}),
            stats=StatsConfig(**doc.get("stats", {})),
            output_dir=doc.get("output", {}).get("dir", "results"),
        )

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        with open(path) as f:
            try:
                doc = yaml.safe_load(f)
            except yaml.YAMLError as e:
                raise SchemaError(f"{path}: {e}") from None
        if doc is not None and not isinstance(doc, dict):
            raise SchemaError(f"{path}: top level must be a mapping")
        return cls.from_dict(doc)

    def with_seed(self, seed: int) -> ExperimentConfig:
        from dataclasses import replace

        return replace(self, split=replace(self.split, seed=seed), stats=replace(self.stats, seed=seed))

    def to_dict(self) -> dict[str, Any]:
        return {
            "dataset": asdict(self.dataset),
            "split": asdict(self.split),
            "models": [asdict(m) for m in self.models],
            "search": asdict(self.search),
            "metrics": {"primary": self.metrics.primary, "report": list(self.metrics.report)},
            "stats": asdict(self.stats),
            "output": {"dir": self.output_dir},
        }

    def digest(self) -> str:
        """Content hash of everything that affects results (not the output location)."""
        d = self.to_dict()
        d.pop("output")
        d["dataset"].pop("processed", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def resolve_path(p: str | None, base: Path) -> Path | None:
    if p is None:
        return None
    p = Path(p)
    return p if p.is_absolute() else base / p

"""Experiment configuration: one dataclass tree, one documented JSON format.

`ExperimentConfig.from_json` accepts a file with any subset of the fields
below; omitted fields keep their defaults. `to_json` writes the fully
resolved configuration back out, so a saved config always reproduces the run.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .adapt import AdaptConfig, ProbeConfig
from .data import DomainFamily, DomainSpec, Shift, default_family
from .dino import ProjectorSpec, SslConfig, ViewConfig


ADAPTATIONS = ("finetune", "dann", "mme")


@dataclass(frozen=True)
class GridCell:
    """One active-adaptation method: a sampling strategy paired with an
    adaptation procedure."""

    strategy: str
    adaptation: str

    def __post_init__(self):
        from .samplers import STRATEGIES

        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.adaptation not in ADAPTATIONS:
            raise ValueError(f"unknown adaptation {self.adaptation!r}")

    @property
    def name(self) -> str:
        return f"{self.strategy}-{self.adaptation}"


DEFAULT_GRID = (
    GridCell("uniform", "finetune"),
    GridCell("badge", "finetune"),
    GridCell("clue", "finetune"),
    GridCell("clue", "mme"),
    GridCell("aada", "dann"),
)


@dataclass
class ExperimentConfig:
    family: DomainFamily = field(default_factory=default_family)
    dataset_dir: str | None = None  # load CSV pools instead of generating
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    eval_fraction: float = 0.5
    ssl_pretrain: bool = False  # warm-start distillation on a generic corpus
    ssl_retrain: bool = True  # distillation on the pooled family data
    uda_dann: bool = False  # unsupervised alignment pass before any round
    ssl: SslConfig = field(default_factory=SslConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    adapt: AdaptConfig = field(default_factory=AdaptConfig)
    grid: tuple[GridCell, ...] = DEFAULT_GRID
    budget: int = 10
    rounds: int = 1
    labeler: str = "oracle"  # or "service"
    uda_steps: int = 100
    workers: int = 1  # seeds run concurrently when > 1 (oracle mode only)

    def __post_init__(self):
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if not 0.0 < self.eval_fraction < 1.0:
            raise ValueError("eval_fraction must lie in (0,1)")
        if self.labeler not in ("oracle", "service"):
            raise ValueError("labeler must be oracle or service")
        if self.budget < 0 or self.rounds < 1:
            raise ValueError("budget must be >= 0 and rounds >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["seeds"] = list(self.seeds)
        doc["grid"] = [{"strategy": c.strategy, "adaptation": c.adaptation} for c in self.grid]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        kwargs = {}
        if "family" in doc:
            kwargs["family"] = _family_from_dict(doc.pop("family"))
        if "ssl" in doc:
            kwargs["ssl"] = _ssl_from_dict(doc.pop("ssl"))
        if "probe" in doc:
            kwargs["probe"] = ProbeConfig(**doc.pop("probe"))
        if "adapt" in doc:
            adapt = doc.pop("adapt")
            adapt["domain_head_widths"] = tuple(adapt.get("domain_head_widths", (16,)))
            kwargs["adapt"] = AdaptConfig(**adapt)
        if "grid" in doc:
            kwargs["grid"] = tuple(GridCell(c["strategy"], c["adaptation"])
                                   for c in doc.pop("grid"))
        if "seeds" in doc:
            kwargs["seeds"] = tuple(doc.pop("seeds"))
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        kwargs.update(doc)
        return cls(**kwargs)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _family_from_dict(doc: dict) -> DomainFamily:
    domains = []
    for d in doc["domains"]:
        shift = d.get("shift", {})
        if isinstance(shift, dict):
            shift = Shift(rotation=shift.get("rotation", 0.0),
                          translation=tuple(shift.get("translation", ())),
                          noise_scale=shift.get("noise_scale", 0.0))
        domains.append(DomainSpec(
            name=d["name"], n_samples=d["n_samples"], positive_ratio=d["positive_ratio"],
            shift=shift, role=d.get("role", "target"),
            positive_count=d.get("positive_count"),
        ))
    return DomainFamily(domains=domains,
                        feature_dim=doc.get("feature_dim", 2),
                        base=doc.get("base", "moons"),
                        base_noise=doc.get("base_noise", 0.12),
                        seed=doc.get("seed", 0))


def _ssl_from_dict(doc: dict) -> SslConfig:
    doc = dict(doc)
    if "projector" in doc:
        doc["projector"] = ProjectorSpec(**doc["projector"])
    if "views" in doc:
        views = dict(doc["views"])
        for key in ("global_scale", "local_scale"):
            if key in views:
                views[key] = tuple(views[key])
        doc["views"] = ViewConfig(**views)
    if "backbone_widths" in doc:
        doc["backbone_widths"] = tuple(doc["backbone_widths"])
    return SslConfig(**doc)

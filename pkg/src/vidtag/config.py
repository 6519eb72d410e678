from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .corpus import Source
from .errors import ConfigError
from .index import HkmParams, IndexMode, Normalization
from .relevance import VoteScheme

ALL_SOURCES = [Source.VIDEO, Source.BING, Source.GOOGLE, Source.FLICKR]


class PipelineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    dim: Optional[int] = Field(None, ge=1, description="descriptor length; inferred from the first manifest when unset")
    K: int = Field(200, ge=1)
    vote_scheme: VoteScheme = VoteScheme.BINARY
    epsilon: float = Field(1e-12, gt=0)
    damping: float = Field(20.0, gt=0)
    top_k_suggest: int = Field(5, ge=0)
    d: int = Field(3, ge=0)
    sigma: Optional[float] = Field(None, gt=0)
    sources: list[Source] = Field(default_factory=lambda: list(ALL_SOURCES))
    normalization: Normalization = Normalization.L1
    index_mode: IndexMode = IndexMode.HKMEANS
    branching: int = Field(32, ge=2)
    max_leaf: int = Field(64, ge=1)
    max_checks: int = Field(512, ge=1)
    restarts: int = Field(1, ge=1)
    kmeans_iterations: int = Field(25, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    eval_n: list[int] = Field(default_factory=lambda: [1])
    averaging: Literal["macro", "micro"] = "macro"
    transition_alpha: float = Field(1.0, ge=0)
    exclude_own_video: bool = True
    workers: int = Field(1, ge=1)

    @field_validator("sources", mode="before")
    @classmethod
    def _parse_sources(cls, v):
        if isinstance(v, str):
            v = [p for p in v.replace("+", ",").split(",") if p.strip()]
        return [Source.parse(s) if isinstance(s, str) else s for s in v]

    @field_validator("eval_n")
    @classmethod
    def _check_n(cls, v):
        if not v or min(v) < 1:
            raise ValueError("eval_n needs at least one N >= 1")
        return sorted(set(v))

    @model_validator(mode="after")
    def _check(self):
        if not self.sources:
            raise ValueError("source mask is empty")
        self.sources = [s for s in ALL_SOURCES if s in set(self.sources)]
        if self.index_mode is IndexMode.HKMEANS and self.max_checks < self.K:
            raise ValueError(f"max_checks ({self.max_checks}) must be >= K ({self.K})")
        return self

    @property
    def hkm_params(self) -> HkmParams:
        return HkmParams(
            branching=self.branching,
            max_leaf=self.max_leaf,
            max_checks=self.max_checks,
            restarts=self.restarts,
            seed=self.seed,
            iterations=self.kmeans_iterations,
        )

    @property
    def source_label(self) -> str:
        return source_label(self.sources)

    def snapshot(self) -> dict:
        return json.loads(self.model_dump_json())


def source_label(sources) -> str:
    present = set(sources)
    return "+".join(s.letter for s in ALL_SOURCES if s in present)


def make_config(**values) -> PipelineConfig:
    try:
        return PipelineConfig(**values)
    except ValidationError as exc:
        raise ConfigError(_summarize(exc)) from None


def load_config(path=None, **overrides) -> PipelineConfig:
    """Read a YAML/JSON config file (optional) and apply non-None overrides."""
    values = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        try:
            values = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: expected a mapping")
    values.update({k: v for k, v in overrides.items() if v is not None})
    return make_config(**values)


def _summarize(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "config"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)

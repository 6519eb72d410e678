"""Request and response bodies shared by the HTTP service and the CLI client.

Paths refer to the filesystem the service runs on.
"""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class _Body(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ConfigSource(_Body):
    config_path: Optional[str] = None
    overrides: dict[str, Any] = Field(default_factory=dict)


class AnnotateRequest(_Body):
    config: ConfigSource = Field(default_factory=ConfigSource)
    corpus: list[str]
    manifests: list[str]
    ground_truth: Optional[str] = None
    transitions: Optional[str] = None
    synonyms: Optional[str] = None
    stopwords: Optional[str] = None
    out_dir: Optional[str] = None


class AnnotateResponse(_Body):
    annotations: list[dict]
    report: Optional[dict] = None
    report_text: Optional[str] = None
    manifest: dict


class EvaluateRequest(_Body):
    annotations: str
    ground_truth: str
    n: list[int] = Field(default_factory=lambda: [1])
    averaging: Literal["macro", "micro"] = "macro"
    out_dir: Optional[str] = None


class EvaluateResponse(_Body):
    report: dict
    report_text: str


class AblateRequest(_Body):
    config: ConfigSource = Field(default_factory=ConfigSource)
    masks: list[str]
    corpus: list[str]
    manifests: list[str]
    ground_truth: str
    transitions: Optional[str] = None
    synonyms: Optional[str] = None
    stopwords: Optional[str] = None
    out_dir: Optional[str] = None


class AblateResponse(_Body):
    rows: dict[str, dict]
    table: str


class TransitionsRequest(_Body):
    ground_truth: str
    manifests: list[str]
    d_max: int = Field(3, ge=0)
    alpha: float = Field(1.0, ge=0)
    out: Optional[str] = None


class TransitionsResponse(_Body):
    d_max: int
    rows: list[dict]


class IndexBuildRequest(_Body):
    config: ConfigSource = Field(default_factory=ConfigSource)
    corpus: list[str]
    out: str


class IndexBuildResponse(_Body):
    path: str
    n: int
    dim: int
    n_nodes: int
    mode: str


class IndexQueryRequest(_Body):
    index: str
    K: int = Field(10, ge=1)
    descriptor: Optional[list[float]] = None
    manifest: Optional[str] = None
    frame_id: Optional[str] = None


class Neighbor(_Body):
    id: str
    distance: float


class IndexQueryResponse(_Body):
    frame_id: Optional[str] = None
    neighbors: list[Neighbor]


class ErrorBody(_Body):
    error: str
    kind: Literal["input", "config", "invariant"]
    exit_code: int
    stage: Optional[str] = None
    item: Optional[str] = None

"""Tag suggestion from co-occurrence with the localized tags, damped by relevance rank."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Iterable

from .corpus import RetrievalSet
from .relevance import (
    EPSILON,
    Neighborhood,
    RelevanceScore,
    VoteScheme,
    localize_video_tags,
    relevance_table,
)


@dataclass(frozen=True)
class CooccurrenceModel:
    neighbors: dict  # tag -> {other_tag: count}
    tag_totals: dict  # tag -> number of images carrying it

    def pair(self, a: str, b: str) -> int:
        if a == b:
            return 0
        return self.neighbors.get(a, {}).get(b, 0)

    @property
    def pair_counts(self) -> dict:
        return {(a, b): c for a, row in self.neighbors.items() for b, c in row.items()}


def build_cooccurrence(images: Iterable) -> CooccurrenceModel:
    neighbors: dict = {}
    totals: dict = {}
    for img in images:
        tags = sorted(img.tags)
        for t in tags:
            totals[t] = totals.get(t, 0) + 1
        for a, b in combinations(tags, 2):
            row_a = neighbors.setdefault(a, {})
            row_b = neighbors.setdefault(b, {})
            row_a[b] = row_a.get(b, 0) + 1
            row_b[a] = row_b.get(a, 0) + 1
    return CooccurrenceModel(neighbors, totals)


def candidate_tags(localized, neighborhood_tags, model: CooccurrenceModel) -> set:
    """Neighbourhood tags whose co-occurrence with the localized set is above the mean."""
    anchors = set(localized)
    pool = sorted(set(neighborhood_tags) - anchors)
    if not anchors or not pool:
        return set()
    c = {u: sum(model.pair(t, u) for t in anchors) for u in pool}
    mean = sum(c.values()) / len(c)
    return {u for u in pool if c[u] > mean}


def vote_plus(u: str, localized, model: CooccurrenceModel) -> float:
    # each anchor tag votes for u with its normalized co-occurrence
    return sum(model.pair(t, u) / max(model.tag_totals.get(t, 0), 1) for t in sorted(localized))


def damped_score(suggestion: float, rank: int, damping: float = 20.0) -> float:
    if rank < 1:
        raise ValueError("rank must be >= 1")
    if damping <= 0:
        raise ValueError("damping must be positive")
    return suggestion * (damping / (damping + (rank - 1)))


@dataclass(frozen=True)
class ScoredTag:
    tag: str
    relevance_rank: int
    suggestion: float
    final: float


@dataclass(frozen=True)
class FrameAnnotation:
    frame_id: str
    timestamp: float
    localized: tuple  # RelevanceScore with value > 0, best first
    suggested: tuple  # ScoredTag, best first
    video_scores: tuple = ()  # every video tag's RelevanceScore
    ranks: dict = field(default_factory=dict, compare=False)  # tag -> rank over T_K

    @property
    def all_tags(self) -> list:
        return [(s.tag, s.value) for s in self.localized] + [(s.tag, s.final) for s in self.suggested]

    @property
    def tags(self) -> set:
        return {s.tag for s in self.localized} | {s.tag for s in self.suggested}


@dataclass(frozen=True)
class AnnotateConfig:
    scheme: VoteScheme = VoteScheme.BINARY
    epsilon: float = EPSILON
    damping: float = 20.0
    top_k_suggest: int = 5


Scorer = Callable[[str, set, CooccurrenceModel], float]


def annotate_frame(
    frame,
    video_tags,
    nb: Neighborhood,
    rs: RetrievalSet,
    model: CooccurrenceModel,
    config: AnnotateConfig = AnnotateConfig(),
    scorer: Scorer = vote_plus,
) -> FrameAnnotation:
    scheme = VoteScheme(config.scheme)
    video_scores = localize_video_tags(frame, video_tags, nb, rs, scheme, config.epsilon)
    localized = tuple(s for s in video_scores if s.value > 0)
    anchors = {s.tag for s in localized}

    table = relevance_table(nb, rs, scheme, config.epsilon)
    ranked = sorted(table, key=lambda t: (-table[t], t))
    ranks = {t: i for i, t in enumerate(ranked, 1)}

    scored = []
    for u in candidate_tags(anchors, table.keys(), model):
        if u in video_tags:
            continue  # original tags are localized, not suggested
        s = scorer(u, anchors, model)
        scored.append(ScoredTag(u, ranks[u], s, damped_score(s, ranks[u], config.damping)))
    scored.sort(key=lambda s: (-s.final, s.tag))
    suggested = tuple(scored[: config.top_k_suggest])

    return FrameAnnotation(
        frame_id=getattr(frame, "frame_id", nb.frame_id),
        timestamp=float(getattr(frame, "timestamp", 0.0)),
        localized=localized,
        suggested=suggested,
        video_scores=tuple(video_scores),
        ranks=ranks,
    )


def refine_video_tags(annotations: Iterable[FrameAnnotation]) -> set:
    out = set()
    for a in annotations:
        out |= a.tags
    return out


__all__ = [
    "CooccurrenceModel",
    "FrameAnnotation",
    "AnnotateConfig",
    "RelevanceScore",
    "ScoredTag",
    "annotate_frame",
    "build_cooccurrence",
    "candidate_tags",
    "damped_score",
    "refine_video_tags",
    "vote_plus",
]

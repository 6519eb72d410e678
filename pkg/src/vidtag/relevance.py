"""Neighbour-voting tag relevance and keyframe-level localization of video tags."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .corpus import RetrievalSet
from .errors import InputError
from .index import NeighborList

EPSILON = 1e-12


class VoteScheme(str, enum.Enum):
    BINARY = "binary"
    DISTANCE_WEIGHTED = "distance_weighted"


@dataclass(frozen=True)
class Neighborhood:
    frame_id: str
    entries: tuple  # ((image_id, distance, frozenset_of_tags), ...)

    @property
    def K(self) -> int:
        return len(self.entries)

    @property
    def tag_union(self) -> frozenset:
        out = set()
        for _, _, tags in self.entries:
            out |= tags
        return frozenset(out)

    @classmethod
    def from_neighbors(cls, frame_id: str, neighbors: NeighborList, rs: RetrievalSet) -> "Neighborhood":
        by_id = rs.by_id
        return cls(frame_id, tuple((i, d, by_id[i].tags) for i, d in neighbors.entries))


@dataclass(frozen=True)
class RelevanceScore:
    tag: str
    value: float


def vote(tag: str, image_tags, distance: float, scheme=VoteScheme.BINARY, epsilon: float = EPSILON) -> float:
    if tag not in image_tags:
        return 0.0
    if VoteScheme(scheme) is VoteScheme.BINARY:
        return 1.0
    return 1.0 / max(distance * distance, epsilon)


def relevance_table(nb: Neighborhood, rs: RetrievalSet, scheme=VoteScheme.BINARY, epsilon: float = EPSILON) -> dict:
    """Relevance of every tag carried by at least one neighbour.

    Votes are accumulated neighbour by neighbour in list order, which is the
    same order ``tag_relevance`` uses, so both give identical floats.
    """
    if nb.K == 0:
        raise InputError("empty neighborhood", item=nb.frame_id)
    scheme = VoteScheme(scheme)
    sums: dict = {}
    for _, dist, tags in nb.entries:
        w = 1.0 if scheme is VoteScheme.BINARY else 1.0 / max(dist * dist, epsilon)
        for t in tags:
            sums[t] = sums.get(t, 0.0) + w
    out = {}
    for t, s in sums.items():
        if t not in rs.tag_counts:
            raise InputError("neighbor tag missing from vocabulary", item=t)
        out[t] = s / nb.K - rs.prior(t)
    return out


def tag_relevance(tag: str, nb: Neighborhood, rs: RetrievalSet, scheme=VoteScheme.BINARY, epsilon: float = EPSILON) -> RelevanceScore:
    if tag not in rs.vocabulary:
        raise InputError("tag not in vocabulary", item=tag)
    if nb.K == 0:
        raise InputError("empty neighborhood", item=nb.frame_id)
    total, carried = 0.0, False
    for _, dist, tags in nb.entries:
        if tag in tags:
            carried = True
            total += vote(tag, tags, dist, scheme, epsilon)
    if not carried:
        return RelevanceScore(tag, 0.0)
    return RelevanceScore(tag, total / nb.K - rs.prior(tag))


def rank_scores(scores) -> list[RelevanceScore]:
    """Sort by value descending, ties by tag ascending."""
    return sorted(scores, key=lambda s: (-s.value, s.tag))


def localize_video_tags(frame, video_tags, nb: Neighborhood, rs: RetrievalSet, scheme=VoteScheme.BINARY, epsilon: float = EPSILON) -> list[RelevanceScore]:
    """Score each video tag at this keyframe.

    The localized set is the prefix with ``value > 0``; tags no neighbour
    carries score exactly 0.
    """
    if nb.K == 0:
        raise InputError("empty neighborhood", item=getattr(frame, "frame_id", nb.frame_id))
    return rank_scores(tag_relevance(t, nb, rs, scheme, epsilon) for t in video_tags)

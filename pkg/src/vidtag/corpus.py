"""Corpus and manifest loading plus the per-video retrieval set.

Corpus files are JSON Lines, one image per line::

    {"id": "flickr/123", "source": "flickr", "query_tag": "baseball",
     "tags": ["baseball", "stadium"], "descriptor": [0.1, ...]}

Instead of an inline ``descriptor`` a record may carry
``"descriptor_ref": {"offset": o, "length": n}``, addressing ``n`` float32
values (little-endian, row-major) starting at element ``o`` of the sidecar
blob that sits next to the corpus file with the suffix ``.f32``.  VIDEO
records may name their originating ``video_id`` so that a video is never
annotated with its own keyframes.
"""

from __future__ import annotations

import enum
import json
import re
import unicodedata
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import InputError

DEFAULT_STOPWORDS = frozenset(
    """
    a about above after again against all am an and any are as at be because
    been before being below between both but by can could did do does doing
    down during each few for from further had has have having he her here hers
    herself him himself his how i if in into is it its itself just me more
    most my myself no nor not now of off on once only or other our ours
    ourselves out over own same she should so some such than that the their
    theirs them themselves then there these they this those through to too
    under until up very was we were what when where which while who whom why
    will with you your yours yourself yourselves video videos youtube
    """.split()
)

DEFAULT_DATE_PATTERNS = (
    r"\d{4}-\d{1,2}-\d{1,2}",
    r"\d{1,2}/\d{1,2}/\d{4}",
    r"(19|20)\d{2}",
)


class Source(str, enum.Enum):
    VIDEO = "video"
    FLICKR = "flickr"
    GOOGLE = "google"
    BING = "bing"

    @property
    def letter(self) -> str:
        return {"video": "V", "flickr": "F", "google": "G", "bing": "B"}[self.value]

    @classmethod
    def parse(cls, value: str) -> "Source":
        v = value.strip().lower()
        for s in cls:
            if v in (s.value, s.letter.lower()):
                return s
        raise ValueError(f"unknown source {value!r}")


SEARCH_ENGINES = frozenset({Source.GOOGLE, Source.BING})


@dataclass(frozen=True)
class FilterRules:
    stopwords: frozenset = DEFAULT_STOPWORDS
    date_patterns: tuple = DEFAULT_DATE_PATTERNS

    @cached_property
    def _compiled(self):
        return tuple(re.compile(p) for p in self.date_patterns)

    def is_date(self, text: str) -> bool:
        return any(p.fullmatch(text) for p in self._compiled)


DEFAULT_RULES = FilterRules()


def _bad_char(c: str) -> bool:
    # digits, punctuation, symbols, controls/format characters
    return unicodedata.category(c)[0] in "NPSC"


def normalize_tag(raw: str, rules: FilterRules = DEFAULT_RULES) -> str | None:
    """Normalize a raw user tag, or return None when it must be filtered out.

    Multi-word tags are joined with underscores ("gas station" ->
    "gas_station"); the underscore is the only non-letter allowed.
    """
    text = unicodedata.normalize("NFKC", raw).strip()
    if not text or rules.is_date(text):
        return None
    text = unicodedata.normalize("NFKC", "_".join(text.lower().split()))
    if not text or rules.is_date(text):
        return None
    if text.startswith("_") or text.endswith("_") or "__" in text:
        return None
    if any(_bad_char(c) for c in text if c != "_"):
        return None
    if text in rules.stopwords or text.replace("_", " ") in rules.stopwords:
        return None
    return text


def load_stopwords(path) -> frozenset:
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip().lower()
            if line:
                words.add(line)
    return frozenset(words)


@dataclass(frozen=True)
class TaggedImage:
    id: str
    source: Source
    tags: frozenset
    descriptor: np.ndarray = field(repr=False, compare=False)
    query_tag: str | None = None
    video_id: str | None = None

    def __post_init__(self):
        if not self.tags:
            raise InputError("image has no tags", item=self.id)
        if self.source in SEARCH_ENGINES and self.tags != frozenset({self.query_tag}):
            raise InputError(
                f"{self.source.value} images carry only their query tag", item=self.id
            )


@dataclass(frozen=True)
class Keyframe:
    frame_id: str
    timestamp: float
    descriptor: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class VideoManifest:
    video_id: str
    video_tags: frozenset
    keyframes: tuple

    def __post_init__(self):
        ts = [k.timestamp for k in self.keyframes]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise InputError("keyframe timestamps must be strictly increasing", item=self.video_id)
        dims = {len(k.descriptor) for k in self.keyframes}
        if len(dims) > 1:
            raise InputError("keyframe descriptors differ in length", item=self.video_id)

    def descriptors(self) -> np.ndarray:
        if not self.keyframes:
            return np.zeros((0, 0), dtype=np.float32)
        return np.stack([k.descriptor for k in self.keyframes])


@dataclass(frozen=True)
class SynonymTable:
    synonyms: Mapping[str, frozenset]
    expansion_weight: float = 1.0 / 3.0

    def __post_init__(self):
        if not 0.0 < self.expansion_weight <= 1.0:
            raise InputError(f"expansion_weight must lie in (0, 1], got {self.expansion_weight}")
        for tag, syns in self.synonyms.items():
            if tag in syns:
                raise InputError("synonym table maps a tag to itself", item=tag)

    def expand(self, tags: Iterable[str]) -> frozenset:
        out = set()
        for t in tags:
            out |= self.synonyms.get(t, frozenset())
        return frozenset(out)


def load_synonyms(path, rules: FilterRules = DEFAULT_RULES) -> SynonymTable:
    """Read ``{"expansion_weight": w, "synonyms": {tag: [tag, ...]}}``."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON: {exc}") from None
    table = {}
    for raw, raw_syns in data.get("synonyms", {}).items():
        tag = normalize_tag(raw, rules)
        if tag is None:
            continue
        syns = {normalize_tag(s, rules) for s in raw_syns} - {None, tag}
        if syns:
            table[tag] = frozenset(table.get(tag, frozenset()) | syns)
    return SynonymTable(table, float(data.get("expansion_weight", 1.0 / 3.0)))


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".f32")


class _Blob:
    def __init__(self, path: Path):
        self.path = path
        self._data = None

    def read(self, offset: int, length: int) -> np.ndarray:
        if self._data is None:
            if not self.path.exists():
                raise InputError(f"sidecar blob {self.path} not found")
            self._data = np.memmap(self.path, dtype="<f4", mode="r")
        if offset < 0 or length < 0 or offset + length > len(self._data):
            raise InputError(f"descriptor_ref ({offset},{length}) outside {self.path}")
        return np.array(self._data[offset : offset + length], dtype=np.float32)


def _descriptor(rec: dict, blob: _Blob) -> np.ndarray:
    if "descriptor" in rec:
        return np.asarray(rec["descriptor"], dtype=np.float32)
    ref = rec.get("descriptor_ref")
    if isinstance(ref, dict):
        return blob.read(int(ref["offset"]), int(ref["length"]))
    if isinstance(ref, (list, tuple)) and len(ref) == 2:
        return blob.read(int(ref[0]), int(ref[1]))
    raise KeyError("descriptor")


def _parse_image(rec: dict, blob: _Blob, rules: FilterRules) -> TaggedImage | None:
    source = Source.parse(rec["source"])
    query = rec.get("query_tag")
    query = normalize_tag(query, rules) if query else None
    if source in SEARCH_ENGINES:
        if query is None and not rec.get("query_tag"):
            raw = rec.get("tags") or []
            if len(raw) != 1:
                raise KeyError("query_tag")
            query = normalize_tag(raw[0], rules)
        tags = {query} - {None}
    else:
        tags = {normalize_tag(t, rules) for t in rec.get("tags", [])} - {None}
        if query is not None:
            tags.add(query)
    if not tags:
        return None
    return TaggedImage(
        id=str(rec["id"]),
        source=source,
        tags=frozenset(tags),
        descriptor=_descriptor(rec, blob),
        query_tag=query,
        video_id=rec.get("video_id"),
    )


def load_corpus(paths, dim: int | None, rules: FilterRules = DEFAULT_RULES) -> list[TaggedImage]:
    """Parse corpus files; images whose tags are all filtered out are dropped.

    With ``dim=None`` the first kept record fixes the descriptor length.
    """
    images = []
    for path in map(Path, paths):
        blob = _Blob(_sidecar(path))
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    img = _parse_image(json.loads(line), blob, rules)
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise InputError(f"{path}:{lineno}: malformed record ({exc})") from None
                if img is None:
                    continue
                if dim is None:
                    dim = len(img.descriptor)
                if len(img.descriptor) != dim:
                    raise InputError(
                        f"descriptor has {len(img.descriptor)} dims, expected {dim}", item=img.id
                    )
                images.append(img)
    return images


def load_manifest(path, dim: int | None = None, rules: FilterRules = DEFAULT_RULES) -> VideoManifest:
    path = Path(path)
    blob = _Blob(_sidecar(path))
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        frames = tuple(
            Keyframe(str(k["frame_id"]), float(k["timestamp_s"]), _descriptor(k, blob))
            for k in data["keyframes"]
        )
        video_id = str(data["video_id"])
        tags = frozenset({normalize_tag(t, rules) for t in data.get("video_tags", [])} - {None})
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed manifest ({exc})") from None
    if dim is not None:
        for k in frames:
            if len(k.descriptor) != dim:
                raise InputError(
                    f"descriptor has {len(k.descriptor)} dims, expected {dim}", item=k.frame_id
                )
    return VideoManifest(video_id, tags, frames)


def write_corpus(path, images: Iterable[TaggedImage], sidecar: bool = False) -> None:
    """Write images in the corpus format, optionally with a binary sidecar."""
    path = Path(path)
    images = list(images)
    with open(path, "w", encoding="utf-8") as fh:
        offset = 0
        for img in images:
            rec = {"id": img.id, "source": img.source.value, "tags": sorted(img.tags)}
            if img.query_tag:
                rec["query_tag"] = img.query_tag
            if img.video_id:
                rec["video_id"] = img.video_id
            if sidecar:
                rec["descriptor_ref"] = {"offset": offset, "length": len(img.descriptor)}
                offset += len(img.descriptor)
            else:
                rec["descriptor"] = [float(x) for x in img.descriptor]
            fh.write(json.dumps(rec) + "\n")
    if sidecar:
        arr = np.concatenate([np.asarray(i.descriptor, "<f4") for i in images]) if images else np.zeros(0, "<f4")
        arr.astype("<f4").tofile(_sidecar(path))


def write_manifest(path, video: VideoManifest) -> None:
    data = {
        "video_id": video.video_id,
        "video_tags": sorted(video.video_tags),
        "keyframes": [
            {"frame_id": k.frame_id, "timestamp_s": k.timestamp, "descriptor": [float(x) for x in k.descriptor]}
            for k in video.keyframes
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh)


@dataclass(frozen=True)
class RetrievalSet:
    """The per-video image pool with its vocabulary and prior counts.

    ``tag_counts`` may hold fractional values: images reached only through
    a synonym count with the table's expansion weight.
    """

    images: tuple
    vocabulary: frozenset
    tag_counts: Mapping[str, float]
    total: int

    def prior(self, tag: str) -> float:
        return self.tag_counts[tag] / self.total

    @cached_property
    def matrix(self) -> np.ndarray:
        return np.stack([img.descriptor for img in self.images]).astype(np.float32, copy=False)

    @cached_property
    def by_id(self) -> dict:
        return {img.id: img for img in self.images}


def build_retrieval_set(
    images: Iterable[TaggedImage],
    video_tags: Iterable[str],
    synonyms: SynonymTable | None = None,
) -> RetrievalSet:
    direct = frozenset(video_tags)
    expanded = synonyms.expand(direct) - direct if synonyms else frozenset()
    weight_syn = synonyms.expansion_weight if synonyms else 1.0

    kept, counts = [], {}
    for img in images:
        keys = {img.query_tag} if img.query_tag else img.tags
        if keys & direct:
            w = 1.0
        elif keys & expanded:
            w = weight_syn
        else:
            continue
        kept.append(img)
        for t in img.tags:
            counts[t] = counts.get(t, 0.0) + w
    if not kept:
        raise InputError("retrieval set empty")
    return RetrievalSet(tuple(kept), frozenset(counts), counts, len(kept))

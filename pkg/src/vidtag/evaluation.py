"""Ground-truth intervals and Precision@N / Recall@N reporting."""

from __future__ import annotations

import csv
import enum
import json
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .corpus import normalize_tag
from .errors import InputError


class Category(str, enum.Enum):
    EVENTS = "events"
    OBJECTS = "objects"
    ACTIVITIES = "activities"
    SCENES = "scenes"
    SITES = "sites"

    @classmethod
    def parse(cls, value: str | None) -> "Category | None":
        if not value or not value.strip():
            return None
        v = value.strip().lower()
        for c in cls:
            if v in (c.value, c.value.rstrip("s")):
                return c
        raise ValueError(f"unknown category {value!r}")


UNCATEGORIZED = "uncategorized"


@dataclass
class GroundTruth:
    intervals: dict = field(default_factory=dict)  # (video_id, tag) -> [(start, end), ...]
    categories: dict = field(default_factory=dict)  # tag -> Category

    def add(self, video_id: str, tag: str, start: float | None = None, end: float | None = None, category=None):
        spans = self.intervals.setdefault((video_id, tag), [])
        if start is not None:
            if not start < end:
                raise InputError(f"interval [{start}, {end}) is empty", item=f"{video_id}/{tag}")
            for s, e in spans:
                if start < e and s < end:
                    raise InputError("overlapping intervals", item=f"{video_id}/{tag}")
            spans.append((float(start), float(end)))
            spans.sort()
        if category is not None:
            self.categories[tag] = category

    @property
    def videos(self) -> set:
        return {v for v, _ in self.intervals}

    def tags_of(self, video_id: str) -> set:
        return {t for v, t in self.intervals if v == video_id}

    def videos_of(self, tag: str) -> set:
        return {v for v, t in self.intervals if t == tag}

    def category_of(self, tag: str) -> str:
        c = self.categories.get(tag)
        return c.value if c else UNCATEGORIZED


def load_ground_truth(path) -> GroundTruth:
    """Read CSV rows ``video_id,tag,start_s,end_s,category``.

    Rows with empty start/end only associate the tag with the video.
    """
    gt = GroundTruth()
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.DictReader(fh), 2):
            try:
                tag = normalize_tag(row["tag"])
                if tag is None:
                    raise ValueError(f"tag {row['tag']!r} is filtered out by normalization")
                start = row.get("start_s") or None
                end = row.get("end_s") or None
                gt.add(
                    row["video_id"],
                    tag,
                    None if start is None else float(start),
                    None if end is None else float(end),
                    Category.parse(row.get("category")),
                )
            except (KeyError, TypeError, ValueError, InputError) as exc:
                raise InputError(f"{path}:{lineno}: malformed ground-truth row ({exc})") from None
    return gt


def write_ground_truth(path, gt: GroundTruth) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["video_id", "tag", "start_s", "end_s", "category"])
        for (video, tag) in sorted(gt.intervals):
            cat = gt.categories.get(tag)
            spans = gt.intervals[(video, tag)] or [("", "")]
            for s, e in spans:
                w.writerow([video, tag, s, e, cat.value if cat else ""])


def frame_truth(gt: GroundTruth, video_id: str, timestamp: float) -> set:
    if video_id not in gt.videos:
        raise InputError("video not in ground truth", item=video_id)
    return {
        tag
        for (v, tag), spans in gt.intervals.items()
        if v == video_id and any(s <= timestamp < e for s, e in spans)
    }


def truth_bits(gt: GroundTruth, video_id: str, tag: str, timestamps: Iterable[float]) -> list[bool]:
    spans = gt.intervals.get((video_id, tag), [])
    return [any(s <= t < e for s, e in spans) for t in timestamps]


def negative_sample(gt: GroundTruth, tag: str, n_tags: int = 10, n_videos: int = 10, seed: int = 0) -> list[str]:
    """Pick videos of other tags for a closed-world retrieval set.

    Draws ``n_tags`` other tags and then ``n_videos`` videos among theirs,
    both without replacement, from a seeded generator.
    """
    rng = random.Random(seed)
    own = gt.videos_of(tag)
    others = sorted({t for _, t in gt.intervals} - {tag})
    picked = rng.sample(others, min(n_tags, len(others)))
    pool = sorted({v for t in picked for v in gt.videos_of(t)} - own)
    return rng.sample(pool, min(n_videos, len(pool)))


@dataclass(frozen=True)
class RankedFrame:
    video_id: str
    frame_id: str
    timestamp: float
    ranked: tuple  # tags, best first


@dataclass
class EvalReport:
    ns: tuple
    per_tag: dict  # tag -> {"P@N": v, "R@N": v}
    per_category: dict  # category -> {...}
    overall: dict
    categories: dict  # tag -> category name
    averaging: str = "macro"
    frames: int = 0

    def to_dict(self) -> dict:
        return {
            "averaging": self.averaging,
            "frames": self.frames,
            "N": list(self.ns),
            "per_tag": self.per_tag,
            "per_category": self.per_category,
            "overall": self.overall,
            "categories": self.categories,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def columns(self) -> list:
        order = [c.value for c in Category] + [UNCATEGORIZED]
        return [c for c in order if c in self.per_category]

    def format_table(self) -> str:
        cols = self.columns()
        lines = []
        for n in self.ns:
            for metric in (f"P@{n}", f"R@{n}"):
                head = [metric] + cols + ["avg"]
                row = [""] + [_pct(self.per_category[c].get(metric)) for c in cols] + [_pct(self.overall.get(metric))]
                lines.append("  ".join(f"{h:>12}" for h in head))
                lines.append("  ".join(f"{v:>12}" for v in row))
                lines.append("")
        lines.append(f"{'tag':<24}{'category':<14}" + "".join(f"{m:>9}" for n in self.ns for m in (f'P@{n}', f'R@{n}')))
        for tag in sorted(self.per_tag):
            vals = self.per_tag[tag]
            lines.append(
                f"{tag:<24}{self.categories[tag]:<14}"
                + "".join(f"{_pct(vals.get(m)):>9}" for n in self.ns for m in (f'P@{n}', f'R@{n}'))
            )
        return "\n".join(lines) + "\n"


def _pct(v) -> str:
    return "-" if v is None else f"{100 * v:.1f}"


def _mean(xs):
    xs = list(xs)
    return sum(xs) / len(xs) if xs else None


def frame_metrics(ranked, truth: set, n: int):
    """Return ``(precision or None, recall or None)`` for one keyframe."""
    hits = len(set(ranked[:n]) & truth)
    p = hits / n if (truth or ranked) else None
    r = hits / len(truth) if truth else None
    return p, r


def precision_recall_at(frames: Iterable[RankedFrame], gt: GroundTruth, ns=(1,), averaging: str = "macro") -> EvalReport:
    """Precision@N and Recall@N.

    ``macro`` averages frame values per tag over the frames of the videos
    labelled with that tag; category and overall figures are means over
    tags.  ``micro`` pools every frame once.
    """
    ns = tuple(sorted({int(n) for n in ns}))
    if not ns or ns[0] < 1:
        raise InputError("N must be >= 1")
    if averaging not in ("macro", "micro"):
        raise InputError(f"unknown averaging {averaging!r}")
    frames = list(frames)

    per_tag_vals: dict = {}
    pooled: dict = {}
    for fr in frames:
        truth = frame_truth(gt, fr.video_id, fr.timestamp)
        labels = gt.tags_of(fr.video_id)
        for n in ns:
            p, r = frame_metrics(list(fr.ranked), truth, n)
            for metric, v in ((f"P@{n}", p), (f"R@{n}", r)):
                if v is None:
                    continue
                pooled.setdefault(metric, []).append(v)
                for tag in labels:
                    per_tag_vals.setdefault(tag, {}).setdefault(metric, []).append(v)

    metrics = [m for n in ns for m in (f"P@{n}", f"R@{n}")]
    per_tag = {
        tag: {m: _mean(vals.get(m, [])) for m in metrics}
        for tag, vals in sorted(per_tag_vals.items())
    }
    categories = {tag: gt.category_of(tag) for tag in per_tag}
    per_category = {}
    for cat in sorted(set(categories.values())):
        members = [t for t in per_tag if categories[t] == cat]
        per_category[cat] = {
            m: _mean(per_tag[t][m] for t in members if per_tag[t][m] is not None) for m in metrics
        }
    if averaging == "macro":
        overall = {m: _mean(per_tag[t][m] for t in per_tag if per_tag[t][m] is not None) for m in metrics}
    else:
        overall = {m: _mean(pooled.get(m, [])) for m in metrics}
    return EvalReport(ns, per_tag, per_category, overall, categories, averaging, len(frames))


def format_comparison(rows: Mapping[str, EvalReport], n: int = 1) -> str:
    """Side-by-side table, one row per configuration."""
    cols = []
    for rep in rows.values():
        for c in rep.columns():
            if c not in cols:
                cols.append(c)
    head = ["config"] + [f"P@{n} {c}" for c in cols] + [f"P@{n} avg"] + [f"R@{n} {c}" for c in cols] + [f"R@{n} avg"]
    out = [" | ".join(head)]
    for name, rep in rows.items():
        cells = [name]
        for metric in (f"P@{n}", f"R@{n}"):
            cells += [_pct(rep.per_category.get(c, {}).get(metric)) for c in cols]
            cells.append(_pct(rep.overall.get(metric)))
        out.append(" | ".join(cells))
    return "\n".join(out) + "\n"

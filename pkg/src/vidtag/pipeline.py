"""End-to-end annotation runs over one or more videos."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import PipelineConfig, make_config, source_label
from .corpus import (
    DEFAULT_RULES,
    FilterRules,
    RetrievalSet,
    SynonymTable,
    TaggedImage,
    VideoManifest,
    build_retrieval_set,
    load_corpus,
    load_manifest,
    load_stopwords,
    load_synonyms,
)
from .errors import ConfigError, InputError, InvariantError, VidtagError
from .evaluation import EvalReport, GroundTruth, RankedFrame, format_comparison, load_ground_truth, precision_recall_at
from .index import build_from_matrix, normalize_descriptors
from .relevance import Neighborhood
from .suggest import AnnotateConfig, FrameAnnotation, annotate_frame, build_cooccurrence, refine_video_tags
from .temporal import FrameScoreSeries, TransitionTable, gaussian_weights, smooth

log = logging.getLogger(__name__)

STAGES = (
    "load",
    "retrieval_set",
    "index_build",
    "neighborhood_search",
    "scoring",
    "smoothing",
    "evaluation",
    "write",
)


class StageTimer:
    def __init__(self):
        self.seconds = {s: 0.0 for s in STAGES}
        self.start = time.perf_counter()

    @contextmanager
    def stage(self, name, item=None):
        t0 = time.perf_counter()
        try:
            yield
        except VidtagError as exc:
            exc.stage = exc.stage or name
            exc.item = exc.item or item
            raise
        except Exception as exc:
            raise InvariantError(f"{type(exc).__name__}: {exc}", stage=name, item=item) from exc
        finally:
            self.seconds[name] += time.perf_counter() - t0

    @property
    def wall(self) -> float:
        return time.perf_counter() - self.start


@dataclass
class FrameResult:
    annotation: FrameAnnotation
    smoothed: dict  # tag -> smoothed score
    ranked: tuple  # final tag ranking


@dataclass
class VideoResult:
    video_id: str
    video_tags: frozenset  # T_v after normalization
    localizable: frozenset  # T_v restricted to the retrieval vocabulary
    refined_tags: set  # T'_v
    vocabulary: frozenset
    frames: list
    retrieval_size: int
    transition_sources: dict = field(default_factory=dict)


@dataclass
class RunResult:
    videos: list
    report: EvalReport | None
    manifest: dict

    def annotation_lines(self) -> list[str]:
        lines = []
        for v in self.videos:
            for fr in v.frames:
                a = fr.annotation
                lines.append(json.dumps({
                    "type": "frame",
                    "video_id": v.video_id,
                    "frame_id": a.frame_id,
                    "timestamp": a.timestamp,
                    "localized": [[s.tag, s.value] for s in a.localized],
                    "suggested": [[s.tag, s.final, s.relevance_rank] for s in a.suggested],
                    "smoothed": [[t, fr.smoothed[t]] for t in fr.ranked],
                    "ranked": list(fr.ranked),
                }))
            lines.append(json.dumps({
                "type": "video",
                "video_id": v.video_id,
                "video_tags": sorted(v.video_tags),
                "refined_tags": sorted(v.refined_tags),
            }))
        return lines

    def ranked_frames(self) -> list[RankedFrame]:
        return [
            RankedFrame(v.video_id, fr.annotation.frame_id, fr.annotation.timestamp, fr.ranked)
            for v in self.videos
            for fr in v.frames
        ]


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _rank_smoothed(smoothed: dict, video_tags) -> tuple:
    # original tags first, then suggestions; each by score
    keep = [t for t, s in smoothed.items() if s > 0]
    return tuple(sorted(keep, key=lambda t: (t not in video_tags, -smoothed[t], t)))


def select_images(images, config: PipelineConfig, video_id: str | None = None) -> list[TaggedImage]:
    mask = set(config.sources)
    return [
        img
        for img in images
        if img.source in mask and not (config.exclude_own_video and video_id and img.video_id == video_id)
    ]


def annotate_video(
    video: VideoManifest,
    images,
    config: PipelineConfig,
    table: TransitionTable | None = None,
    synonyms: SynonymTable | None = None,
    timer: StageTimer | None = None,
) -> VideoResult:
    """Annotate every keyframe of one video against its own retrieval set."""
    timer = timer or StageTimer()
    vid = video.video_id

    with timer.stage("retrieval_set", vid):
        rs: RetrievalSet = build_retrieval_set(select_images(images, config, vid), video.video_tags, synonyms)
        localizable = frozenset(video.video_tags & rs.vocabulary)
        model = build_cooccurrence(rs.images)

    with timer.stage("index_build", vid):
        X = normalize_descriptors(rs.matrix, config.normalization)
        index = build_from_matrix([img.id for img in rs.images], X, config.hkm_params, config.index_mode)
        Q = normalize_descriptors(video.descriptors(), config.normalization) if video.keyframes else None

    opts = AnnotateConfig(config.vote_scheme, config.epsilon, config.damping, config.top_k_suggest)

    def one(k):
        frame = video.keyframes[k]
        t0 = time.perf_counter()
        nb = Neighborhood.from_neighbors(frame.frame_id, index.query(Q[k], config.K), rs)
        t1 = time.perf_counter()
        ann = annotate_frame(frame, localizable, nb, rs, model, opts)
        return ann, t1 - t0, time.perf_counter() - t1

    annotations = []
    if video.keyframes:
        t0 = time.perf_counter()
        try:
            if config.workers > 1:
                with ThreadPoolExecutor(config.workers) as pool:
                    results = list(pool.map(one, range(len(video.keyframes))))
            else:
                results = [one(k) for k in range(len(video.keyframes))]
        except VidtagError as exc:
            exc.stage = exc.stage or "scoring"
            exc.item = exc.item or vid
            raise
        except Exception as exc:
            raise InvariantError(f"{type(exc).__name__}: {exc}", stage="scoring", item=vid) from exc
        elapsed = time.perf_counter() - t0
        search = sum(r[1] for r in results)
        scoring = sum(r[2] for r in results)
        # split the wall time of the fan-out in proportion to per-frame work
        share = search / (search + scoring) if search + scoring > 0 else 1.0
        timer.seconds["neighborhood_search"] += elapsed * share
        timer.seconds["scoring"] += elapsed * (1 - share)
        annotations = [r[0] for r in results]

    with timer.stage("smoothing", vid):
        table = table or TransitionTable.uniform(max(config.d, 0))
        weights = gaussian_weights(config.d, config.sigma)
        tags = sorted(set(localizable) | refine_video_tags(annotations))
        raw = {t: [0.0] * len(annotations) for t in tags}
        for k, a in enumerate(annotations):
            for t, s in a.all_tags:
                raw[t][k] = s
        smoothed_series = {t: smooth(FrameScoreSeries(t, tuple(raw[t])), table, weights).scores for t in tags}
        frames = []
        for k, a in enumerate(annotations):
            sm = {t: smoothed_series[t][k] for t in tags}
            frames.append(FrameResult(a, sm, _rank_smoothed(sm, localizable)))
        refined = refine_video_tags(annotations)
        if not refined <= rs.vocabulary:
            raise InvariantError("refined tags escape the vocabulary", item=vid)

    return VideoResult(
        video_id=vid,
        video_tags=video.video_tags,
        localizable=localizable,
        refined_tags=refined,
        vocabulary=rs.vocabulary,
        frames=frames,
        retrieval_size=rs.total,
        transition_sources={t: table.source(t) for t in sorted(localizable)},
    )


def annotate_videos(videos, images, config, table=None, synonyms=None, ground_truth=None, timer=None):
    timer = timer or StageTimer()
    results = [annotate_video(v, images, config, table, synonyms, timer) for v in videos]
    report = None
    if ground_truth is not None:
        with timer.stage("evaluation"):
            frames = [
                RankedFrame(v.video_id, fr.annotation.frame_id, fr.annotation.timestamp, fr.ranked)
                for v in results
                for fr in v.frames
            ]
            report = precision_recall_at(frames, ground_truth, config.eval_n, config.averaging)
    return results, report


@dataclass
class Inputs:
    images: list
    videos: list
    ground_truth: GroundTruth | None = None
    table: TransitionTable | None = None
    synonyms: SynonymTable | None = None
    digests: dict = field(default_factory=dict)


def load_inputs(config, corpus_paths, manifest_paths, ground_truth=None, transitions=None,
                synonyms=None, stopwords=None, timer=None) -> tuple[Inputs, PipelineConfig]:
    timer = timer or StageTimer()
    digests = {}
    with timer.stage("load"):
        for p in [*corpus_paths, *manifest_paths, ground_truth, transitions, synonyms, stopwords]:
            if p is None:
                continue
            if not Path(p).exists():
                raise InputError(f"input file not found: {p}", item=str(p))
            digests[str(p)] = file_digest(p)
        rules = FilterRules(stopwords=load_stopwords(stopwords)) if stopwords else DEFAULT_RULES
        videos = [load_manifest(p, config.dim, rules) for p in manifest_paths]
        if config.dim is None:
            dims = [len(v.keyframes[0].descriptor) for v in videos if v.keyframes]
            if not dims:
                raise ConfigError("dim is unset and no keyframe to infer it from")
            config = config.model_copy(update={"dim": dims[0]})
            for v in videos:
                for k in v.keyframes:
                    if len(k.descriptor) != config.dim:
                        raise InputError("keyframe descriptor length differs", item=k.frame_id)
        images = load_corpus(corpus_paths, config.dim, rules)
        seen = set()
        for img in images:
            if img.id in seen:
                raise InputError("duplicate image id across corpus files", item=img.id)
            seen.add(img.id)
        gt = load_ground_truth(ground_truth) if ground_truth else None
        table = TransitionTable.load(transitions) if transitions else None
        syn = load_synonyms(synonyms, rules) if synonyms else None
    if table is not None and table.d_max < config.d:
        raise ConfigError(f"transition table covers lags up to {table.d_max}, config asks d={config.d}")
    return Inputs(images, videos, gt, table, syn, digests), config


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def run(config: PipelineConfig, corpus_paths, manifest_paths, ground_truth=None, transitions=None,
        synonyms=None, stopwords=None, out_dir=None) -> RunResult:
    """Run the whole annotation pipeline; files are written only after success."""
    timer = StageTimer()
    inputs, config = load_inputs(config, corpus_paths, manifest_paths, ground_truth, transitions,
                                 synonyms, stopwords, timer)
    videos, report = annotate_videos(inputs.videos, inputs.images, config, inputs.table,
                                     inputs.synonyms, inputs.ground_truth, timer)
    result = RunResult(videos, report, {})

    n_frames = sum(len(v.frames) for v in videos)
    manifest = {
        "version": __version__,
        "config": config.snapshot(),
        "inputs": inputs.digests,
        "counts": {
            "images_loaded": len(inputs.images),
            "videos": len(videos),
            "frames": n_frames,
            "retrieval_sizes": {v.video_id: v.retrieval_size for v in videos},
            "unlocalizable_tags": {
                v.video_id: sorted(v.video_tags - v.localizable) for v in videos if v.video_tags - v.localizable
            },
        },
        "transitions": "file" if inputs.table is not None else "none",
        "transition_sources": {v.video_id: v.transition_sources for v in videos},
        "choices": {
            "normalization": config.normalization.value,
            "synonym_prior": "fractional" if inputs.synonyms else "n/a",
        },
    }
    with timer.stage("write"):
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            _write_atomic(out / "annotations.jsonl", "\n".join(result.annotation_lines()) + "\n")
            if report is not None:
                _write_atomic(out / "report.json", report.to_json() + "\n")
                _write_atomic(out / "report.txt", report.format_table())
    wall = timer.wall
    manifest["timing"] = {
        "stages": dict(timer.seconds),
        "wall": wall,
        "per_frame": (timer.seconds["neighborhood_search"] + timer.seconds["scoring"]) / n_frames if n_frames else None,
    }
    result.manifest = manifest
    if out_dir is not None:
        _write_atomic(Path(out_dir) / "run_manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return result


def ablate_sources(config: PipelineConfig, masks, corpus_paths, manifest_paths, ground_truth,
                   transitions=None, synonyms=None, stopwords=None, out_dir=None):
    """Run the pipeline once per source mask; returns ``(reports, table_text)``."""
    masks = [list(m) for m in masks]
    if len(masks) < 2:
        raise ConfigError("ablation needs at least two source masks")
    if any(not m for m in masks):
        raise ConfigError("source mask is empty")
    if ground_truth is None:
        raise ConfigError("ablation needs ground truth")
    for mask in masks:
        make_config(**{**config.model_dump(), "sources": mask})
    inputs, config = load_inputs(config, corpus_paths, manifest_paths, ground_truth, transitions,
                                 synonyms, stopwords)
    reports = {}
    for mask in masks:
        cfg = make_config(**{**config.model_dump(), "sources": mask})  # canonical source order
        _, rep = annotate_videos(inputs.videos, inputs.images, cfg, inputs.table, inputs.synonyms,
                                 inputs.ground_truth)
        reports[source_label(cfg.sources)] = rep
    text = "".join(format_comparison(reports, n) for n in config.eval_n)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_atomic(out / "ablation.txt", text)
        _write_atomic(out / "ablation.json", json.dumps({k: r.to_dict() for k, r in reports.items()},
                                                        indent=2, sort_keys=True) + "\n")
    return reports, text


def estimate_from_ground_truth(gt: GroundTruth, manifests, d_max: int, alpha: float = 1.0) -> TransitionTable:
    """Transition table from ground truth sampled at the manifests' keyframe times."""
    from .evaluation import truth_bits
    from .temporal import estimate_transitions

    truth = []
    for video in manifests:
        if video.video_id not in gt.videos:
            continue
        ts = [k.timestamp for k in video.keyframes]
        for tag in sorted(gt.tags_of(video.video_id)):
            truth.append((video.video_id, tag, np.array(truth_bits(gt, video.video_id, tag, ts))))
    return estimate_transitions(truth, d_max, alpha)

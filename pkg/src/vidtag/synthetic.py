"""Synthetic corpora with planted geometry, for demos and end-to-end checks."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Keyframe, Source, TaggedImage, VideoManifest, write_corpus, write_manifest
from .evaluation import Category, GroundTruth, write_ground_truth

FRAME_STEP = 2.0  # seconds between keyframes


@dataclass
class PlantedData:
    images: list
    video: VideoManifest
    truth: GroundTruth
    centers: np.ndarray
    tags: tuple


def cluster_centers(n_clusters: int, dim: int, rng) -> np.ndarray:
    """Histogram-like centres, each concentrated on its own block of bins."""
    block = max(dim // n_clusters, 1)
    C = np.full((n_clusters, dim), 0.05)
    for c in range(n_clusters):
        C[c, c * block % dim : c * block % dim + block] += 1.0
    return C


def _sample(center, n, rng, noise):
    return np.abs(center + rng.normal(scale=noise, size=(n, len(center)))).astype(np.float32)


def planted(
    n_images: int = 500,
    dim: int = 32,
    n_frames: int = 20,
    tags=("beach", "forest"),
    companions=(("sand", "sea"), ("trees",)),
    noise: float = 0.15,
    flipped: tuple = (),
    seed: int = 0,
) -> PlantedData:
    """Two-cluster corpus and a video whose first half lies in cluster 0.

    Images of cluster c carry ``tags[c]``; Flickr images also carry the
    cluster's companion tags and VIDEO images the first companion only.
    Keyframes listed in ``flipped`` are drawn from the other cluster while
    the ground truth keeps their run's tag.
    """
    rng = np.random.default_rng(seed)
    C = cluster_centers(len(tags), dim, rng)
    cycle = [Source.VIDEO, Source.FLICKR, Source.GOOGLE, Source.BING]
    images = []
    for i in range(n_images):
        c = i % len(tags)
        src = cycle[(i // len(tags)) % len(cycle)]
        tag = tags[c]
        extra = set()
        if c < len(companions) and src is Source.FLICKR:
            extra = set(companions[c])
        elif c < len(companions) and src is Source.VIDEO:
            extra = set(companions[c][:1])
        images.append(TaggedImage(
            id=f"img{i:05d}",
            source=src,
            tags=frozenset({tag} | extra),
            descriptor=_sample(C[c], 1, rng, noise)[0],
            query_tag=tag,
            video_id=f"train{i % 7}" if src is Source.VIDEO else None,
        ))
    half = n_frames // 2
    frames = []
    for k in range(n_frames):
        c = 0 if k < half else 1
        if k in flipped:
            c = 1 - c
        frames.append(Keyframe(f"v0_f{k:03d}", k * FRAME_STEP, _sample(C[c], 1, rng, noise)[0]))
    video = VideoManifest("v0", frozenset(tags), tuple(frames))
    gt = GroundTruth()
    gt.add("v0", tags[0], 0.0, half * FRAME_STEP, Category.SCENES)
    gt.add("v0", tags[1], half * FRAME_STEP, n_frames * FRAME_STEP, Category.SCENES)
    return PlantedData(images, video, gt, C, tuple(tags))


def write_planted(data: PlantedData, out_dir, per_source: bool = True) -> dict:
    """Write the planted data to ``out_dir``; returns the written paths by role."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = []
    if per_source:
        for src in Source:
            path = out / f"corpus_{src.value}.jsonl"
            write_corpus(path, [i for i in data.images if i.source is src], sidecar=True)
            corpus.append(str(path))
    else:
        path = out / "corpus.jsonl"
        write_corpus(path, data.images)
        corpus.append(str(path))
    manifest = out / f"{data.video.video_id}.json"
    write_manifest(manifest, data.video)
    gt = out / "ground_truth.csv"
    write_ground_truth(gt, data.truth)
    return {"corpus": corpus, "manifests": [str(manifest)], "ground_truth": str(gt)}


def histogram_corpus(n: int, dim: int, n_clusters: int = 200, seed: int = 0, chunk: int = 5000) -> np.ndarray:
    """Large clustered non-negative matrix resembling bag-of-words histograms."""
    rng = np.random.default_rng(seed)
    centers = rng.gamma(0.3, 1.0, size=(n_clusters, dim)).astype(np.float32)
    labels = rng.integers(n_clusters, size=n)
    X = np.empty((n, dim), np.float32)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        X[lo:hi] = centers[labels[lo:hi]] + rng.gamma(0.3, 0.5, size=(hi - lo, dim)).astype(np.float32)
    return X

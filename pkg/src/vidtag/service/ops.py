"""Operations behind each endpoint.

The HTTP app and the in-process CLI both call these, so a request body means
the same thing whichever way it arrives.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..config import load_config, source_label
from ..corpus import load_corpus, load_manifest
from ..errors import ConfigError, InputError
from ..evaluation import RankedFrame, load_ground_truth, precision_recall_at
from ..index import DescriptorIndex, build_from_matrix, normalize_descriptors
from ..pipeline import _write_atomic, ablate_sources, estimate_from_ground_truth, run, select_images
from . import schemas as S


def _config(src: S.ConfigSource):
    if src.config_path is not None and not Path(src.config_path).exists():
        raise ConfigError(f"config file not found: {src.config_path}")
    return load_config(src.config_path, **src.overrides)


def annotate(req: S.AnnotateRequest) -> S.AnnotateResponse:
    result = run(
        _config(req.config), req.corpus, req.manifests, req.ground_truth, req.transitions,
        req.synonyms, req.stopwords, req.out_dir,
    )
    return S.AnnotateResponse(
        annotations=[json.loads(line) for line in result.annotation_lines()],
        report=result.report.to_dict() if result.report else None,
        report_text=result.report.format_table() if result.report else None,
        manifest=result.manifest,
    )


def read_ranked_frames(path) -> list[RankedFrame]:
    """Frame records of an annotations file, in file order."""
    frames = []
    p = Path(path)
    if not p.exists():
        raise InputError(f"annotations file not found: {p}")
    with open(p, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if rec.get("type") != "frame":
                    continue
                frames.append(RankedFrame(
                    str(rec["video_id"]), str(rec["frame_id"]), float(rec["timestamp"]), tuple(rec["ranked"])
                ))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, AttributeError) as exc:
                raise InputError(f"{p}:{lineno}: malformed annotation record ({exc})") from None
    return frames


def evaluate(req: S.EvaluateRequest) -> S.EvaluateResponse:
    if not Path(req.ground_truth).exists():
        raise InputError(f"ground truth not found: {req.ground_truth}")
    report = precision_recall_at(
        read_ranked_frames(req.annotations), load_ground_truth(req.ground_truth), req.n, req.averaging
    )
    if req.out_dir is not None:
        out = Path(req.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_atomic(out / "report.json", report.to_json() + "\n")
        _write_atomic(out / "report.txt", report.format_table())
    return S.EvaluateResponse(report=report.to_dict(), report_text=report.format_table())


def ablate(req: S.AblateRequest) -> S.AblateResponse:
    masks = [[p for p in m.replace(",", "+").split("+") if p.strip()] for m in req.masks]
    reports, text = ablate_sources(
        _config(req.config), masks, req.corpus, req.manifests, req.ground_truth,
        req.transitions, req.synonyms, req.stopwords, req.out_dir,
    )
    return S.AblateResponse(rows={k: r.to_dict() for k, r in reports.items()}, table=text)


def estimate(req: S.TransitionsRequest) -> S.TransitionsResponse:
    for p in [req.ground_truth, *req.manifests]:
        if not Path(p).exists():
            raise InputError(f"input file not found: {p}")
    gt = load_ground_truth(req.ground_truth)
    videos = [load_manifest(p) for p in req.manifests]
    table = estimate_from_ground_truth(gt, videos, req.d_max, req.alpha)
    if req.out is not None:
        table.save(req.out)
    rows = [
        {
            "tag": tag,
            "lag": lag,
            "probability": p,
            "numerator": table.counts.get((tag, lag), (None, None))[0],
            "denominator": table.counts.get((tag, lag), (None, None))[1],
        }
        for (tag, lag), p in sorted(table.probs.items())
    ]
    return S.TransitionsResponse(d_max=table.d_max, rows=rows)


def index_build(req: S.IndexBuildRequest) -> S.IndexBuildResponse:
    config = _config(req.config)
    for p in req.corpus:
        if not Path(p).exists():
            raise InputError(f"input file not found: {p}")
    images = select_images(load_corpus(req.corpus, config.dim), config)
    if not images:
        raise InputError("no images left after the source mask")
    X = normalize_descriptors(np.stack([img.descriptor for img in images]), config.normalization)
    index = build_from_matrix([img.id for img in images], X, config.hkm_params, config.index_mode)
    index.meta = {"normalization": config.normalization.value, "sources": source_label(config.sources)}
    index.save(req.out)
    return S.IndexBuildResponse(path=req.out, n=len(index), dim=index.dim, n_nodes=index.n_nodes,
                                mode=index.mode.value)


def index_query(req: S.IndexQueryRequest, cache: dict | None = None) -> S.IndexQueryResponse:
    p = Path(req.index)
    if not p.exists():
        raise InputError(f"index file not found: {p}")
    key = (str(p.resolve()), p.stat().st_mtime_ns)
    index = cache.get(key) if cache is not None else None
    if index is None:
        index = DescriptorIndex.load(p)
        if cache is not None:
            cache.clear()
            cache[key] = index
    frame_id = req.frame_id
    if req.descriptor is not None:
        q = np.asarray(req.descriptor, dtype=np.float64)
    elif req.manifest is not None:
        video = load_manifest(req.manifest, index.dim)
        match = [k for k in video.keyframes if frame_id is None or k.frame_id == frame_id]
        if not match:
            raise InputError("frame not in manifest", item=frame_id)
        q, frame_id = match[0].descriptor.astype(np.float64), match[0].frame_id
    else:
        raise InputError("query needs a descriptor or a manifest")
    q = normalize_descriptors(q[None, :], index.meta.get("normalization", "none"))[0]
    found = index.query(q, req.K)
    return S.IndexQueryResponse(
        frame_id=frame_id,
        neighbors=[S.Neighbor(id=i, distance=d) for i, d in found.entries],
    )


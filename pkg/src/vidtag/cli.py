"""Command line client.

Every verb builds a request body and either runs it in this process or posts
it to a running service (``--server URL``).  Exit codes: 0 success, 1 input
error, 2 config error, 3 invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml
from pydantic import ValidationError

from . import __version__
from .errors import ConfigError, InputError, InvariantError, VidtagError
from .service import schemas as S

log = logging.getLogger("vidtag")

# flag name -> config field; None values are left to the config file / defaults
CONFIG_FLAGS = {
    "K": int,
    "d": int,
    "sigma": float,
    "damping": float,
    "top_k_suggest": int,
    "vote_scheme": str,
    "sources": str,
    "normalization": str,
    "index_mode": str,
    "branching": int,
    "max_leaf": int,
    "max_checks": int,
    "restarts": int,
    "seed": int,
    "workers": int,
    "averaging": str,
}


def _abs(p):
    return None if p is None else str(Path(p).resolve())


def _abs_all(ps):
    return [_abs(p) for p in ps or []]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="YAML or JSON config file")
    for name, typ in CONFIG_FLAGS.items():
        g.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    g.add_argument("--eval-n", dest="eval_n", type=int, nargs="+", default=None)
    g.add_argument("--set", dest="extra", action="append", default=[], metavar="KEY=VALUE",
                   help="any other config field, value parsed as YAML")


def _config_source(args) -> S.ConfigSource:
    overrides = {k: getattr(args, k) for k in [*CONFIG_FLAGS, "eval_n"] if getattr(args, k) is not None}
    for item in args.extra:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip().replace("-", "_")] = yaml.safe_load(value)
    return S.ConfigSource(config_path=_abs(args.config), overrides=overrides)


def _add_inputs(p: argparse.ArgumentParser, gt_required=False) -> None:
    p.add_argument("--corpus", nargs="+", required=True, help="corpus JSONL files")
    p.add_argument("--manifest", nargs="+", required=True, dest="manifests", help="video manifest JSON files")
    p.add_argument("--ground-truth", required=gt_required)
    p.add_argument("--transitions", help="transition table CSV")
    p.add_argument("--synonyms", help="synonym table JSON")
    p.add_argument("--stopwords", help="stopword list, one per line")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vidtag", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--server", help="base URL of a running service; default runs in-process")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("annotate", help="localize and suggest tags for every keyframe")
    _add_inputs(p)
    _add_config_flags(p)
    p.add_argument("--print", dest="print_annotations", action="store_true",
                   help="print annotation records to stdout")

    p = sub.add_parser("evaluate", help="score an annotations file against ground truth")
    p.add_argument("--annotations", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--n", type=int, nargs="+", default=[1])
    p.add_argument("--averaging", choices=["macro", "micro"], default="macro")
    p.add_argument("--out")

    p = sub.add_parser("ablate", help="compare image-source masks")
    _add_inputs(p, gt_required=True)
    _add_config_flags(p)
    p.add_argument("--masks", nargs="+", required=True, help="masks such as V  V+F  V+B+G+F")

    p = sub.add_parser("estimate-transitions", help="estimate the tag transition table from ground truth")
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--manifest", nargs="+", required=True, dest="manifests")
    p.add_argument("--d-max", type=int, default=3)
    p.add_argument("--alpha", type=float, default=1.0, help="additive smoothing; 0 gives raw frequencies")
    p.add_argument("--out", required=True)

    idx = sub.add_parser("index", help="build or query a standalone descriptor index")
    isub = idx.add_subparsers(dest="index_verb", required=True)
    p = isub.add_parser("build")
    p.add_argument("--corpus", nargs="+", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p = isub.add_parser("query")
    p.add_argument("--index", required=True)
    p.add_argument("--K", type=int, default=10)
    q = p.add_mutually_exclusive_group(required=True)
    q.add_argument("--descriptor", help="JSON list of floats")
    q.add_argument("--manifest")
    p.add_argument("--frame", help="frame id within --manifest (default: first)")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    p = sub.add_parser("synth", help="write a planted two-cluster demo dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-images", type=int, default=500)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--flip", type=int, nargs="*", default=[], help="frame indices drawn from the wrong cluster")
    return parser


def _request(args):
    """Return ``(endpoint, request body)`` for the verb."""
    if args.verb == "annotate":
        return "/annotate", S.AnnotateRequest(
            config=_config_source(args), corpus=_abs_all(args.corpus), manifests=_abs_all(args.manifests),
            ground_truth=_abs(args.ground_truth), transitions=_abs(args.transitions),
            synonyms=_abs(args.synonyms), stopwords=_abs(args.stopwords), out_dir=_abs(args.out),
        )
    if args.verb == "evaluate":
        return "/evaluate", S.EvaluateRequest(
            annotations=_abs(args.annotations), ground_truth=_abs(args.ground_truth),
            n=args.n, averaging=args.averaging, out_dir=_abs(args.out),
        )
    if args.verb == "ablate":
        return "/ablate", S.AblateRequest(
            config=_config_source(args), masks=args.masks, corpus=_abs_all(args.corpus),
            manifests=_abs_all(args.manifests), ground_truth=_abs(args.ground_truth),
            transitions=_abs(args.transitions), synonyms=_abs(args.synonyms),
            stopwords=_abs(args.stopwords), out_dir=_abs(args.out),
        )
    if args.verb == "estimate-transitions":
        return "/transitions/estimate", S.TransitionsRequest(
            ground_truth=_abs(args.ground_truth), manifests=_abs_all(args.manifests),
            d_max=args.d_max, alpha=args.alpha, out=_abs(args.out),
        )
    if args.index_verb == "build":
        return "/index/build", S.IndexBuildRequest(
            config=_config_source(args), corpus=_abs_all(args.corpus), out=_abs(args.out)
        )
    descriptor = None
    if args.descriptor is not None:
        try:
            descriptor = json.loads(args.descriptor)
        except json.JSONDecodeError as exc:
            raise InputError(f"--descriptor is not JSON: {exc}") from None
    return "/index/query", S.IndexQueryRequest(
        index=_abs(args.index), K=args.K, descriptor=descriptor, manifest=_abs(args.manifest), frame_id=args.frame,
    )


def _local(endpoint, req):
    from .service import ops

    handler = {
        "/annotate": ops.annotate,
        "/evaluate": ops.evaluate,
        "/ablate": ops.ablate,
        "/transitions/estimate": ops.estimate,
        "/index/build": ops.index_build,
        "/index/query": ops.index_query,
    }[endpoint]
    return handler(req)


RESPONSES = {
    "/annotate": S.AnnotateResponse,
    "/evaluate": S.EvaluateResponse,
    "/ablate": S.AblateResponse,
    "/transitions/estimate": S.TransitionsResponse,
    "/index/build": S.IndexBuildResponse,
    "/index/query": S.IndexQueryResponse,
}


def _remote(server, endpoint, req):
    import httpx

    try:
        r = httpx.post(server.rstrip("/") + endpoint, json=req.model_dump(mode="json"), timeout=None)
    except httpx.HTTPError as exc:
        raise InputError(f"cannot reach {server}: {exc}") from None
    if r.status_code != 200:
        try:
            body = S.ErrorBody.model_validate(r.json())
        except (ValueError, ValidationError):
            raise InvariantError(f"service answered {r.status_code}: {r.text[:200]}") from None
        cls = {1: InputError, 2: ConfigError}.get(body.exit_code, InvariantError)
        raise cls(body.error)
    return RESPONSES[endpoint].model_validate(r.json())


def _show(args, resp) -> None:
    out = sys.stdout
    if args.verb == "annotate":
        if args.print_annotations:
            for rec in resp.annotations:
                out.write(json.dumps(rec) + "\n")
        frames = sum(1 for r in resp.annotations if r["type"] == "frame")
        videos = sum(1 for r in resp.annotations if r["type"] == "video")
        t = resp.manifest.get("timing", {})
        out.write(f"annotated {frames} frames in {videos} videos; wall {t.get('wall', 0):.2f}s\n")
        if resp.report_text:
            out.write(resp.report_text)
    elif args.verb == "evaluate":
        out.write(resp.report_text)
    elif args.verb == "ablate":
        out.write(resp.table)
    elif args.verb == "estimate-transitions":
        out.write(f"wrote {len(resp.rows)} rows (d_max={resp.d_max}) to {args.out}\n")
    else:
        out.write(resp.model_dump_json(indent=2) + "\n")


def _synth(args) -> None:
    from .synthetic import planted, write_planted

    data = planted(n_images=args.n_images, n_frames=args.frames, flipped=tuple(args.flip), seed=args.seed)
    paths = write_planted(data, args.out)
    sys.stdout.write(json.dumps(paths, indent=2) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        if args.verb == "serve":
            import uvicorn

            uvicorn.run("vidtag.service.app:app", host=args.host, port=args.port)
            return 0
        if args.verb == "synth":
            _synth(args)
            return 0
        try:
            endpoint, req = _request(args)
        except ValidationError as exc:
            raise ConfigError(str(exc)) from None
        resp = _remote(args.server, endpoint, req) if args.server else _local(endpoint, req)
        _show(args, resp)
        return 0
    except VidtagError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return InputError.exit_code


if __name__ == "__main__":
    sys.exit(main())

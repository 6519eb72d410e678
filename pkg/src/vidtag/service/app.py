"""FastAPI application exposing the pipeline operations."""

from __future__ import annotations

import threading

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import ConfigError, InputError, VidtagError
from . import ops
from . import schemas as S

HTTP_STATUS = {"input": 400, "config": 422, "invariant": 500}


def error_body(exc: VidtagError) -> S.ErrorBody:
    kind = "input" if isinstance(exc, InputError) else "config" if isinstance(exc, ConfigError) else "invariant"
    return S.ErrorBody(error=str(exc), kind=kind, exit_code=exc.exit_code, stage=exc.stage,
                       item=None if exc.item is None else str(exc.item))


def create_app() -> FastAPI:
    app = FastAPI(title="vidtag", version=__version__)
    index_cache: dict = {}
    # one pipeline run at a time; runs are CPU bound and share the index cache
    lock = threading.Lock()

    @app.exception_handler(VidtagError)
    async def _vidtag_error(_: Request, exc: VidtagError):
        body = error_body(exc)
        return JSONResponse(status_code=HTTP_STATUS[body.kind], content=body.model_dump())

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/annotate", response_model=S.AnnotateResponse)
    def annotate(req: S.AnnotateRequest):
        with lock:
            return ops.annotate(req)

    @app.post("/evaluate", response_model=S.EvaluateResponse)
    def evaluate(req: S.EvaluateRequest):
        with lock:
            return ops.evaluate(req)

    @app.post("/ablate", response_model=S.AblateResponse)
    def ablate(req: S.AblateRequest):
        with lock:
            return ops.ablate(req)

    @app.post("/transitions/estimate", response_model=S.TransitionsResponse)
    def transitions(req: S.TransitionsRequest):
        with lock:
            return ops.estimate(req)

    @app.post("/index/build", response_model=S.IndexBuildResponse)
    def index_build(req: S.IndexBuildRequest):
        with lock:
            return ops.index_build(req)

    @app.post("/index/query", response_model=S.IndexQueryResponse)
    def index_query(req: S.IndexQueryRequest):
        with lock:
            return ops.index_query(req, index_cache)

    return app


app = create_app()

"""Embedded HTTP service backing the interactive viewer.

One dataset per process.  The expensive relaxation runs only on explicit
request (POST /api/layout) on a worker thread; everything else re-renders
from the current immutable snapshot, with interpolated fields cached by
their full parameter key.  GET handlers never mutate state, so identical
query strings return identical bytes until a recompute bumps the revision.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, Query, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import dataset as dataset_mod
from . import field, layout, render
from .cli import PipelineConfig, auto_spacing, prepare_session

STATIC_DIR = Path(__file__).resolve().parent.parent.parent / "frontend" / "dist"


class LayoutRequest(BaseModel):
    iterations: int = Field(default=500, ge=0, le=100_000)
    decay_lambda: float = Field(default=0.99, gt=0.0, lt=1.0, alias="lambda")
    initial_temp: Optional[float] = Field(default=None, gt=0.0)
    edge_length: Optional[float] = Field(default=None, gt=0.0)

    model_config = {"populate_by_name": True}


@dataclass
class Snapshot:
    """One immutable view of the session; swapped atomically on recompute."""

    revision: int
    state: layout.LayoutState
    params: layout.LayoutParams


@dataclass
class Session:
    cfg: PipelineConfig
    ds: dataset_mod.Dataset
    mesh: object
    snapshot: Snapshot
    lock: threading.Lock = dc_field(default_factory=threading.Lock)
    recomputing: bool = dc_field(default=False)
    _field_cache: dict = dc_field(default_factory=dict)

    def cached_field(self, key, build):
        with self.lock:
            hit = self._field_cache.get(key)
        if hit is not None:
            return hit
        fld = build()
        with self.lock:
            # Identical keys must reuse bit-identical fields: first write wins.
            return self._field_cache.setdefault(key, fld)

    def swap_snapshot(self, snap: Snapshot):
        with self.lock:
            self.snapshot = snap
            self._field_cache.clear()


def load_session(cfg: PipelineConfig) -> Session:
    ds, model, tri, params, state = prepare_session(cfg)
    if cfg.threads == 1 and "MDCONTOUR_THREADS" not in os.environ:
        # Interactive sessions lean on per-pixel parallelism; batch runs keep
        # the single-threaded default.  Chunk outputs are identical either way.
        cfg.threads = min(4, os.cpu_count() or 1)
    return Session(
        cfg=cfg, ds=ds, mesh=tri,
        snapshot=Snapshot(revision=0, state=state, params=params),
    )


def _bad_request(errors: dict) -> JSONResponse:
    return JSONResponse(status_code=400, content={"errors": errors})


def defaults_payload(session: Session) -> dict:
    return {
        "variants": list(field.VARIANTS),
        "modes": list(render.MODES),
        "alpha": {
            "min": field.ALPHA_RANGE[0],
            "max": field.ALPHA_RANGE[1],
            "perVariant": field.DEFAULT_ALPHA,
        },
        "relax": {"min": 0.0, "max": 1.0, "default": 1.0},
        "resolution": {"default": [session.cfg.width, session.cfg.height], "max": 8192},
        "variant": session.cfg.variant,
        "mode": session.cfg.mode,
        "layout": {
            "iterations": session.snapshot.params.iterations,
            "lambda": session.snapshot.params.decay_lambda,
            "initialTemp": session.snapshot.params.initial_temp,
            "edgeLength": session.snapshot.params.desired_edge_d,
        },
    }


def create_app(session: Session) -> FastAPI:
    app = FastAPI(title="mdcontour", docs_url=None, redoc_url=None)

    @app.get("/api/meta")
    def meta():
        return {
            "columns": session.ds.names,
            "rowCount": session.ds.row_count,
            "revision": session.snapshot.revision,
            "defaults": defaults_payload(session),
        }

    @app.get("/api/defaults")
    def defaults():
        return defaults_payload(session)

    @app.get("/api/positions")
    def positions(relax: float = Query(default=1.0)):
        if not 0.0 <= relax <= 1.0:
            return _bad_request({"relax": "must be in [0, 1]"})
        snap = session.snapshot
        pos = layout.interpolate_layout(snap.state, relax)
        return {
            "revision": snap.revision,
            "relax": relax,
            "positions": [[float(x), float(y)] for x, y in pos],
        }

    @app.get("/api/render.png")
    def render_png(
        dim: str = Query(default=""),
        dim2: str = Query(default=""),
        variant: str = Query(default=None),
        alpha: float = Query(default=None),
        relax: float = Query(default=1.0),
        mode: str = Query(default=None),
        spacing: str = Query(default="auto"),
        w: int = Query(default=None),
        h: int = Query(default=None),
    ):
        cfg = session.cfg
        variant = variant or cfg.variant
        mode = mode or cfg.mode
        w = w or cfg.width
        h = h or cfg.height

        errors = {}
        if variant not in field.VARIANTS:
            errors["variant"] = f"must be one of {', '.join(field.VARIANTS)}"
        if mode not in render.MODES:
            errors["mode"] = f"must be one of {', '.join(render.MODES)}"
        if not 0.0 <= relax <= 1.0:
            errors["relax"] = "must be in [0, 1]"
        if alpha is not None and not (
            field.ALPHA_RANGE[0] <= alpha <= field.ALPHA_RANGE[1]
        ):
            errors["alpha"] = f"must be in [{field.ALPHA_RANGE[0]}, {field.ALPHA_RANGE[1]}]"
        if not (w and h and 0 < w <= 8192 and 0 < h <= 8192):
            errors["w"] = errors["h"] = "resolution limited to 8192"
        spacing_val: float | str = "auto"
        if spacing != "auto":
            try:
                spacing_val = float(spacing)
                if spacing_val <= 0:
                    errors["spacing"] = "must be positive"
            except ValueError:
                errors["spacing"] = "must be a number or 'auto'"
        if errors:
            return _bad_request(errors)

        if dim and dim != "projection" and dim not in session.ds.names:
            return JSONResponse(
                status_code=404,
                content={"error": f"unknown dimension {dim!r}", "columns": session.ds.names},
            )
        if dim2 and dim2 not in session.ds.names:
            return JSONResponse(
                status_code=404,
                content={"error": f"unknown dimension {dim2!r}", "columns": session.ds.names},
            )

        if not dim or dim == "projection":
            targets = field.projection_targets(session.mesh)
        elif dim2:
            targets = field.dimension_targets(session.ds, dim, dim2)
        else:
            targets = field.dimension_targets(session.ds, dim)
        if variant == "rigid" and targets.active_channels == 1:
            return _bad_request({"variant": "rigid is degenerate for a single dimension"})
        if mode == "gradient" and targets.active_channels == 1:
            return _bad_request({"mode": "gradient requires two target dimensions"})

        snap = session.snapshot
        key = (snap.revision, dim, dim2, variant, alpha, relax, w, h)
        pos = layout.interpolate_layout(snap.state, relax)

        def build():
            params = field.MlsParams(variant=variant, alpha=alpha)
            return field.compute_field(
                session.mesh, pos, targets, params, w, h, threads=cfg.threads
            )

        fld = session.cached_field(key, build)
        s = auto_spacing(targets.targets[:, 0]) if spacing_val == "auto" else spacing_val
        spec = render.RenderSpec(mode=mode, spacing=s, point_radius=cfg.point_radius)
        img = render.render(fld, spec)
        img = render.overlay_points(img, pos, fld.transform, spec)
        return Response(content=img.to_png_bytes(), media_type="image/png")

    @app.post("/api/layout", status_code=202)
    def relayout(req: LayoutRequest):
        with session.lock:
            if session.recomputing:
                return JSONResponse(
                    status_code=409, content={"error": "layout recompute already in progress"}
                )
            session.recomputing = True
            target_revision = session.snapshot.revision + 1

        def work():
            try:
                overrides = {"decay_lambda": req.decay_lambda}
                if req.initial_temp is not None:
                    overrides["initial_temp"] = req.initial_temp
                if req.edge_length is not None:
                    overrides["desired_edge_d"] = req.edge_length
                params = layout.LayoutParams.defaults_for(
                    session.mesh, iterations=req.iterations, **overrides
                )
                session.mesh.current_pos = session.mesh.original_pos.copy()
                state = layout.layout_run(session.mesh, params)
                session.swap_snapshot(Snapshot(target_revision, state, params))
            finally:
                with session.lock:
                    session.recomputing = False

        threading.Thread(target=work, daemon=True).start()
        return {"accepted": True, "revision": target_revision}

    @app.get("/api/status")
    def status():
        with session.lock:
            return {
                "revision": session.snapshot.revision,
                "recomputing": session.recomputing,
            }

    if STATIC_DIR.is_dir():
        app.mount("/", StaticFiles(directory=str(STATIC_DIR), html=True), name="viewer")
    else:
        @app.get("/")
        def index():
            return Response(
                "mdcontour service is running; the viewer bundle is not built "
                "(run `npm run build` in frontend/).",
                media_type="text/plain",
            )

    return app


def serve(cfg: PipelineConfig, port: int = 8000, host: str = "127.0.0.1") -> None:
    import uvicorn

    session = load_session(cfg)
    app = create_app(session)
    uvicorn.run(app, host=host, port=port, log_level="warning")

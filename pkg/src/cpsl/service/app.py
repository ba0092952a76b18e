"""HTTP service wrapping the layer pipeline.

Serves raw bundles to the browser viewer and exposes render/sweep/metrics
endpoints on registered bundles. Bundles are held decoded in memory; the
registry maps short ids to (blob, decoded state).
"""

from __future__ import annotations

import hashlib
import io as std_io
import os

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware

from .. import __version__
from .. import bundle as bundle_mod
from .. import metrics as metrics_mod
from .. import pipeline
from ..config import PipelineConfig
from .models import (BundleListResponse, BundleSummary, HealthResponse,
                     MetricsRequest, MetricsResponse, RenderRequest,
                     SweepRequest, SweepResponse, SweepRow, UploadResponse)


class BundleEntry:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.layer_sets, self.edcs, self.confs, self.manifest = \
            bundle_mod.unpack(blob)

    def summary(self, bundle_id: str) -> BundleSummary:
        m = self.manifest
        return BundleSummary(bundle_id=bundle_id, frame_count=m["frame_count"],
                             k=m["k"], width=m["width"], height=m["height"],
                             codec=m["codec"], size_bytes=len(self.blob))


def _bundle_id(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()[:12]


def create_app(bundle_paths: list[str] | None = None,
               cfg: PipelineConfig | None = None) -> FastAPI:
    cfg = cfg or PipelineConfig()
    app = FastAPI(title="cpsl", version=__version__)
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    registry: dict[str, BundleEntry] = {}
    app.state.registry = registry
    app.state.cfg = cfg

    for path in bundle_paths or []:
        with open(path, "rb") as f:
            blob = f.read()
        try:
            entry = BundleEntry(blob)
        except (bundle_mod.CorruptContainerError,
                bundle_mod.VersionMismatchError,
                bundle_mod.TruncatedStreamError) as e:
            raise ValueError(f"cannot serve {path}: {e}") from e
        name = os.path.splitext(os.path.basename(path))[0]
        registry[name] = entry

    def _entry(bundle_id: str) -> BundleEntry:
        if bundle_id not in registry:
            raise HTTPException(404, f"unknown bundle: {bundle_id}")
        return registry[bundle_id]

    def _frame(entry: BundleEntry, index: int):
        if not 0 <= index < len(entry.layer_sets):
            raise HTTPException(422, f"frame {index} out of range")
        return entry.layer_sets[index], \
            entry.edcs[index] if entry.edcs else None

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.get("/bundles", response_model=BundleListResponse)
    def list_bundles():
        return BundleListResponse(
            bundles=[e.summary(bid) for bid, e in sorted(registry.items())])

    @app.post("/bundles", response_model=UploadResponse, status_code=201)
    async def upload_bundle(request: Request):
        blob = await request.body()
        try:
            entry = BundleEntry(blob)
        except (bundle_mod.CorruptContainerError,
                bundle_mod.VersionMismatchError,
                bundle_mod.TruncatedStreamError) as e:
            raise HTTPException(400, f"invalid bundle: {e}")
        bid = _bundle_id(blob)
        registry[bid] = entry
        return UploadResponse(bundle_id=bid, summary=entry.summary(bid))

    @app.get("/bundles/{bundle_id}/manifest")
    def manifest(bundle_id: str):
        return _entry(bundle_id).manifest

    @app.get("/bundles/{bundle_id}/raw")
    def raw(bundle_id: str):
        return Response(content=_entry(bundle_id).blob,
                        media_type="application/octet-stream")

    @app.post("/bundles/{bundle_id}/render")
    def render(bundle_id: str, req: RenderRequest):
        entry = _entry(bundle_id)
        ls, edc = _frame(entry, req.frame)
        viewer = pipeline.orbit_pose(ls, req.yaw, req.pitch, req.baseline)
        out = pipeline.render_view(ls, viewer, req.dps, edc, cfg)
        png = _encode_png(out.color)
        return Response(content=png, media_type="image/png",
                        headers={"x-mean-coverage": f"{out.coverage.mean():.6f}"})

    @app.post("/bundles/{bundle_id}/sweep", response_model=SweepResponse)
    def sweep(bundle_id: str, req: SweepRequest):
        entry = _entry(bundle_id)
        _frame(entry, req.frame)
        rows, _ = pipeline.sweep(entry.layer_sets, entry.edcs, req.angles,
                                 cfg, req.dps, req.frame)
        return SweepResponse(rows=[SweepRow(**row) for row in rows])

    @app.post("/bundles/{bundle_id}/metrics", response_model=MetricsResponse)
    def compare(bundle_id: str, req: MetricsRequest):
        entry = _entry(bundle_id)
        ls_a, _ = _frame(entry, req.frame_a)
        other = _entry(req.bundle_b) if req.bundle_b else entry
        ls_b, _ = _frame(other, req.frame_b)
        a = pipeline._flatten(ls_a)
        b = pipeline._flatten(ls_b)
        try:
            return MetricsResponse(psnr_db=metrics_mod.psnr(a, b),
                                   ssim=metrics_mod.ssim(a, b))
        except metrics_mod.DimensionMismatchError as e:
            raise HTTPException(422, str(e))

    return app


def _encode_png(color: np.ndarray) -> bytes:
    import cv2

    bgr = np.clip(color[..., ::-1] * 255.0, 0, 255).astype(np.uint8)
    ok, buf = cv2.imencode(".png", bgr)
    if not ok:
        raise HTTPException(500, "failed to encode image")
    return buf.tobytes()

"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class BundleSummary(BaseModel):
    bundle_id: str
    frame_count: int
    k: int
    width: int
    height: int
    codec: str
    size_bytes: int


class BundleListResponse(BaseModel):
    bundles: list[BundleSummary]


class RenderRequest(BaseModel):
    frame: int = 0
    yaw: float = 0.0
    pitch: float = 0.0
    baseline: float = 0.0
    dps: bool = True


class RenderStats(BaseModel):
    mean_coverage: float
    warp_ms: float
    composite_ms: float
    dps_ms: float


class SweepRequest(BaseModel):
    angles: list[float] = Field(default=[0, 5, 10, 15, 20, 30], min_length=1)
    frame: int = 0
    dps: bool = True


class SweepRow(BaseModel):
    angle_deg: float
    psnr_db: float
    ssim: float
    crack_rate: float
    mean_coverage: float


class SweepResponse(BaseModel):
    rows: list[SweepRow]


class MetricsRequest(BaseModel):
    frame_a: int = 0
    frame_b: int = 0
    bundle_b: str | None = None


class MetricsResponse(BaseModel):
    psnr_db: float
    ssim: float


class UploadResponse(BaseModel):
    bundle_id: str
    summary: BundleSummary

"""Pipeline configuration: every tunable constant in one place, loadable from YAML."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml


@dataclass
class EnergyConfig:
    """Layer-assignment energy weights and solver controls."""

    k_layers: int = 4
    lambda_b: float = 0.5
    alpha_grad: float = 4.0
    beta_sem: float = 2.0
    huber_delta_frac: float = 0.1  # delta = frac * depth IQR
    kappa_sem: float = 0.5
    kappa_inst: float = 1.0
    max_iters: int = 8
    saliency_logistic: bool = False  # identity clamp by default


@dataclass
class MatteConfig:
    """Adaptive feather width w = w0 + a*|grad z| + b*(1 - stability)."""

    w0: float = 2.0
    a: float = 2.0
    b: float = 2.0
    w_min: float = 1.0
    w_max: float = 16.0


@dataclass
class PromotionConfig:
    theta_promote: float = 0.3
    merge_texture_weight: float = 1.0


@dataclass
class DpsConfig:
    """Dynamic pixel strip band construction."""

    w_min: float = 2.0
    w_max: float = 64.0
    c_p: float = 1.0
    tau_edge: float = 0.25
    r_edc: float = 3.0
    search_radius: int = 8


@dataclass
class TemporalConfig:
    iou_thresh: float = 0.6
    crack_thresh: float = 0.1
    ema_weight: float = 0.8
    ema_boundary: float = 0.6
    max_gop: int = 30
    retire_patience: int = 2
    block_size: int = 16
    block_range: int = 8


@dataclass
class BundleConfig:
    dz_min: float = 0.01
    dz_max: float = 100.0
    codec: str = "lossless"
    quality_levels: tuple = (1, 2, 3, 4, 5, 6, 7, 8)


@dataclass
class MetricsConfig:
    crack_coverage_thresh: float = 0.98
    crack_band_dilation: int = 3
    psnr_cap_db: float = 99.0
    tau_vis: float = 0.5


@dataclass
class PipelineConfig:
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    matte: MatteConfig = field(default_factory=MatteConfig)
    promotion: PromotionConfig = field(default_factory=PromotionConfig)
    dps: DpsConfig = field(default_factory=DpsConfig)
    temporal: TemporalConfig = field(default_factory=TemporalConfig)
    bundle: BundleConfig = field(default_factory=BundleConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    depth_scale: float = 1000.0  # 16-bit depth image units per meter
    max_layers: int = 12
    seed: int = 0
    threads: int = 0  # 0 = library default

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        cfg = cls()
        for section, value in data.items():
            if not hasattr(cfg, section):
                raise KeyError(f"unknown config section: {section}")
            current = getattr(cfg, section)
            if dataclasses.is_dataclass(current) and isinstance(value, dict):
                for k, v in value.items():
                    if not hasattr(current, k):
                        raise KeyError(f"unknown config key: {section}.{k}")
                    setattr(current, k, type(getattr(current, k))(v) if not isinstance(v, (list, tuple)) else tuple(v))
            else:
                setattr(cfg, section, value)
        return cfg

    def with_overrides(self, **sections) -> "PipelineConfig":
        """Copy with top-level fields or nested section dicts replaced."""
        cfg = dataclasses.replace(self)
        for section, value in sections.items():
            if not hasattr(cfg, section):
                raise KeyError(f"unknown config section: {section}")
            current = getattr(cfg, section)
            if dataclasses.is_dataclass(current) and isinstance(value, dict):
                setattr(cfg, section, dataclasses.replace(current, **value))
            else:
                setattr(cfg, section, value)
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        with open(path) as f:
            data = yaml.safe_load(f) or {}
        return cls.from_dict(data)

    def save(self, path: str | Path) -> None:
        with open(path, "w") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False)

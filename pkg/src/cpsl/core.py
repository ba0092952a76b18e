"""Shared domain types: cameras, depth maps, layers, layer sets and the edge-depth cache.

All image-like data is float32 in [0, 1]; depth is metric and strictly positive.
Types are validated on construction and frozen afterwards so they can be shared
freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: mu constant for 8-bit log quantization of boundary depth gaps.
MU_LAW_MU = 255.0


def _readonly(a: np.ndarray, dtype=np.float32) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=dtype)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: intrinsics in pixels plus a rigid world pose (R, t)."""

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-6):
            raise ValueError("rotation must be orthonormal")
        object.__setattr__(self, "rotation", _readonly(r, np.float64))
        object.__setattr__(self, "translation", _readonly(t, np.float64))

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def K_inv(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    def relative_to(self, other: "Camera") -> tuple[np.ndarray, np.ndarray]:
        """Rigid transform taking points in this camera's frame to `other`'s frame."""
        r = other.rotation @ self.rotation.T
        t = other.translation - r @ self.translation
        return r, t


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel metric depth with a validity mask and a stability map in [0, 1]."""

    values: np.ndarray
    valid: np.ndarray
    stability: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.values, dtype=np.float32)
        if z.ndim != 2:
            raise ValueError("depth must be HxW")
        valid = (
            np.ones(z.shape, bool)
            if self.valid is None
            else np.asarray(self.valid, bool)
        )
        stab = (
            np.ones(z.shape, np.float32)
            if self.stability is None
            else np.asarray(self.stability, np.float32)
        )
        if valid.shape != z.shape or stab.shape != z.shape:
            raise ValueError("mask/stability shape mismatch")
        if np.any(z[valid] <= 0):
            raise ValueError("valid depths must be strictly positive")
        object.__setattr__(self, "values", _readonly(z))
        object.__setattr__(self, "valid", _readonly(valid, bool))
        object.__setattr__(self, "stability", _readonly(np.clip(stab, 0.0, 1.0)))

    @classmethod
    def from_values(cls, values, valid=None, stability=None) -> "DepthMap":
        return cls(values=np.asarray(values), valid=valid, stability=stability)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SemanticMaps:
    """Optional per-pixel semantic inputs: saliency, class label, instance id, edges."""

    saliency: np.ndarray
    semantic_label: np.ndarray
    instance_id: np.ndarray
    semantic_edge: np.ndarray

    def __post_init__(self):
        sal = np.asarray(self.saliency, np.float32)
        if sal.ndim != 2:
            raise ValueError("saliency must be HxW")
        shape = sal.shape
        lab = np.asarray(self.semantic_label, np.int32)
        inst = np.asarray(self.instance_id, np.int32)
        edge = np.asarray(self.semantic_edge, np.float32)
        for a in (lab, inst, edge):
            if a.shape != shape:
                raise ValueError("semantic map shape mismatch")
        object.__setattr__(self, "saliency", _readonly(np.clip(sal, 0.0, 1.0)))
        object.__setattr__(self, "semantic_label", _readonly(lab, np.int32))
        object.__setattr__(self, "instance_id", _readonly(inst, np.int32))
        object.__setattr__(self, "semantic_edge", _readonly(np.clip(edge, 0.0, 1.0)))

    @classmethod
    def neutral(cls, shape: tuple[int, int]) -> "SemanticMaps":
        z = np.zeros(shape, np.float32)
        zi = np.zeros(shape, np.int32)
        return cls(saliency=z, semantic_label=zi, instance_id=zi, semantic_edge=z)


PREMUL_TOL = 1e-6


@dataclass(frozen=True)
class Layer:
    """One depth-ordered RGBA slice: premultiplied color, matte, reference depth."""

    color_premul: np.ndarray
    alpha: np.ndarray
    depth: float
    confidence: float = 1.0
    saliency_score: float = 0.0
    instance_ids: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        c = np.asarray(self.color_premul, np.float32)
        a = np.asarray(self.alpha, np.float32)
        if c.ndim != 3 or c.shape[2] != 3:
            raise ValueError("color must be HxWx3")
        if a.shape != c.shape[:2]:
            raise ValueError("alpha shape mismatch")
        if self.depth <= 0:
            raise ValueError("layer depth must be positive")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be in [0, 1]")
        if np.any(c > a[..., None] + PREMUL_TOL):
            raise ValueError("premultiplication violated: color exceeds alpha")
        object.__setattr__(self, "color_premul", _readonly(c))
        object.__setattr__(self, "alpha", _readonly(a))
        object.__setattr__(self, "instance_ids", frozenset(self.instance_ids))

    @property
    def shape(self) -> tuple[int, int]:
        return self.alpha.shape

    def with_confidence(self, c: float) -> "Layer":
        return Layer(
            color_premul=self.color_premul,
            alpha=self.alpha,
            depth=self.depth,
            confidence=float(np.clip(c, 0.0, 1.0)),
            saliency_score=self.saliency_score,
            instance_ids=self.instance_ids,
        )


DEFAULT_MAX_LAYERS = 12


@dataclass(frozen=True)
class LayerSet:
    """Ordered near-to-far stack of layers for one frame."""

    layers: tuple
    frame_index: int
    source_camera: Camera
    max_layers: int = DEFAULT_MAX_LAYERS

    def __post_init__(self):
        layers = tuple(self.layers)
        problems = _layer_stack_violations(layers, self.max_layers)
        if problems:
            raise ValueError("; ".join(problems))
        object.__setattr__(self, "layers", layers)

    def __len__(self) -> int:
        return len(self.layers)

    @property
    def shape(self) -> tuple[int, int]:
        return self.layers[0].shape

    @property
    def depths(self) -> np.ndarray:
        return np.array([l.depth for l in self.layers])


@dataclass(frozen=True)
class EdcSample:
    """One boundary sample: pixel, front/back layer indices, quantized depth gap."""

    x: int
    y: int
    front_layer: int
    back_layer: int
    dz_quant: int

    def __post_init__(self):
        if not self.front_layer < self.back_layer:
            raise ValueError("front layer must be nearer than back layer")
        if not 0 <= self.dz_quant <= 255:
            raise ValueError("dz_quant must fit in 8 bits")


@dataclass(frozen=True)
class EdgeDepthCache:
    """Sparse boundary store of quantized front/back depth gaps."""

    samples: tuple
    dz_min: float
    dz_max: float

    def __post_init__(self):
        if not 0 < self.dz_min < self.dz_max:
            raise ValueError("need 0 < dz_min < dz_max")
        object.__setattr__(self, "samples", tuple(self.samples))

    def dequantize(self, code: int) -> float:
        return dz_dequantize(code, self.dz_min, self.dz_max)


def dz_quantize(dz: float, dz_min: float, dz_max: float) -> int:
    """8-bit mu-law code for a boundary depth gap; monotone in dz."""
    u = np.clip((dz - dz_min) / (dz_max - dz_min), 0.0, 1.0)
    code = np.log1p(MU_LAW_MU * u) / np.log1p(MU_LAW_MU)
    return int(np.rint(255.0 * code))


def dz_dequantize(code: int, dz_min: float, dz_max: float) -> float:
    u = (np.expm1(code / 255.0 * np.log1p(MU_LAW_MU))) / MU_LAW_MU
    return float(dz_min + u * (dz_max - dz_min))


def _layer_stack_violations(layers, max_layers: int) -> list[str]:
    out = []
    if len(layers) < 1:
        out.append("layer set must contain at least one layer")
        return out
    if len(layers) > max_layers:
        out.append(f"layer count {len(layers)} exceeds maximum {max_layers}")
    depths = [l.depth for l in layers]
    if any(b <= a for a, b in zip(depths, depths[1:])):
        out.append("depth order violated: depths must be strictly increasing")
    shape = np.asarray(layers[0].alpha).shape
    if any(np.asarray(l.alpha).shape != shape for l in layers):
        out.append("layers must share one image size")
    return out


def validate_layer_set(ls, max_layers: int = DEFAULT_MAX_LAYERS) -> list[str]:
    """Diagnostic check: empty list iff every layer-set and layer invariant holds.

    Accepts a LayerSet or any sequence of layer-like objects (attributes
    color_premul, alpha, depth), so unconstructable stacks can still be reported.
    """
    if isinstance(ls, LayerSet):
        layers, max_layers = ls.layers, ls.max_layers
    else:
        layers = tuple(ls)
    out = _layer_stack_violations(layers, max_layers)
    for k, layer in enumerate(layers):
        if layer.depth <= 0:
            out.append(f"layer {k}: depth must be positive")
        if np.any(layer.color_premul > layer.alpha[..., None] + PREMUL_TOL):
            out.append(f"layer {k}: premultiplication violated")
        if np.any(layer.alpha < 0) or np.any(layer.alpha > 1):
            out.append(f"layer {k}: alpha outside [0, 1]")
    return out

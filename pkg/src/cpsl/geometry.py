"""Plane-induced homographies and per-layer image warping.

Cameras use a world-to-camera convention: X_cam = R @ X_world + t. A layer is a
fronto-parallel plane at depth z_k in its source camera, so the map between two
views of that plane is a single 3x3 homography; no 3D reconstruction is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .core import Camera, Layer


class DegenerateCameraError(ValueError):
    """The layer plane passes through (or behind) a camera center."""


class BehindCameraError(ValueError):
    """A reprojected point has non-positive depth in the target camera."""


@dataclass(frozen=True)
class PlaneHomography:
    """3x3 map from target pixel homogeneous coords to source pixel coords."""

    H: np.ndarray
    layer_depth: float

    def __post_init__(self):
        h = np.asarray(self.H, np.float64)
        if h.shape != (3, 3):
            raise ValueError("H must be 3x3")
        if abs(np.linalg.det(h)) <= 1e-12:
            raise DegenerateCameraError("homography is singular")
        object.__setattr__(self, "H", h)

    def apply(self, pixels: np.ndarray) -> np.ndarray:
        """Map (..., 2) target pixels to source pixels."""
        p = np.asarray(pixels, np.float64)
        ph = np.concatenate([p, np.ones(p.shape[:-1] + (1,))], axis=-1)
        q = ph @ self.H.T
        return q[..., :2] / q[..., 2:3]


def plane_homography(src: Camera, dst: Camera, z_k: float) -> PlaneHomography:
    """Homography relating views of the fronto-parallel source plane at depth z_k.

    Returned matrix maps target (dst) pixels to source pixels, normalized so
    H[2,2] = 1, ready for inverse warping.
    """
    if z_k <= 0:
        raise ValueError("plane depth must be positive")
    r, t = src.relative_to(dst)
    # Forward map src -> dst for points on the plane n.X = z_k, n = (0,0,1).
    n = np.array([0.0, 0.0, 1.0])
    m = dst.K @ (r + np.outer(t, n) / z_k) @ src.K_inv
    if abs(np.linalg.det(m)) <= 1e-12:
        raise DegenerateCameraError("plane passes through the target camera center")
    h = np.linalg.inv(m)
    if abs(h[2, 2]) > 1e-12:
        h = h / h[2, 2]
    return PlaneHomography(H=h, layer_depth=float(z_k))


def reproject_point(src: Camera, dst: Camera, pixel, z):
    """Exact pinhole chain: source pixel(s) at depth z to target pixel(s) + depth.

    Accepts a single (x, y) pair with scalar z, or an (N, 2) array with (N,) z.
    Returns (target_pixels, target_depths) with matching shape.
    """
    p = np.atleast_2d(np.asarray(pixel, np.float64))
    zz = np.atleast_1d(np.asarray(z, np.float64))
    if np.any(zz <= 0):
        raise ValueError("depth must be positive")
    ph = np.concatenate([p, np.ones((p.shape[0], 1))], axis=1)
    x_s = (src.K_inv @ ph.T) * zz
    r, t = src.relative_to(dst)
    x_t = r @ x_s + t[:, None]
    depth_t = x_t[2]
    if np.any(depth_t <= 0):
        raise BehindCameraError("point reprojects behind the target camera")
    q = dst.K @ x_t
    out = (q[:2] / q[2]).T
    if np.isscalar(z) or np.asarray(z).ndim == 0:
        return out[0], float(depth_t[0])
    return out, depth_t


def parallax_magnitude(src: Camera, dst: Camera, pixel, z_near: float, z_far: float) -> float:
    """Screen-space displacement between reprojections at two depths, in pixels."""
    if not 0 < z_near < z_far:
        raise ValueError("need 0 < z_near < z_far")
    p_near, _ = reproject_point(src, dst, pixel, z_near)
    p_far, _ = reproject_point(src, dst, pixel, z_far)
    return float(np.linalg.norm(np.asarray(p_near) - np.asarray(p_far)))


_CV_FILTERS = {"nearest": cv2.INTER_NEAREST, "bilinear": cv2.INTER_LINEAR}


class WarpedView:
    """Warped-layer container for the hot render path.

    Duck-types the Layer attributes the compositor and strip repair read,
    without Layer's construction-time validation, and carries the screen-space
    bounding box the warped support can touch.
    """

    __slots__ = ("color_premul", "alpha", "depth", "confidence",
                 "saliency_score", "instance_ids", "roi")

    def __init__(self, color_premul, alpha, depth, confidence, saliency_score,
                 instance_ids, roi):
        self.color_premul = color_premul
        self.alpha = alpha
        self.depth = depth
        self.confidence = confidence
        self.saliency_score = saliency_score
        self.instance_ids = instance_ids
        self.roi = roi  # (y0, y1, x0, x1) in target pixels

    @property
    def shape(self):
        return self.alpha.shape


def _support_box(alpha: np.ndarray) -> tuple[int, int, int, int] | None:
    rows = alpha.any(axis=1)
    if not rows.any():
        return None
    cols = alpha.any(axis=0)
    ys = np.nonzero(rows)[0]
    xs = np.nonzero(cols)[0]
    return int(ys[0]), int(ys[-1]) + 1, int(xs[0]), int(xs[-1]) + 1


def warp_layer_view(layer: Layer, hom: PlaneHomography,
                    out_size: tuple[int, int],
                    filter: str = "bilinear") -> WarpedView:
    """ROI-limited inverse warp: identical pixels to warp_layer, but only the
    target rectangle that can receive non-zero support is resampled."""
    h, w = out_size
    zeros = np.zeros((h, w), np.float32)
    zeros3 = np.zeros((h, w, 3), np.float32)
    box = _support_box(layer.alpha)
    if box is None:
        return WarpedView(zeros3, zeros, layer.depth, layer.confidence,
                          layer.saliency_score, layer.instance_ids,
                          (0, 0, 0, 0))
    # Project the padded source support corners into the target view; the
    # pad covers the bilinear footprint.
    sy0, sy1, sx0, sx1 = box
    corners = np.array([[sx0 - 2, sy0 - 2], [sx1 + 1, sy0 - 2],
                        [sx0 - 2, sy1 + 1], [sx1 + 1, sy1 + 1]], np.float64)
    fwd = np.linalg.inv(hom.H)
    ph = np.column_stack([corners, np.ones(4)]) @ fwd.T
    q = ph[:, :2] / ph[:, 2:3]
    y0 = max(int(np.floor(q[:, 1].min())) - 2, 0)
    y1 = min(int(np.ceil(q[:, 1].max())) + 3, h)
    x0 = max(int(np.floor(q[:, 0].min())) - 2, 0)
    x1 = min(int(np.ceil(q[:, 0].max())) + 3, w)
    if y0 >= y1 or x0 >= x1:
        return WarpedView(zeros3, zeros, layer.depth, layer.confidence,
                          layer.saliency_score, layer.instance_ids,
                          (0, 0, 0, 0))
    # Inverse-map matrix for the cropped target: offset then the original H.
    shift = np.array([[1.0, 0.0, x0], [0.0, 1.0, y0], [0.0, 0.0, 1.0]])
    hroi = hom.H @ shift
    flags = _CV_FILTERS[filter] | cv2.WARP_INVERSE_MAP
    color = cv2.warpPerspective(
        np.ascontiguousarray(layer.color_premul), hroi, (x1 - x0, y1 - y0),
        flags=flags, borderMode=cv2.BORDER_CONSTANT, borderValue=0.0)
    alpha = cv2.warpPerspective(
        np.ascontiguousarray(layer.alpha), hroi, (x1 - x0, y1 - y0),
        flags=flags, borderMode=cv2.BORDER_CONSTANT, borderValue=0.0)
    np.clip(alpha, 0.0, 1.0, out=alpha)
    np.minimum(color, alpha[..., None], out=color)
    if (y0, y1, x0, x1) == (0, h, 0, w):
        return WarpedView(color, alpha, layer.depth, layer.confidence,
                          layer.saliency_score, layer.instance_ids,
                          (y0, y1, x0, x1))
    zeros[y0:y1, x0:x1] = alpha
    zeros3[y0:y1, x0:x1] = color
    return WarpedView(zeros3, zeros, layer.depth, layer.confidence,
                      layer.saliency_score, layer.instance_ids,
                      (y0, y1, x0, x1))


def warp_layer(layer: Layer, hom: PlaneHomography, out_size: tuple[int, int],
               filter: str = "bilinear") -> Layer:
    """Inverse-warp a layer into target screen space.

    out_size is (height, width). Pixels mapping outside the source get alpha 0;
    premultiplication survives because color and alpha share one filter.
    """
    if filter not in _CV_FILTERS:
        raise ValueError(f"unknown filter: {filter}")
    h, w = out_size
    flags = _CV_FILTERS[filter] | cv2.WARP_INVERSE_MAP
    # Color and alpha are warped separately but share the sample weights, so
    # interpolation stays a convex combination: range and premultiplication
    # survive without re-clamping the color.
    color = cv2.warpPerspective(
        np.ascontiguousarray(layer.color_premul), hom.H, (w, h), flags=flags,
        borderMode=cv2.BORDER_CONSTANT, borderValue=0.0)
    alpha = cv2.warpPerspective(
        np.ascontiguousarray(layer.alpha), hom.H, (w, h), flags=flags,
        borderMode=cv2.BORDER_CONSTANT, borderValue=0.0)
    np.clip(alpha, 0.0, 1.0, out=alpha)
    np.minimum(color, alpha[..., None], out=color)
    return Layer(
        color_premul=color, alpha=alpha, depth=layer.depth,
        confidence=layer.confidence, saliency_score=layer.saliency_score,
        instance_ids=layer.instance_ids,
    )

"""GOP organization: I-frame anchors, motion-propagated P-frames, confidence
tracking and refresh triggers."""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np
from scipy import ndimage

from .config import MatteConfig, TemporalConfig
from .core import DepthMap, Layer, LayerSet
from .layergen import signed_distance, feather_width
from .metrics import chamfer_distance


class MotionSizeMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class MotionField:
    """Dense per-pixel displacement: content at p in the previous frame appears
    at p + flow(p) in the current frame."""

    flow: np.ndarray  # HxWx2 float32, (dx, dy)

    def __post_init__(self):
        f = np.asarray(self.flow, np.float32)
        if f.ndim != 3 or f.shape[2] != 2:
            raise ValueError("flow must be HxWx2")
        if not np.all(np.isfinite(f)):
            raise ValueError("flow must be finite")
        object.__setattr__(self, "flow", f)

    @classmethod
    def zero(cls, shape: tuple[int, int]) -> "MotionField":
        return cls(flow=np.zeros(shape + (2,), np.float32))


def estimate_motion(prev: np.ndarray, cur: np.ndarray,
                    block: int = 16, search: int = 8) -> MotionField:
    """Exhaustive block matching fallback (SAD) when no flow is ingested."""
    p = np.asarray(prev, np.float32)
    c = np.asarray(cur, np.float32)
    if p.ndim == 3:
        p = p.mean(axis=2)
        c = c.mean(axis=2)
    if p.shape != c.shape:
        raise MotionSizeMismatchError("frame sizes differ")
    h, w = p.shape
    flow = np.zeros((h, w, 2), np.float32)
    for by in range(0, h, block):
        for bx in range(0, w, block):
            cb = c[by:by + block, bx:bx + block]
            best, best_sad = (0, 0), np.inf
            for dy in range(-search, search + 1):
                sy = by - dy
                if sy < 0 or sy + cb.shape[0] > h:
                    continue
                for dx in range(-search, search + 1):
                    sx = bx - dx
                    if sx < 0 or sx + cb.shape[1] > w:
                        continue
                    sad = float(np.abs(cb - p[sy:sy + cb.shape[0],
                                              sx:sx + cb.shape[1]]).sum())
                    if sad < best_sad - 1e-9:
                        best, best_sad = (dx, dy), sad
            flow[by:by + block, bx:bx + block, 0] = best[0]
            flow[by:by + block, bx:bx + block, 1] = best[1]
    return MotionField(flow=flow)


def advect(image: np.ndarray, motion: MotionField,
           filter: str = "bilinear") -> np.ndarray:
    """Pull-back warp: out(p) = image(p - flow(p))."""
    img = np.asarray(image)
    h, w = img.shape[:2]
    if motion.flow.shape[:2] != (h, w):
        raise MotionSizeMismatchError("motion size does not match image")
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float32)
    map_x = xs - motion.flow[..., 0]
    map_y = ys - motion.flow[..., 1]
    interp = cv2.INTER_LINEAR if filter == "bilinear" else cv2.INTER_NEAREST
    src = img.astype(np.float32)
    return cv2.remap(src, map_x, map_y, interp, borderMode=cv2.BORDER_CONSTANT,
                     borderValue=0.0)


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, bool), np.asarray(b, bool)
    union = (a | b).sum()
    if union == 0:
        return 1.0
    return float((a & b).sum() / union)


def boundary_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """1 - normalized symmetric chamfer distance between 0.5-contours."""
    am, bm = np.asarray(a, bool), np.asarray(b, bool)
    ca = am & ~ndimage.binary_erosion(am, border_value=1) if am.any() else am
    cb = bm & ~ndimage.binary_erosion(bm, border_value=1) if bm.any() else bm
    diag = float(np.hypot(*am.shape))
    d = chamfer_distance(ca, cb)
    return float(np.clip(1.0 - d / (0.01 * diag), 0.0, 1.0))


@dataclass
class GopState:
    """Sequencer state: last anchor, current propagated layers, confidences."""

    anchor: LayerSet
    current: LayerSet
    confidences: np.ndarray
    frames_since_i: int = 0
    params: TemporalConfig = field(default_factory=TemporalConfig)
    trigger_streak: int = 0
    remat_pixels: int = 0

    @classmethod
    def fresh(cls, anchor: LayerSet, params: TemporalConfig | None = None):
        params = params or TemporalConfig()
        return cls(anchor=anchor, current=anchor,
                   confidences=np.ones(len(anchor.layers)), params=params)


def redetected_support(ls: LayerSet, depth: DepthMap, instance_id=None):
    """Per-layer support from new-frame evidence: nearest reference depth,
    overridden by instance ownership where instances are tracked."""
    depths = ls.depths
    nearest = np.abs(depth.values[..., None] - depths).argmin(axis=-1)
    nearest[~depth.valid] = -1
    if instance_id is not None:
        for k, layer in enumerate(ls.layers):
            for inst in layer.instance_ids:
                nearest[instance_id == inst] = k
    return [nearest == k for k in range(len(ls.layers))]


def propagate(state: GopState, image: np.ndarray, depth: DepthMap,
              motion: MotionField, instance_id=None,
              crack: float = 0.0) -> tuple[GopState, str]:
    """Advance one frame: advect mattes, update confidences, decide P vs I.

    Returns the updated state plus "P" or "I"; on "I" the caller re-decomposes
    and replaces the state via GopState.fresh.
    """
    if motion.flow.shape[:2] != state.current.shape:
        raise MotionSizeMismatchError("motion size does not match layers")
    p = state.params
    supports = redetected_support(state.current, depth, instance_id)
    ious, sims, advected = [], [], []
    img = np.clip(np.asarray(image, np.float32), 0.0, 1.0)
    # Pixels whose pull-back source fell outside the frame carry no evidence;
    # excluding them stops entering content from faking a mask boundary.
    valid = advect(np.ones(state.current.shape, np.float32), motion,
                   filter="nearest") >= 0.5
    for k, layer in enumerate(state.current.layers):
        adv_alpha = np.clip(advect(layer.alpha, motion), 0.0, 1.0)
        adv_color = advect(layer.color_premul, motion)
        advected.append((adv_alpha, adv_color))
        iou = mask_iou((adv_alpha >= 0.5) & valid, supports[k] & valid)
        sim = boundary_similarity((adv_alpha >= 0.5) & valid,
                                  supports[k] & valid)
        ious.append(iou)
        sims.append(sim)

    blend = 0.5 * np.array(ious) + 0.5 * np.array(sims)
    confidences = np.clip(p.ema_weight * state.confidences
                          + (1 - p.ema_weight) * blend, 0.0, 1.0)

    mean_iou = float(np.mean(ious))
    soft_trigger = mean_iou < p.iou_thresh or crack > p.crack_thresh
    streak = state.trigger_streak + 1 if soft_trigger else 0

    remat = 0
    alphas, colors = [], []
    for k, layer in enumerate(state.current.layers):
        adv_alpha, adv_color = advected[k]
        alpha = adv_alpha.copy()
        color = np.minimum(adv_color, alpha[..., None])
        # Localized re-matting where structure changed — but not on refresh
        # candidates: healing there would erase the drift the hysteresis
        # window needs to see on the next frame.
        if not soft_trigger:
            target_alpha = _support_matte(supports[k], depth)
            changed = np.abs(adv_alpha - target_alpha) > 0.1
            if changed.any():
                remat += int(changed.sum())
                alpha[changed] = target_alpha[changed]
                color[changed] = (alpha[changed, None] * img[changed])
        alphas.append(alpha)
        colors.append(color)
    # EMA-blend contours toward the advected history so re-matted boundaries
    # do not jitter frame to frame; colors follow the matte inside the band.
    smoothed = smooth_boundaries([a for a, _ in advected], alphas,
                                 depth.stability, p)
    new_layers = []
    for k, layer in enumerate(state.current.layers):
        alpha, color = smoothed[k], colors[k]
        moved = alpha != alphas[k]
        if moved.any():
            color = color.copy()
            color[moved] = alpha[moved, None] * img[moved]
        new_layers.append(Layer(
            color_premul=np.clip(color, 0.0, 1.0), alpha=alpha,
            depth=layer.depth, confidence=layer.confidence,
            saliency_score=layer.saliency_score,
            instance_ids=layer.instance_ids))
    frames = state.frames_since_i + 1
    if frames >= p.max_gop or streak >= 2:
        return GopState(anchor=state.anchor, current=state.current,
                        confidences=confidences, frames_since_i=frames,
                        params=p, trigger_streak=streak,
                        remat_pixels=remat), "I"
    current = LayerSet(layers=tuple(new_layers),
                       frame_index=state.current.frame_index + 1,
                       source_camera=state.current.source_camera,
                       max_layers=state.current.max_layers)
    return GopState(anchor=state.anchor, current=current,
                    confidences=confidences, frames_since_i=frames,
                    params=p, trigger_streak=streak,
                    remat_pixels=remat), "P"


def _support_matte(support: np.ndarray, depth: DepthMap,
                   matte: MatteConfig | None = None) -> np.ndarray:
    matte = matte or MatteConfig()
    if support.all():
        return np.ones(support.shape, np.float32)
    if not support.any():
        return np.zeros(support.shape, np.float32)
    w = feather_width(depth, matte)
    s = signed_distance(support)
    return np.clip(0.5 - s / w, 0.0, 1.0).astype(np.float32)


def associate_instances(prev: LayerSet, next_masks: dict[int, np.ndarray],
                        motion: MotionField) -> dict[int, int]:
    """Greedy max-IoU matching of advected previous layers to new masks.

    Returns a partial injection {prev layer index -> next mask id}; next masks
    left unmatched become new layers upstream.
    """
    advected = {k: advect(l.alpha, motion) >= 0.5
                for k, l in enumerate(prev.layers)}
    scores = []
    for k, adv in advected.items():
        for mid, mask in next_masks.items():
            scores.append((mask_iou(adv, mask), -k, -mid, k, mid))
    mapping: dict[int, int] = {}
    used = set()
    for iou, _, _, k, mid in sorted(scores, reverse=True):
        if iou <= 0.0 or k in mapping or mid in used:
            continue
        mapping[k] = mid
        used.add(mid)
    return mapping


def smooth_boundaries(prev_advected: list[np.ndarray], new_mattes: list[np.ndarray],
                      stability: np.ndarray, cfg: TemporalConfig,
                      band_radius: float = 4.0) -> list[np.ndarray]:
    """EMA-blend mattes near contours; unstable depth strengthens the history
    term. Away from boundaries the new matte passes through unchanged."""
    out = []
    stab = np.asarray(stability, np.float64)
    for prev_a, new_a in zip(prev_advected, new_mattes):
        contour_band = np.abs(signed_distance(new_a >= 0.5)) <= band_radius
        eta = cfg.ema_boundary + (1 - cfg.ema_boundary) * 0.5 * (1 - stab)
        blended = eta * prev_a + (1 - eta) * new_a
        out.append(np.where(contour_band, blended, new_a).astype(np.float32))
    return out

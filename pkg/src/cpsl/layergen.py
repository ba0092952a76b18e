"""Frame decomposition: group energy labels into a compact layer stack.

Salient instances get dedicated layers; remaining regions are merged greedily
until the layer budget holds; each group is feather-matted into a soft alpha
band and stored with premultiplied color.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np
from scipy import ndimage

from .config import MatteConfig, PromotionConfig
from .core import (Camera, DepthMap, EdcSample, EdgeDepthCache, Layer,
                   LayerSet, SemanticMaps, dz_quantize)
from .energy import LayerAssignment


class BudgetInfeasibleError(ValueError):
    """More promoted instances than the layer budget allows."""


@dataclass(frozen=True)
class GroupedAssignment:
    """Near-to-far group labels after promotion and merging."""

    labels: np.ndarray                 # per-pixel group index, 0-based
    group_depths: np.ndarray           # strictly increasing representative depths
    saliency_scores: np.ndarray        # per group
    instance_ids: tuple                # per group: frozenset of owned instances
    promoted: tuple                    # per group: bool

    @property
    def n_groups(self) -> int:
        return self.group_depths.shape[0]


def saliency_fallback(image: np.ndarray) -> np.ndarray:
    """Analytic stand-in when no saliency map is ingested: normalized local
    contrast times a center-weighted Gaussian prior."""
    img = np.asarray(image, np.float32)
    gray = img.mean(axis=-1) if img.ndim == 3 else img
    local_mean = ndimage.uniform_filter(gray, size=9)
    contrast = np.abs(gray - local_mean)
    if contrast.max() > 0:
        contrast = contrast / contrast.max()
    h, w = gray.shape
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    prior = np.exp(-(((yy - cy) / (0.5 * h)) ** 2 + ((xx - cx) / (0.5 * w)) ** 2))
    return np.clip(contrast * prior, 0.0, 1.0)


def promote_and_merge(assign: LayerAssignment, sem: SemanticMaps,
                      depth: DepthMap, image: np.ndarray,
                      params: PromotionConfig, k_budget: int) -> GroupedAssignment:
    """Promote salient instances to dedicated groups, merge the rest.

    An instance is promoted when its joint score (mean saliency x area fraction)
    exceeds theta_promote. Non-promoted regions keep their energy label and are
    merged by ascending cost (depth variance if merged + texture difference)
    until at most k_budget groups remain.
    """
    h, w = assign.labels.shape
    total = h * w
    img = np.asarray(image, np.float64)
    if img.ndim == 2:
        img = img[..., None]

    group_masks: list[np.ndarray] = []
    group_inst: list[frozenset] = []
    group_promoted: list[bool] = []

    promoted_mask = np.zeros((h, w), bool)
    for inst_id in np.unique(sem.instance_id):
        if inst_id == 0:
            continue
        mask = sem.instance_id == inst_id
        score = float(sem.saliency[mask].mean()) * (mask.sum() / total)
        if score > params.theta_promote:
            group_masks.append(mask)
            group_inst.append(frozenset([int(inst_id)]))
            group_promoted.append(True)
            promoted_mask |= mask

    n_promoted = len(group_masks)
    if k_budget < max(n_promoted, 1):
        raise BudgetInfeasibleError(
            f"budget {k_budget} below {n_promoted} promoted instances")

    for lbl in range(assign.representative_depths.shape[0]):
        mask = (assign.labels == lbl) & ~promoted_mask
        if mask.any():
            group_masks.append(mask)
            group_inst.append(frozenset())
            group_promoted.append(False)

    group_masks, group_inst, group_promoted = _merge_to_budget(
        group_masks, group_inst, group_promoted, depth, img, params, k_budget)

    return _order_groups(group_masks, group_inst, group_promoted, depth, sem)


def _merge_cost(ma, mb, depth, img, params) -> float:
    both = ma | mb
    zsel = both & depth.valid
    var = float(np.var(depth.values[zsel])) if zsel.any() else 0.0
    ca = img[ma].mean(axis=0)
    cb = img[mb].mean(axis=0)
    return var + params.merge_texture_weight * float(np.linalg.norm(ca - cb))


def _merge_to_budget(masks, insts, promoted, depth, img, params, k_budget):
    masks, insts, promoted = list(masks), list(insts), list(promoted)
    while len(masks) > k_budget:
        candidates = [i for i, p in enumerate(promoted) if not p]
        if len(candidates) < 2:
            raise BudgetInfeasibleError("cannot merge promoted instances")
        best, best_cost = None, np.inf
        for ai in range(len(candidates)):
            for bi in range(ai + 1, len(candidates)):
                a, b = candidates[ai], candidates[bi]
                cost = _merge_cost(masks[a], masks[b], depth, img, params)
                if cost < best_cost - 1e-15:
                    best, best_cost = (a, b), cost
        a, b = best
        masks[a] = masks[a] | masks[b]
        insts[a] = insts[a] | insts[b]
        for lst in (masks, insts, promoted):
            del lst[b]
    return masks, insts, promoted


def _order_groups(masks, insts, promoted, depth: DepthMap, sem: SemanticMaps):
    depths = []
    for mask in masks:
        sel = mask & depth.valid
        depths.append(float(np.median(depth.values[sel])) if sel.any()
                      else float(np.median(depth.values[depth.valid])))
    order = sorted(range(len(masks)), key=lambda i: (depths[i], i))
    labels = np.zeros(masks[0].shape, np.int32)
    zs, scores, ordered_inst, ordered_prom = [], [], [], []
    prev = 0.0
    for new, old in enumerate(order):
        labels[masks[old]] = new
        z = depths[old]
        if z <= prev:
            z = prev + 1e-6  # equal medians: nudge to keep strict ordering
        zs.append(z)
        prev = z
        scores.append(float(sem.saliency[masks[old]].mean()) if masks[old].any() else 0.0)
        ordered_inst.append(insts[old])
        ordered_prom.append(promoted[old])
    return GroupedAssignment(
        labels=labels, group_depths=np.array(zs),
        saliency_scores=np.array(scores),
        instance_ids=tuple(ordered_inst), promoted=tuple(ordered_prom),
    )


def signed_distance(mask: np.ndarray) -> np.ndarray:
    """Pixel-center signed distance to the region boundary, positive outside.

    For a straight axis-aligned boundary this equals the exact distance from
    each pixel center to the half-integer boundary line.
    """
    if mask.all():
        return np.full(mask.shape, -np.inf)
    if not mask.any():
        return np.full(mask.shape, np.inf)
    m8 = np.asarray(mask, np.uint8)
    d_in = cv2.distanceTransform(m8, cv2.DIST_L2, cv2.DIST_MASK_PRECISE)
    d_out = cv2.distanceTransform(1 - m8, cv2.DIST_L2, cv2.DIST_MASK_PRECISE)
    return np.where(mask, 0.5 - d_in, d_out - 0.5).astype(np.float64)


def feather_width(depth: DepthMap, matte: MatteConfig) -> np.ndarray:
    """Adaptive feather width from depth gradient and depth uncertainty."""
    z = np.where(depth.valid, depth.values, np.median(depth.values[depth.valid]))
    gy, gx = np.gradient(z.astype(np.float64))
    grad = np.hypot(gx, gy)
    # Stability enters as uncertainty: low stability widens the feather.
    w = matte.w0 + matte.a * grad + matte.b * (1.0 - depth.stability)
    return np.clip(w, matte.w_min, matte.w_max)


def matte_layers(grouped: GroupedAssignment, depth: DepthMap, sem: SemanticMaps,
                 image: np.ndarray, matte: MatteConfig,
                 source_camera: Camera, frame_index: int = 0,
                 max_layers: int = 12) -> LayerSet:
    """Feathered alpha mattes + premultiplied colors for each group."""
    img = np.clip(np.asarray(image, np.float32), 0.0, 1.0)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=-1)
    w = feather_width(depth, matte)
    layers = []
    for g in range(grouped.n_groups):
        mask = grouped.labels == g
        sdist = signed_distance(mask)
        alpha = np.clip(0.5 - sdist / w, 0.0, 1.0).astype(np.float32)
        layers.append(Layer(
            color_premul=alpha[..., None] * img,
            alpha=alpha,
            depth=float(grouped.group_depths[g]),
            confidence=1.0,
            saliency_score=float(grouped.saliency_scores[g]),
            instance_ids=grouped.instance_ids[g],
        ))
    return LayerSet(layers=tuple(layers), frame_index=frame_index,
                    source_camera=source_camera, max_layers=max_layers)


def contour_pixels(alpha: np.ndarray) -> np.ndarray:
    """Boolean map of pixels where the matte crosses 0.5 (region rim)."""
    mask = alpha >= 0.5
    if not mask.any():
        return np.zeros_like(mask)
    eroded = ndimage.binary_erosion(mask, border_value=1)
    return mask & ~eroded


def build_edge_depth_cache(ls: LayerSet, dz_min: float, dz_max: float,
                           search_radius: int = 3) -> EdgeDepthCache:
    """One sample per contour pixel of each non-last layer: nearest covering
    behind-layer index plus the log-quantized depth gap."""
    samples = []
    k = len(ls.layers)
    covers = [l.alpha >= 0.5 for l in ls.layers]
    dilated = [ndimage.binary_dilation(c, iterations=search_radius) if c.any() else c
               for c in covers]
    for f in range(k - 1):
        contour = contour_pixels(ls.layers[f].alpha)
        ys, xs = np.nonzero(contour)
        for y, x in zip(ys, xs):
            back = next((b for b in range(f + 1, k) if dilated[b][y, x]), k - 1)
            dz = ls.layers[back].depth - ls.layers[f].depth
            samples.append(EdcSample(
                x=int(x), y=int(y), front_layer=f, back_layer=back,
                dz_quant=dz_quantize(dz, dz_min, dz_max)))
    return EdgeDepthCache(samples=tuple(samples), dz_min=dz_min, dz_max=dz_max)

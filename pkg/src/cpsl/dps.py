"""Dynamic pixel strip: screen-space boundary repair after warping.

Cracks between independently warped layers open along silhouettes. The strip
is a thin band around each warped front-layer contour whose color and depth
interpolate between the front and back layers; parallax controls the band
width, a smoothstep of signed contour distance controls the blend.

The detection/band/blend math lives in array-based helpers; the public
functions wrap them with the BoundaryPixel list interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np
from scipy.spatial import cKDTree

from .compositor import CompositeOutput
from .config import DpsConfig
from .core import MU_LAW_MU, Camera, EdgeDepthCache, Layer
from .geometry import plane_homography, reproject_point

ALPHA_EPS = 1e-3

_CROSS = cv2.getStructuringElement(cv2.MORPH_CROSS, (3, 3))


@dataclass(frozen=True)
class BoundaryPixel:
    y: int
    x: int
    front_layer: int
    back_layer: int
    dz: float | None  # dequantized EDC gap when a sample was within reach


@dataclass(frozen=True)
class StripBand:
    """Band membership plus per-pixel blend weight and layer pairing."""

    mask: np.ndarray     # HxW bool
    gamma: np.ndarray    # HxW float in [0,1], defined on mask
    front: np.ndarray    # HxW int32, -1 outside mask
    back: np.ndarray     # HxW int32
    depth: np.ndarray    # HxW float32 interpolated depth, defined on mask

    def __post_init__(self):
        g = self.gamma[self.mask]
        if g.size and (g.min() < 0 or g.max() > 1):
            raise ValueError("gamma must lie in [0, 1] on the band")


def _layer_roi(layer, h: int, w: int, pad: int) -> tuple[int, int, int, int]:
    box = getattr(layer, "roi", None) or (0, h, 0, w)
    y0, y1, x0, x1 = box
    return (max(y0 - pad, 0), min(y1 + pad, h),
            max(x0 - pad, 0), min(x1 + pad, w))


def _signed_distance32(mask: np.ndarray) -> np.ndarray:
    """Float32 signed pixel-center distance to the region rim, positive out."""
    if mask.all():
        return np.full(mask.shape, -np.inf, np.float32)
    if not mask.any():
        return np.full(mask.shape, np.inf, np.float32)
    m8 = mask.astype(np.uint8)
    d_in = cv2.distanceTransform(m8, cv2.DIST_L2, cv2.DIST_MASK_PRECISE)
    d_out = cv2.distanceTransform(1 - m8, cv2.DIST_L2, cv2.DIST_MASK_PRECISE)
    return np.where(mask, 0.5 - d_in, d_out - 0.5)


def _detect_arrays(warped: list[Layer], cfg: DpsConfig,
                   edc: EdgeDepthCache | None = None,
                   edc_positions: dict[int, np.ndarray] | None = None):
    """Silhouette pixels as flat arrays (ys, xs, fronts, backs, dz-or-nan)."""
    empty = (np.zeros(0, np.int64),) * 4 + (np.zeros(0),)
    k = len(warped)
    if k < 2:
        return empty
    h, w = warped[0].shape
    dilated = np.zeros((k, h, w), np.uint8)
    for i, layer in enumerate(warped):
        y0, y1, x0, x1 = _layer_roi(layer, h, w, cfg.search_radius + 1)
        if y0 >= y1 or x0 >= x1:
            continue
        sub = (layer.alpha[y0:y1, x0:x1] >= 0.5).astype(np.uint8)
        if sub.any():
            dilated[i, y0:y1, x0:x1] = cv2.dilate(
                sub, _CROSS, iterations=cfg.search_radius)

    sample_front = sample_codes = sample_back = None
    if edc is not None and edc_positions and edc.samples:
        sample_front = np.array([s.front_layer for s in edc.samples])
        sample_codes = np.array([s.dz_quant for s in edc.samples])
        sample_back = np.array([s.back_layer for s in edc.samples])

    ys_l, xs_l, fs_l, bs_l, dz_l = [], [], [], [], []
    for f in range(k - 1):
        y0, y1, x0, x1 = _layer_roi(warped[f], h, w, 2)
        if y0 >= y1 or x0 >= x1:
            continue
        gy, gx = np.gradient(warped[f].alpha[y0:y1, x0:x1].astype(np.float64))
        strong = gx * gx + gy * gy > cfg.tau_edge ** 2
        if not strong.any():
            continue
        ys, xs = np.nonzero(strong)
        ys = ys + y0
        xs = xs + x0
        # Pair each silhouette pixel with the first covering layer behind it;
        # where no layer is within reach (wide disocclusions), a nearby EDC
        # sample still supplies the pairing and depth gap.
        behind = dilated[f + 1:, ys, xs]
        has_back = behind.any(axis=0)
        backs = np.where(has_back, behind.argmax(axis=0) + f + 1, -1)
        dz = np.full(len(ys), np.nan)
        if sample_front is not None and f in edc_positions:
            pos = edc_positions[f]
            mine = sample_front == f
            if len(pos) and mine.any():
                u = np.expm1(sample_codes[mine] / 255.0
                             * np.log1p(MU_LAW_MU)) / MU_LAW_MU
                dz_vals = edc.dz_min + u * (edc.dz_max - edc.dz_min)
                d, idx = cKDTree(pos).query(np.column_stack([xs, ys]), k=1)
                near = d <= cfg.r_edc
                dz[near] = dz_vals[idx[near]]
                backs = np.where(has_back, backs,
                                 np.where(near, sample_back[mine][idx], -1))
        keep = backs >= 0
        if not keep.any():
            continue
        ys_l.append(ys[keep])
        xs_l.append(xs[keep])
        fs_l.append(np.full(int(keep.sum()), f, np.int64))
        bs_l.append(backs[keep].astype(np.int64))
        dz_l.append(dz[keep])
    if not ys_l:
        return empty
    return (np.concatenate(ys_l), np.concatenate(xs_l), np.concatenate(fs_l),
            np.concatenate(bs_l), np.concatenate(dz_l))


def detect_silhouettes(warped: list[Layer], cfg: DpsConfig,
                       edc: EdgeDepthCache | None = None,
                       edc_positions: dict[int, np.ndarray] | None = None
                       ) -> list[BoundaryPixel]:
    """Silhouette pixels of each warped layer, paired with the nearest layer
    behind them; tagged with the closest warped EDC sample when in range.

    edc_positions maps front-layer index to (M, 2) warped (x, y) sample
    positions matching the order of that layer's samples in edc.
    """
    ys, xs, fs, bs, dz = _detect_arrays(warped, cfg, edc, edc_positions)
    return [BoundaryPixel(y=int(y), x=int(x), front_layer=int(f),
                          back_layer=int(b),
                          dz=None if np.isnan(g) else float(g))
            for y, x, f, b, g in zip(ys, xs, fs, bs, dz)]


def warp_edc_positions(edc: EdgeDepthCache, src: Camera, dst: Camera,
                       layer_depths: np.ndarray) -> dict[int, np.ndarray]:
    """Map EDC sample pixels into the target view via their front layer plane."""
    out: dict[int, np.ndarray] = {}
    if not edc.samples:
        return out
    sx = np.array([s.x for s in edc.samples], np.float64)
    sy = np.array([s.y for s in edc.samples], np.float64)
    sf = np.array([s.front_layer for s in edc.samples])
    for f in np.unique(sf).astype(int):
        mine = sf == f
        pts = np.column_stack([sx[mine], sy[mine]])
        warped, _ = reproject_point(src, dst, pts,
                                    np.full(int(mine.sum()), layer_depths[f]))
        out[f] = warped
    return out


def smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _build_strip_arrays(ys, xs, fs, bs, dz, viewer: Camera, src: Camera,
                        warped: list[Layer], cfg: DpsConfig) -> StripBand:
    h, w = warped[0].shape
    mask = np.zeros((h, w), bool)
    gamma = np.zeros((h, w), np.float32)
    front = np.full((h, w), -1, np.int32)
    back = np.full((h, w), -1, np.int32)
    depth = np.zeros((h, w), np.float32)
    if not len(ys):
        return StripBand(mask=mask, gamma=gamma, front=front, back=back,
                         depth=depth)

    depths = np.array([l.depth for l in warped])
    inner = cfg.w_min / 2.0
    # Far fronts first so nearer fronts overwrite on overlap.
    for f in sorted(set(fs.tolist()), reverse=True):
        sel = fs == f
        by, bx, bb, bdz = ys[sel], xs[sel], bs[sel], dz[sel]
        z_f = depths[f]
        z_b = np.where(np.isnan(bdz), depths[bb], z_f + bdz)
        z_b = np.maximum(z_b, z_f * (1 + 1e-6))
        pts = np.column_stack([bx, by]).astype(np.float64)
        near, _ = reproject_point(src, viewer, pts, np.full(len(by), z_f))
        far, _ = reproject_point(src, viewer, pts, z_b)
        par = np.linalg.norm(near - far, axis=1)
        widths = np.clip(cfg.w_min + cfg.c_p * par, cfg.w_min, cfg.w_max)
        reach = float(widths.max()) + 1.0

        # Work in a padded box around this front's boundary pixels: the band
        # reaches at most `reach` from them and the margin keeps the cropped
        # distance fields exact over that reach.
        pad = int(2 * reach) + 8
        y0, y1 = max(int(by.min()) - pad, 0), min(int(by.max()) + pad + 1, h)
        x0, x1 = max(int(bx.min()) - pad, 0), min(int(bx.max()) + pad + 1, w)
        cy, cx = by - y0, bx - x0
        not_contour = np.ones((y1 - y0, x1 - x0), np.uint8)
        not_contour[cy, cx] = 0
        # Nearest boundary sample supplies the local width, back layer and
        # back depth; its distance also keeps the band local to this front's
        # boundary pixels.
        dist, labels = cv2.distanceTransformWithLabels(
            not_contour, cv2.DIST_L2, cv2.DIST_MASK_5,
            labelType=cv2.DIST_LABEL_PIXEL)
        to_sample = np.zeros(int(labels.max()) + 1, np.int64)
        to_sample[labels[cy, cx]] = np.arange(len(by))

        s = _signed_distance32(warped[f].alpha[y0:y1, x0:x1] >= 0.5)
        # Cracks open on the outer (disoccluded) side of the silhouette, so
        # the band keeps a fixed w_min/2 inner margin and spends the rest of
        # the width outward; at zero parallax this degenerates to the w_min
        # band around the contour.
        cand = (s >= -inner) & (dist <= reach)
        if not cand.any():
            continue
        ky, kx = np.nonzero(cand)
        si = to_sample[labels[ky, kx]]
        near_w = widths[si]
        outer = np.maximum(near_w - inner, inner)
        s1 = s[ky, kx]
        keep = s1 <= outer
        if not keep.any():
            continue
        ky, kx, si, outer, s1 = ky[keep], kx[keep], si[keep], outer[keep], \
            s1[keep]
        t = (s1 + inner) / np.maximum(inner + outer, 1e-9)
        g = smoothstep(t).astype(np.float32)
        zmix = ((1.0 - g) * z_f + g * z_b[si]).astype(np.float32)
        iy, ix = ky + y0, kx + x0
        mask[iy, ix] = True
        gamma[iy, ix] = g
        front[iy, ix] = f
        back[iy, ix] = bb[si]
        depth[iy, ix] = zmix
    return StripBand(mask=mask, gamma=gamma, front=front, back=back,
                     depth=depth)


def build_strip(boundaries: list[BoundaryPixel], viewer: Camera, src: Camera,
                warped: list[Layer], cfg: DpsConfig) -> StripBand:
    """Band support and blend weights for the current viewer pose.

    Width W(x) = clamp(w_min + c_p * parallax(x), w_min, w_max) taken from the
    nearest boundary sample; gamma runs 0 (front side) to 1 (back side) as a
    smoothstep of signed distance to the warped front contour.
    """
    ys = np.array([b.y for b in boundaries], np.int64)
    xs = np.array([b.x for b in boundaries], np.int64)
    fs = np.array([b.front_layer for b in boundaries], np.int64)
    bs = np.array([b.back_layer for b in boundaries], np.int64)
    dz = np.array([np.nan if b.dz is None else b.dz for b in boundaries])
    return _build_strip_arrays(ys, xs, fs, bs, dz, viewer, src, warped, cfg)


def _unpremultiplied_at(layer, band_y, band_x) -> tuple[np.ndarray, np.ndarray]:
    """Layer's straight color sampled at band pixels, extended from the
    nearest defined pixel where the layer is transparent.

    Returns (N, 3) colors and an (N,) defined mask; the mask stays False only
    when the whole layer is transparent.
    """
    h, w = layer.alpha.shape
    a = layer.alpha
    a_at = a[band_y, band_x]
    d_at = a_at > ALPHA_EPS
    c_at = np.zeros((len(band_y), 3), np.float32)
    idx = np.nonzero(d_at)[0]
    if len(idx):
        c_at[idx] = (layer.color_premul[band_y[idx], band_x[idx]]
                     / a_at[idx][:, None])
    und = np.nonzero(~d_at)[0]
    if not len(und):
        return c_at, d_at
    # Crack interiors are transparent; extend the straight color from the
    # nearest defined pixel so the blend always has sources across the band.
    # Start from a small crop and widen until the in-crop nearest distance is
    # certainly the global one (closer than the crop margin).
    uy, ux = band_y[und], band_x[und]
    pad = 32
    while True:
        y0, y1 = max(int(uy.min()) - pad, 0), min(int(uy.max()) + pad + 1, h)
        x0, x1 = max(int(ux.min()) - pad, 0), min(int(ux.max()) + pad + 1, w)
        sub = a[y0:y1, x0:x1] > ALPHA_EPS
        full = (y0, y1, x0, x1) == (0, h, 0, w)
        if sub.any():
            dist, labels = cv2.distanceTransformWithLabels(
                (~sub).astype(np.uint8), cv2.DIST_L2, cv2.DIST_MASK_5,
                labelType=cv2.DIST_LABEL_PIXEL)
            if full or float(dist[uy - y0, ux - x0].max()) < pad:
                break
        elif full:
            # The whole layer is transparent: nothing to extend from.
            return c_at, d_at
        pad *= 4
    flat = np.flatnonzero(sub)
    to_flat = np.zeros(int(labels.max()) + 1, np.int64)
    to_flat[labels.ravel()[flat]] = flat
    src = to_flat[labels[uy - y0, ux - x0]]
    sy = src // (x1 - x0) + y0
    sx = src % (x1 - x0) + x0
    c_at[und] = layer.color_premul[sy, sx] / a[sy, sx][:, None]
    return c_at, np.ones_like(d_at)


def apply_strip(out: CompositeOutput, warped: list[Layer],
                strip: StripBand) -> CompositeOutput:
    """Fill residual transmittance across the band with the strip blend.

    The blend of front/back un-premultiplied colors is composited *behind*
    the existing result, so fully covered pixels are untouched and cracks
    (transmittance leaks) receive the interpolated color. Bit-exact no-op
    outside the band mask; idempotent because the blend reads only the warped
    layers, never the composite being repaired.
    """
    color = out.color.copy()
    coverage = out.coverage.copy()
    depth_front = out.depth_front.copy()
    if not strip.mask.any():
        return CompositeOutput(color=color, coverage=coverage,
                               depth_front=depth_front)

    band_y, band_x = np.nonzero(strip.mask)
    fr = strip.front[band_y, band_x]
    bk = strip.back[band_y, band_x]
    g = strip.gamma[band_y, band_x][:, None]
    n = len(band_y)
    cf = np.zeros((n, 3), np.float32)
    cb = np.zeros((n, 3), np.float32)
    f_def = np.zeros(n, bool)
    b_def = np.zeros(n, bool)
    # Bucket band pixels by layer once instead of scanning per layer.
    order_f = np.argsort(fr, kind="stable")
    edges_f = np.searchsorted(fr[order_f], np.arange(len(warped) + 1))
    order_b = np.argsort(bk, kind="stable")
    edges_b = np.searchsorted(bk[order_b], np.arange(len(warped) + 1))
    present = np.nonzero((edges_f[1:] > edges_f[:-1])
                         | (edges_b[1:] > edges_b[:-1]))[0]
    for k in present:
        # One extension pass per layer serves both its front and back roles;
        # the two index sets are disjoint (front != back at any pixel).
        mf = order_f[edges_f[k]:edges_f[k + 1]]
        mb = order_b[edges_b[k]:edges_b[k + 1]]
        mu = np.concatenate([mf, mb])
        cu, du = _unpremultiplied_at(warped[k], band_y[mu], band_x[mu])
        cf[mf], f_def[mf] = cu[:len(mf)], du[:len(mf)]
        cb[mb], b_def[mb] = cu[len(mf):], du[len(mf):]
    blend = np.where((f_def & b_def)[:, None], (1.0 - g) * cf + g * cb,
                     np.where(f_def[:, None], cf, cb))
    ok = f_def | b_def
    iy, ix = band_y[ok], band_x[ok]
    # The strip acts as a local opaque backdrop: it only receives the
    # transmittance the layer stack left behind.
    t = (1.0 - coverage[iy, ix])[:, None]
    color[iy, ix] += t * np.clip(blend[ok], 0.0, 1.0)
    coverage[iy, ix] = 1.0
    hole = np.isinf(depth_front[iy, ix])
    depth_front[iy[hole], ix[hole]] = strip.depth[iy[hole], ix[hole]]
    return CompositeOutput(color=color, coverage=coverage,
                           depth_front=depth_front)

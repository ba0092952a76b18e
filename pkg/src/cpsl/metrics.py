"""Quality and temporal-stability measurement: PSNR, SSIM, crack rate,
boundary variance, flicker score."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .compositor import CompositeOutput

PSNR_CAP_DB = 99.0


class DimensionMismatchError(ValueError):
    pass


def _check_dims(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise DimensionMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Peak signal-to-noise ratio in dB on [0,1] images; identical pairs report
    the 99 dB sentinel. An optional mask restricts the evaluated pixels."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    _check_dims(a, b)
    d2 = (a - b) ** 2
    if mask is not None:
        if mask.shape != a.shape[:2]:
            raise DimensionMismatchError("mask shape mismatch")
        if a.ndim == 3:
            d2 = d2[mask]
        else:
            d2 = d2[mask]
    mse = float(np.mean(d2)) if d2.size else 0.0
    if mse <= 0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(a: np.ndarray, b: np.ndarray, k1: float = 0.01, k2: float = 0.03) -> float:
    """Structural similarity with the standard 11x11 Gaussian window.

    Color images are averaged over per-channel scores.
    """
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    _check_dims(a, b)
    if a.ndim == 3:
        return float(np.mean([ssim(a[..., c], b[..., c], k1, k2)
                              for c in range(a.shape[2])]))
    win = _gaussian_window()
    c1, c2 = k1 ** 2, k2 ** 2

    def filt(x):
        return ndimage.convolve(x, win, mode="reflect")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a ** 2
    var_b = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    smap = num / den
    # Ignore the filter's boundary-affected margin, as the standard
    # implementation does.
    pad = win.shape[0] // 2
    if min(smap.shape) > 2 * pad:
        smap = smap[pad:-pad, pad:-pad]
    return float(np.mean(smap))


def crack_rate(out: CompositeOutput, bands: np.ndarray,
               coverage_thresh: float = 0.98, dilation: int = 3) -> float:
    """Fraction of silhouette-band pixels left see-through after compositing."""
    band = np.asarray(bands, bool)
    if dilation > 0 and band.any():
        band = ndimage.binary_dilation(band, iterations=dilation)
    if not band.any():
        return 0.0
    cracked = out.coverage < coverage_thresh
    return float(cracked[band].mean())


def _contour(alpha: np.ndarray) -> np.ndarray:
    mask = alpha >= 0.5
    if not mask.any() or mask.all():
        return np.zeros_like(mask)
    return mask & ~ndimage.binary_erosion(mask, border_value=1)


def chamfer_distance(mask_a: np.ndarray, mask_b: np.ndarray) -> float:
    """Mean symmetric pixel distance between two contour sets; 0 if both empty."""
    a, b = np.asarray(mask_a, bool), np.asarray(mask_b, bool)
    if not a.any() and not b.any():
        return 0.0
    if not a.any() or not b.any():
        return float(np.hypot(*a.shape))
    da = ndimage.distance_transform_edt(~a)
    db = ndimage.distance_transform_edt(~b)
    return 0.5 * (float(da[b].mean()) + float(db[a].mean()))


def boundary_instability(alpha_sequence: list[np.ndarray]) -> float:
    """Mean chamfer distance between consecutive 0.5-contours of a matte
    sequence (raw, unnormalized)."""
    if len(alpha_sequence) < 2:
        return 0.0
    dists = []
    for prev, cur in zip(alpha_sequence, alpha_sequence[1:]):
        dists.append(chamfer_distance(_contour(prev), _contour(cur)))
    return float(np.mean(dists))


def boundary_variance(alpha_sequence: list[np.ndarray],
                      baseline_sequence: list[np.ndarray]) -> float:
    """Contour instability normalized so the frame-wise baseline scores 1.0."""
    base = boundary_instability(baseline_sequence)
    if base == 0.0:
        return 0.0 if boundary_instability(alpha_sequence) == 0.0 else np.inf
    return boundary_instability(alpha_sequence) / base


def flicker_score(frames: list[np.ndarray], bands: np.ndarray) -> float:
    """Mean absolute luminance change between consecutive frames inside the
    silhouette bands."""
    band = np.asarray(bands, bool)
    if len(frames) < 2 or not band.any():
        return 0.0
    diffs = []
    for prev, cur in zip(frames, frames[1:]):
        lp = np.asarray(prev, np.float64)
        lc = np.asarray(cur, np.float64)
        if lp.ndim == 3:
            lp = lp.mean(axis=2)
            lc = lc.mean(axis=2)
        diffs.append(float(np.abs(lc - lp)[band].mean()))
    return float(np.mean(diffs))

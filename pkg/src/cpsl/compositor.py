"""Front-to-back premultiplied alpha compositing of warped layers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Layer

# Early-exit threshold; kept below the compositing tolerance so skipping the
# residual tail can never move the output by more than 1e-7.
TRANSMITTANCE_EPS = 1e-7
TAU_VIS = 0.5


class UnsortedLayersError(ValueError):
    """Layers must arrive sorted near-to-far."""


@dataclass(frozen=True)
class CompositeOutput:
    """Blended color plus accumulated opacity and front-surface depth."""

    color: np.ndarray       # HxWx3, premultiplied-space result
    coverage: np.ndarray    # HxW, 1 - prod(1 - alpha_j)
    depth_front: np.ndarray  # HxW, depth of first layer with alpha > tau_vis; inf if none

    def __post_init__(self):
        if np.any(self.coverage < -1e-6) or np.any(self.coverage > 1 + 1e-6):
            raise ValueError("coverage outside [0, 1]")
        if np.any(self.color > self.coverage[..., None] + 1e-6):
            raise ValueError("color exceeds coverage")


def composite(warped: list[Layer], tau_vis: float = TAU_VIS) -> CompositeOutput:
    """Accumulate premultiplied color front-to-back with transmittance weights.

    out = sum_k T_k * C~_k with T_k = prod_{j<k} (1 - alpha_j). Pixels whose
    transmittance has fallen below TRANSMITTANCE_EPS stop accumulating.
    """
    if not warped:
        raise ValueError("need at least one layer")
    depths = [l.depth for l in warped]
    if any(b <= a for a, b in zip(depths, depths[1:])):
        raise UnsortedLayersError("layers must be sorted near-to-far")
    h, w = warped[0].shape
    color = np.zeros((h, w, 3), np.float32)
    transmittance = np.ones((h, w), np.float32)
    depth_front = np.full((h, w), np.inf, np.float32)
    no_depth = np.ones((h, w), bool)
    for layer in warped:
        if float(transmittance.max()) < TRANSMITTANCE_EPS:
            break
        # A layer only changes pixels inside its warped support box.
        y0, y1, x0, x1 = getattr(layer, "roi", None) or (0, h, 0, w)
        if y0 >= y1 or x0 >= x1:
            continue
        tr = transmittance[y0:y1, x0:x1]
        al = layer.alpha[y0:y1, x0:x1]
        if float(tr.min()) < TRANSMITTANCE_EPS:
            t = np.where(tr >= TRANSMITTANCE_EPS, tr, 0.0)
        else:
            t = tr
        color[y0:y1, x0:x1] += layer.color_premul[y0:y1, x0:x1] * t[..., None]
        unset = no_depth[y0:y1, x0:x1] & (al > tau_vis)
        depth_front[y0:y1, x0:x1][unset] = layer.depth
        no_depth[y0:y1, x0:x1] &= ~unset
        tr *= 1.0 - al
    coverage = np.clip(1.0 - transmittance, 0.0, 1.0)
    return CompositeOutput(color=np.clip(color, 0.0, 1.0), coverage=coverage,
                           depth_front=depth_front)


def composite_over_backdrop(out: CompositeOutput, backdrop) -> np.ndarray:
    """Fill residual transmittance with a constant backdrop color."""
    bg = np.broadcast_to(np.asarray(backdrop, np.float32), (3,))
    return out.color + (1.0 - out.coverage[..., None]) * bg

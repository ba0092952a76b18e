"""Synthetic scenes with analytic ground truth, plus brute-force oracles.

Scenes are stacks of fronto-parallel textured rectangles defined in a reference
camera frame. Textures are smooth deterministic functions of plane coordinates
(seeded sinusoid noise + stripes), so renders from any viewpoint are exact and
platform-stable with no binary fixtures.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import Camera, DepthMap, Layer, SemanticMaps
from .energy import EnergyParams, evaluate_energy, grid_edges, edge_weights, \
    huber, saliency_weight


@dataclass(frozen=True)
class ScenePlane:
    """Fronto-parallel textured rectangle at a fixed reference-frame depth."""

    depth: float
    x_range: tuple  # (x0, x1) in reference-camera meters at that depth
    y_range: tuple
    instance_id: int
    saliency: float = 0.0
    seed: int = 0

    def texture(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Smooth deterministic color at reference plane coordinates, (..., 3)."""
        rng = np.random.default_rng(self.seed)
        base = 0.25 + 0.5 * rng.random(3)
        freqs = 1.0 + 3.0 * rng.random((3, 2))
        phases = 2 * np.pi * rng.random(3)
        out = np.empty(x.shape + (3,), np.float64)
        for c in range(3):
            wave = np.sin(2 * np.pi * (freqs[c, 0] * x + freqs[c, 1] * y) + phases[c])
            stripe = np.sin(2 * np.pi * 2.5 * (x + 0.3 * c))
            out[..., c] = base[c] + 0.2 * wave + 0.1 * stripe
        return np.clip(out, 0.0, 1.0)

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return ((x >= self.x_range[0]) & (x <= self.x_range[1])
                & (y >= self.y_range[0]) & (y <= self.y_range[1]))


@dataclass(frozen=True)
class SyntheticScene:
    planes: tuple
    reference_camera: Camera

    def __post_init__(self):
        planes = tuple(sorted(self.planes, key=lambda p: p.depth))
        depths = [p.depth for p in planes]
        if len(set(depths)) != len(depths):
            raise ValueError("plane depths must be distinct")
        object.__setattr__(self, "planes", planes)


def reference_camera(width: int, height: int, focal: float | None = None) -> Camera:
    f = focal if focal is not None else 0.9 * width
    return Camera(fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
                  rotation=np.eye(3), translation=np.zeros(3))


def orbit_camera(ref: Camera, yaw_deg: float = 0.0, pitch_deg: float = 0.0,
                 baseline: float = 0.0, pivot_depth: float = 2.0) -> Camera:
    """Camera orbiting the point at pivot_depth on the reference optical axis."""
    yaw, pitch = np.deg2rad(yaw_deg), np.deg2rad(pitch_deg)
    ry = np.array([[np.cos(yaw), 0, np.sin(yaw)], [0, 1, 0],
                   [-np.sin(yaw), 0, np.cos(yaw)]])
    rx = np.array([[1, 0, 0], [0, np.cos(pitch), -np.sin(pitch)],
                   [0, np.sin(pitch), np.cos(pitch)]])
    r = rx @ ry
    pivot = np.array([0.0, 0.0, pivot_depth])
    center = pivot - r.T @ pivot + np.array([baseline, 0.0, 0.0])
    # world-to-camera: X_cam = R (X_world - center)
    return Camera(fx=ref.fx, fy=ref.fy, cx=ref.cx, cy=ref.cy,
                  rotation=r @ ref.rotation,
                  translation=r @ (ref.translation - center))


def render_ground_truth(scene: SyntheticScene, cam: Camera,
                        width: int, height: int):
    """Analytic pinhole render: image, exact DepthMap, exact SemanticMaps."""
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    rays = np.stack([(xs - cam.cx) / cam.fx, (ys - cam.cy) / cam.fy,
                     np.ones_like(xs)], axis=0)  # cam-frame direction, z=1
    r_cr, t_cr = cam.relative_to(scene.reference_camera)

    image = np.zeros((height, width, 3), np.float64)
    depth = np.zeros((height, width), np.float64)
    inst = np.zeros((height, width), np.int32)
    sal = np.zeros((height, width), np.float64)
    hit_any = np.zeros((height, width), bool)

    rd = np.tensordot(r_cr, rays, axes=1)  # direction in reference frame
    for plane in scene.planes:  # near-to-far: first hit wins
        denom = rd[2]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (plane.depth - t_cr[2]) / denom
        x_ref = t_cr[0] + s * rd[0]
        y_ref = t_cr[1] + s * rd[1]
        hit = (s > 0) & np.isfinite(s) & plane.contains(x_ref, y_ref) & ~hit_any
        if not hit.any():
            continue
        tex = plane.texture(x_ref, y_ref)
        image[hit] = tex[hit]
        depth[hit] = s[hit]  # cam-frame z, since ray z-component is 1
        inst[hit] = plane.instance_id
        sal[hit] = plane.saliency
        hit_any |= hit

    depth[~hit_any] = 1.0  # placeholder; masked invalid below
    dm = DepthMap(values=depth.astype(np.float32), valid=hit_any,
                  stability=np.ones_like(depth, np.float32))
    edge = _instance_edges(inst)
    sem = SemanticMaps(saliency=sal.astype(np.float32),
                       semantic_label=inst, instance_id=inst,
                       semantic_edge=edge)
    return image.astype(np.float32), dm, sem


def _instance_edges(inst: np.ndarray) -> np.ndarray:
    edge = np.zeros(inst.shape, bool)
    dh = inst[:, 1:] != inst[:, :-1]
    dv = inst[1:, :] != inst[:-1, :]
    edge[:, 1:] |= dh
    edge[:, :-1] |= dh
    edge[1:, :] |= dv
    edge[:-1, :] |= dv
    return edge.astype(np.float32)


def two_plane_scene(width: int = 96, height: int = 72,
                    z_near: float = 1.0, z_far: float = 3.0) -> SyntheticScene:
    """Foreground card over a full-frame background slab: the standard fixture."""
    ref = reference_camera(width, height)
    half_w = width / (2 * ref.fx)
    half_h = height / (2 * ref.fy)
    fg = ScenePlane(depth=z_near, x_range=(-0.45 * half_w, 0.35 * half_w),
                    y_range=(-0.55 * half_h, 0.55 * half_h),
                    instance_id=1, saliency=0.9, seed=11)
    bg = ScenePlane(depth=z_far,
                    x_range=(-4 * half_w * z_far, 4 * half_w * z_far),
                    y_range=(-4 * half_h * z_far, 4 * half_h * z_far),
                    instance_id=0, saliency=0.1, seed=7)
    return SyntheticScene(planes=(fg, bg), reference_camera=ref)


def jittered_sequence(width: int = 96, height: int = 72, n_frames: int = 8,
                      amplitude: float = 0.01, seed: int = 0):
    """Two-plane frames with the foreground card drifting by a small,
    deterministic sub-plane jitter; ground truth rendered per frame."""
    from dataclasses import replace as dc_replace

    base = two_plane_scene(width, height)
    rng = np.random.default_rng(seed)
    frames = []
    for _ in range(n_frames):
        dx, dy = amplitude * rng.uniform(-1.0, 1.0, size=2)
        fg = base.planes[0]
        fg = dc_replace(fg, x_range=(fg.x_range[0] + dx, fg.x_range[1] + dx),
                        y_range=(fg.y_range[0] + dy, fg.y_range[1] + dy))
        scene = SyntheticScene(planes=(fg, base.planes[1]),
                               reference_camera=base.reference_camera)
        frames.append(render_ground_truth(scene, base.reference_camera,
                                          width, height))
    return frames, base.reference_camera


def brute_force_composite(stack: list[Layer], pixel: tuple[int, int]) -> np.ndarray:
    """Scalar per-pixel evaluation of front-to-back blending (independent path)."""
    y, x = pixel
    out = np.zeros(3)
    transmittance = 1.0
    for layer in stack:
        out += transmittance * np.asarray(layer.color_premul[y, x], np.float64)
        transmittance *= 1.0 - float(layer.alpha[y, x])
    return out


def brute_force_energy_min(depth: DepthMap, sem: SemanticMaps, image: np.ndarray,
                           params: EnergyParams, chunk: int = 1 << 18):
    """Exhaustive minimum of the assignment energy over all K^(H*W) labelings.

    Straight-line re-implementation of every energy term, vectorized across
    labelings; independent of the move-making solver. Ties resolve to the
    first labeling in mixed-radix order. Instances above 4x4 are refused.
    """
    h, w = depth.values.shape
    n, k = h * w, params.k
    if n > 16 or k > 3:
        raise ValueError("brute force limited to <= 4x4 pixels and K <= 3")

    z = depth.values.ravel().astype(np.float64)
    valid = depth.valid.ravel()
    w_d = depth.stability.ravel().astype(np.float64) * valid
    w_s = saliency_weight(sem.saliency.ravel(), params.saliency_logistic)
    sem_lab = sem.semantic_label.ravel()
    inst = sem.instance_id.ravel()
    classes = np.unique(sem_lab)
    inst_ids = [i for i in np.unique(inst) if i != 0]
    edges = grid_edges(h, w)
    omega = edge_weights(image, sem, params)

    total = k ** n
    best_e, best_labels = np.inf, None
    radix = k ** np.arange(n)[::-1]
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        labs = (idx[:, None] // radix[None, :]) % k  # (M, N)
        m = labs.shape[0]

        # depth term: per-labeling median of assigned valid depths
        zsel = np.where(valid[None, :], z[None, :], np.nan)
        e_unary = np.zeros(m)
        reps = np.full((m, k), np.nan)
        for lbl in range(k):
            sel = np.where(labs == lbl, zsel, np.nan)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                reps[:, lbl] = np.nanmedian(sel, axis=1)
        rep_px = np.take_along_axis(reps, labs, axis=1)
        resid = np.where(np.isfinite(rep_px), z[None, :] - rep_px, 0.0)
        e_unary += (w_d[None, :] * huber(resid, params.huber_delta)).sum(axis=1)

        # semantic term: majority class per (labeling, label)
        counts = np.zeros((m, k, classes.size), np.int64)
        for ci, c in enumerate(classes):
            is_c = sem_lab == c
            for lbl in range(k):
                counts[:, lbl, ci] = ((labs == lbl) & is_c[None, :]).sum(axis=1)
        majority = classes[np.argmax(counts, axis=2)]  # (M, K)
        maj_px = np.take_along_axis(majority, labs, axis=1)
        e_unary += (w_s[None, :] * params.kappa_sem * (sem_lab[None, :] != maj_px)).sum(axis=1)

        # instance term: owning label = argmax pixel count, ties to lower label
        for i in inst_ids:
            sel = inst == i
            cnt = np.stack([((labs == lbl) & sel[None, :]).sum(axis=1)
                            for lbl in range(k)], axis=1)
            owner = np.argmax(cnt, axis=1)
            mism = (labs[:, sel] != owner[:, None]).sum(axis=1)
            e_unary += params.kappa_inst * mism

        cut = labs[:, edges[:, 0]] != labs[:, edges[:, 1]]
        e_pair = params.lambda_b * (omega[None, :] * cut).sum(axis=1)
        e = e_unary + e_pair

        j = int(np.argmin(e))
        if e[j] < best_e:
            best_e = float(e[j])
            best_labels = labs[j].reshape(h, w).astype(np.int32)
    return best_labels, best_e

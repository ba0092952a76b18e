"""End-to-end orchestration: decompose → GOP sequencing → pack, and
unpack → warp → composite → strip repair on the playback side."""

from __future__ import annotations

import os
import time

import numpy as np

from . import bundle as bundle_mod
from . import dps as dps_mod
from . import energy, geometry, io, layergen, metrics, temporal
from .compositor import CompositeOutput, composite
from .config import PipelineConfig
from .core import Camera, DepthMap, EdgeDepthCache, Layer, LayerSet, SemanticMaps


def thread_count(cfg: PipelineConfig | None = None) -> int:
    """Worker cap: explicit config beats CPSL_THREADS beats cpu count."""
    if cfg is not None and cfg.threads:
        return max(1, int(cfg.threads))
    env = os.environ.get("CPSL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _pad_layers(ls: LayerSet, k: int) -> LayerSet:
    """Extend with empty far layers so every frame carries exactly k layers."""
    if len(ls.layers) >= k:
        return ls
    h, w = ls.shape
    layers = list(ls.layers)
    depth = layers[-1].depth
    zeros = np.zeros((h, w), np.float32)
    zeros3 = np.zeros((h, w, 3), np.float32)
    for _ in range(k - len(layers)):
        depth = depth * 1.001 + 1e-3
        layers.append(Layer(color_premul=zeros3, alpha=zeros, depth=depth,
                            confidence=0.0, saliency_score=0.0))
    return LayerSet(layers=tuple(layers), frame_index=ls.frame_index,
                    source_camera=ls.source_camera, max_layers=max(k, ls.max_layers))


def decompose_frame(image: np.ndarray, depth: DepthMap, sem: SemanticMaps,
                    camera: Camera, cfg: PipelineConfig,
                    frame_index: int = 0) -> LayerSet:
    """Single-frame layer generation: energy labeling, promotion, matting."""
    ec = cfg.energy
    params = energy.EnergyParams(
        k=ec.k_layers, lambda_b=ec.lambda_b, alpha_grad=ec.alpha_grad,
        beta_sem=ec.beta_sem,
        huber_delta=energy.huber_delta_from_depth(depth, ec.huber_delta_frac),
        kappa_sem=ec.kappa_sem, kappa_inst=ec.kappa_inst,
        max_iters=ec.max_iters)
    assign = energy.solve_assignment(depth, sem, image, params)
    grouped = layergen.promote_and_merge(assign, sem, depth, image,
                                         cfg.promotion, cfg.energy.k_layers)
    ls = layergen.matte_layers(grouped, depth, sem, image, cfg.matte, camera,
                               frame_index, cfg.max_layers)
    return _pad_layers(ls, cfg.energy.k_layers)


def generate_sequence(frames, camera: Camera, cfg: PipelineConfig):
    """Decompose a frame sequence with GOP structure.

    frames: iterable of (image, depth, sem[, flow]) tuples.
    Returns (layer_sets, edcs, confs, gop_types).
    """
    layer_sets, edcs, confs, gop_types = [], [], [], []
    state = None
    prev_image = None
    for i, frame in enumerate(frames):
        image, depth, sem = frame[:3]
        flow = frame[3] if len(frame) > 3 else None
        if state is None:
            ls = decompose_frame(image, depth, sem, camera, cfg, i)
            state = temporal.GopState.fresh(ls, cfg.temporal)
            gop_types.append("I")
        else:
            if flow is not None:
                motion = temporal.MotionField(flow)
            else:
                motion = temporal.estimate_motion(
                    prev_image, image,
                    cfg.temporal.block_size, cfg.temporal.block_range)
            state, kind = temporal.propagate(state, image, depth, motion,
                                             sem.instance_id)
            if kind == "I":
                ls = decompose_frame(image, depth, sem, camera, cfg, i)
                state = temporal.GopState.fresh(ls, cfg.temporal)
            gop_types.append(kind)
        prev_image = image
        ls = state.current
        layer_sets.append(ls)
        edcs.append(layergen.build_edge_depth_cache(
            ls, cfg.bundle.dz_min, cfg.bundle.dz_max))
        confs.append(np.asarray(state.confidences, np.float32))
    return layer_sets, edcs, confs, gop_types


def _flatten(ls: LayerSet) -> np.ndarray:
    out = np.zeros(ls.shape + (3,), np.float32)
    cov = np.zeros(ls.shape, np.float32)
    for layer in ls.layers:
        t = np.clip(1.0 - cov, 0.0, 1.0)
        out += t[..., None] * layer.color_premul
        cov += t * layer.alpha
    return out


def render_view(ls: LayerSet, viewer: Camera, use_dps: bool = True,
                edc: EdgeDepthCache | None = None,
                cfg: PipelineConfig | None = None,
                timings: dict | None = None) -> CompositeOutput:
    """Warp every layer to the viewer pose, composite, then repair cracks."""
    cfg = cfg or PipelineConfig()
    h, w = ls.shape
    t0 = time.perf_counter()
    warped = []
    for layer in ls.layers:
        hom = geometry.plane_homography(ls.source_camera, viewer, layer.depth)
        warped.append(geometry.warp_layer_view(layer, hom, (h, w)))
    t1 = time.perf_counter()
    out = composite(warped, cfg.metrics.tau_vis)
    t2 = time.perf_counter()
    if use_dps:
        positions = None
        if edc is not None:
            positions = dps_mod.warp_edc_positions(
                edc, ls.source_camera, viewer,
                np.array([l.depth for l in ls.layers]))
        arrays = dps_mod._detect_arrays(warped, cfg.dps, edc, positions)
        strip = dps_mod._build_strip_arrays(*arrays, viewer, ls.source_camera,
                                            warped, cfg.dps)
        out = dps_mod.apply_strip(out, warped, strip)
    t3 = time.perf_counter()
    if timings is not None:
        timings["warp_ms"] = (t1 - t0) * 1e3
        timings["composite_ms"] = (t2 - t1) * 1e3
        timings["dps_ms"] = (t3 - t2) * 1e3
    return out


def orbit_pose(ls: LayerSet, yaw: float = 0.0, pitch: float = 0.0,
               baseline: float = 0.0) -> Camera:
    """Orbit about the median layer depth on the source optical axis."""
    from .synth import orbit_camera

    pivot = float(np.median([l.depth for l in ls.layers])) or 2.0
    return orbit_camera(ls.source_camera, yaw, pitch, baseline, pivot)


def silhouette_bands(ls: LayerSet) -> np.ndarray:
    bands = np.zeros(ls.shape, bool)
    for layer in ls.layers[:-1]:
        bands |= layergen.contour_pixels(layer.alpha)
    return bands


def sweep(layer_sets, edcs, angles, cfg: PipelineConfig | None = None,
          use_dps: bool = True, frame: int = 0):
    """Viewpoint sweep: render one frame at each yaw angle and score it
    against the straight composite of the unwarped layers."""
    cfg = cfg or PipelineConfig()
    ls = layer_sets[frame]
    edc = edcs[frame] if edcs else None
    reference = composite(list(ls.layers), cfg.metrics.tau_vis)
    bands = silhouette_bands(ls)
    rows, images = [], []
    for angle in angles:
        pose = orbit_pose(ls, yaw=float(angle))
        out = render_view(ls, pose, use_dps, edc, cfg)
        rows.append({
            "angle_deg": float(angle),
            "psnr_db": metrics.psnr(out.color, reference.color),
            "ssim": metrics.ssim(out.color, reference.color),
            "crack_rate": metrics.crack_rate(out, bands,
                                             cfg.metrics.crack_coverage_thresh,
                                             cfg.metrics.crack_band_dilation),
            "mean_coverage": float(out.coverage.mean()),
        })
        images.append(out)
    return rows, images


def bench(ls: LayerSet, edc: EdgeDepthCache | None,
          cfg: PipelineConfig | None = None, yaw: float = 5.0,
          repeats: int = 3):
    """Per-stage timings (ms) for a render at the given yaw."""
    cfg = cfg or PipelineConfig()
    pose = orbit_pose(ls, yaw=yaw)
    best = None
    for _ in range(repeats):
        t = {}
        t0 = time.perf_counter()
        render_view(ls, pose, True, edc, cfg, timings=t)
        t["total_ms"] = (time.perf_counter() - t0) * 1e3
        if best is None or t["total_ms"] < best["total_ms"]:
            best = t
    best["k"] = len(ls.layers)
    best["height"], best["width"] = ls.shape
    return best


def pack_sequence(layer_sets, edcs, confs, gop_types, codec: str,
                  budget: float | None = None,
                  cfg: PipelineConfig | None = None):
    """Optionally allocate per-layer rates under a budget, then pack."""
    cfg = cfg or PipelineConfig()
    qualities = None
    rates = None
    if codec == "lossy" and budget is not None:
        curves, weights = rd_curves(layer_sets, cfg)
        rates, picks = bundle_mod.allocate_rates(
            curves, weights, budget * len(layer_sets))
        qualities = [int(curves[k].qualities[i]) for k, i in enumerate(picks)]
    return bundle_mod.pack(layer_sets, edcs, confs, codec=codec,
                           qualities=qualities, gop_types=gop_types,
                           rates=rates), qualities


def rd_curves(layer_sets, cfg: PipelineConfig):
    """Measured per-layer rate/distortion hulls over the quality ladder."""
    codec = bundle_mod.get_codec("lossy")
    k = len(layer_sets[0].layers)
    weights = bundle_mod.layer_weights(layer_sets[0])
    curves = []
    for lk in range(k):
        rates, dists = [], []
        for q in cfg.bundle.quality_levels:
            size = 0
            errs = []
            for ls in layer_sets:
                layer = ls.layers[lk]
                rgba = np.dstack([layer.color_premul, layer.alpha])
                blob = codec.encode(rgba, q)
                size += len(blob)
                dec = codec.decode(blob)
                errs.append(float(np.mean((dec - rgba) ** 2)))
            rates.append(size / len(layer_sets))
            dists.append(float(np.mean(errs)) + 1e-12 * (8 - q))
        curves.append(bundle_mod.RdCurve.from_samples(
            rates, dists, list(cfg.bundle.quality_levels)))
    return curves, weights


def generate_from_dir(seq_dir: str, cfg: PipelineConfig):
    manifest = io.load_manifest(seq_dir)
    camera = io.camera_from_manifest(manifest)
    frames = []
    for i in range(len(manifest["frames"])):
        fi = io.load_frame(seq_dir, manifest, i)
        frames.append((fi.image, fi.depth, fi.sem, fi.flow))
    return generate_sequence(frames, camera, cfg)

"""Regenerate the viewer test fixtures from the Python packer.

Writes tiny.cpsl (3-frame, K=3 lossless bundle) and expected.json holding
manifest fields, probe pixel values, and camera-math expectations the
TypeScript tests compare against. Run from this directory:

    python generate.py
"""

import json

import numpy as np

from cpsl import bundle as bundle_mod
from cpsl import geometry
from cpsl.core import EdcSample, EdgeDepthCache, Layer, LayerSet
from cpsl.synth import orbit_camera, reference_camera


def make_layer(h, w, depth, seed):
    rng = np.random.default_rng(seed)
    alpha = np.zeros((h, w), np.float32)
    y0, x0 = rng.integers(0, h // 2), rng.integers(0, w // 2)
    alpha[y0:y0 + h // 2, x0:x0 + w // 2] = rng.uniform(0.3, 1.0)
    color = rng.uniform(0, 1, (h, w, 3)).astype(np.float32)
    return Layer(color_premul=(alpha[..., None] * color).astype(np.float32),
                 alpha=alpha, depth=depth, saliency_score=float(rng.uniform()))


def main():
    h, w, k, n = 24, 32, 3, 3
    cam = reference_camera(w, h)
    layer_sets, edcs, confs = [], [], []
    for f in range(n):
        layers = tuple(make_layer(h, w, 1.0 + 0.7 * lk, 10 * f + lk)
                       for lk in range(k))
        layer_sets.append(LayerSet(layers=layers, frame_index=f,
                                   source_camera=cam))
        samples = tuple(EdcSample(x=5 + f, y=7, front_layer=lk,
                                  back_layer=lk + 1, dz_quant=40 * (lk + 1))
                        for lk in range(k - 1))
        edcs.append(EdgeDepthCache(samples=samples, dz_min=0.05, dz_max=2.0))
        confs.append(np.linspace(1.0, 0.5, k).astype(np.float32))

    blob = bundle_mod.pack(layer_sets, edcs, confs, codec="lossless",
                           gop_types=["I", "P", "P"])
    with open("tiny.cpsl", "wb") as fh:
        fh.write(blob)

    # Probe pixels: exact float32 values the parser must reproduce.
    probes = []
    rng = np.random.default_rng(99)
    for _ in range(12):
        f = int(rng.integers(0, n))
        lk = int(rng.integers(0, k))
        y = int(rng.integers(0, h))
        x = int(rng.integers(0, w))
        layer = layer_sets[f].layers[lk]
        probes.append({
            "frame": f, "layer": lk, "y": y, "x": x,
            "rgba": [float(v) for v in layer.color_premul[y, x]]
                    + [float(layer.alpha[y, x])],
        })

    # Camera-math expectations: homographies and an orbit pose from the
    # reference implementation, for cross-language parity.
    cams = []
    for yaw, pitch, baseline, z in [(5, 0, 0, 1.0), (-12, 4, 0.1, 2.4),
                                    (0, -9, -0.2, 1.7), (17, 6, 0.05, 3.1)]:
        viewer = orbit_camera(cam, yaw, pitch, baseline, 2.0)
        hom = geometry.plane_homography(cam, viewer, z)
        px = np.array([[3.2, 4.7], [20.0, 11.5], [31.0, 0.5]])
        target, _ = geometry.reproject_point(
            cam, viewer, px, np.full(len(px), z))
        cams.append({
            "yaw": yaw, "pitch": pitch, "baseline": baseline, "depth": z,
            "h": [float(v) for v in hom.H.ravel()],
            "viewer_rotation": [float(v) for v in viewer.rotation.ravel()],
            "viewer_translation": [float(v) for v in viewer.translation],
            "pixels": px.tolist(),
            "reprojected": target.tolist(),
        })

    expected = {
        "width": w, "height": h, "k": k, "frame_count": n,
        "codec": "lossless",
        "camera": {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy},
        "gop_types": ["I", "P", "P"],
        "layer_depths": [[float(l.depth) for l in ls.layers]
                         for ls in layer_sets],
        "conf": [[float(v) for v in c] for c in confs],
        "edc": [[{"x": s.x, "y": s.y, "front": s.front_layer,
                  "back": s.back_layer, "dz": s.dz_quant}
                 for s in e.samples] for e in edcs],
        "probes": probes,
        "cameras": cams,
    }
    with open("expected.json", "w") as fh:
        json.dump(expected, fh, indent=1)
    print(f"wrote tiny.cpsl ({len(blob)} bytes) and expected.json")


if __name__ == "__main__":
    main()

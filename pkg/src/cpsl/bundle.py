"""Streamable container for layer sequences plus rate allocation.

Layout: magic "CPSL" + u32 version, then length-prefixed chunks MANI (canonical
JSON manifest), LAYR x K (per-layer frame streams), EDCS (boundary samples,
6 bytes each) and CONF (per-frame layer confidences). Little-endian throughout.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .core import (Camera, EdcSample, EdgeDepthCache, Layer, LayerSet)

MAGIC = b"CPSL"
SCHEMA_VERSION = 1


class CorruptContainerError(ValueError):
    pass


class VersionMismatchError(ValueError):
    pass


class TruncatedStreamError(ValueError):
    pass


class CodecUnsupportedError(ValueError):
    pass


class InfeasibleBudgetError(ValueError):
    pass


# ---------------------------------------------------------------- codecs

class LosslessCodec:
    """Deflate over raw float32 planar RGBA; exact round trip."""

    name = "lossless"

    def encode(self, rgba: np.ndarray, quality: int = 0) -> bytes:
        a = np.ascontiguousarray(rgba, np.float32)
        header = struct.pack("<HH", a.shape[0], a.shape[1])
        return header + zlib.compress(a.transpose(2, 0, 1).tobytes(), 6)

    def decode(self, blob: bytes) -> np.ndarray:
        if len(blob) < 4:
            raise TruncatedStreamError("layer frame blob too short")
        h, w = struct.unpack("<HH", blob[:4])
        try:
            raw = zlib.decompress(blob[4:])
        except zlib.error as e:
            raise CorruptContainerError(f"layer frame corrupt: {e}") from e
        planar = np.frombuffer(raw, np.float32)
        if planar.size != 4 * h * w:
            raise TruncatedStreamError("layer frame payload truncated")
        return planar.reshape(4, h, w).transpose(1, 2, 0).copy()


class QuantizingCodec:
    """Lossy: per-channel quantization (finer with quality) with half-res
    chroma at low qualities, then deflate."""

    name = "lossy"

    def encode(self, rgba: np.ndarray, quality: int = 4) -> bytes:
        import cv2

        q = int(np.clip(quality, 1, 8))
        h, w = rgba.shape[:2]
        levels = 2 ** (q + 1) - 1
        subsample = q <= 4
        y = rgba[..., :3].mean(axis=2)
        cb = rgba[..., 2] - y
        cr = rgba[..., 0] - y
        alpha = rgba[..., 3]
        if subsample:
            cb = cv2.resize(cb, (max(w // 2, 1), max(h // 2, 1)))
            cr = cv2.resize(cr, (max(w // 2, 1), max(h // 2, 1)))
        green = 3 * y - rgba[..., 0] - rgba[..., 2]  # reconstructible channel

        def q8(x, lo=-1.0, hi=1.0):
            t = np.clip((x - lo) / (hi - lo), 0.0, 1.0)
            return np.rint(t * levels).astype(np.uint16)

        payload = b"".join(arr.tobytes() for arr in
                           (q8(y, 0, 1), q8(alpha, 0, 1), q8(cb), q8(cr)))
        header = struct.pack("<HHBB", h, w, q, 1 if subsample else 0)
        return header + zlib.compress(payload, 6)

    def decode(self, blob: bytes) -> np.ndarray:
        import cv2

        if len(blob) < 6:
            raise TruncatedStreamError("layer frame blob too short")
        h, w, q, subsample = struct.unpack("<HHBB", blob[:6])
        levels = 2 ** (q + 1) - 1
        try:
            raw = zlib.decompress(blob[6:])
        except zlib.error as e:
            raise CorruptContainerError(f"layer frame corrupt: {e}") from e
        ch, cw = (max(h // 2, 1), max(w // 2, 1)) if subsample else (h, w)
        sizes = [h * w, h * w, ch * cw, ch * cw]
        if len(raw) != 2 * sum(sizes):
            raise TruncatedStreamError("layer frame payload truncated")
        parts, off = [], 0
        for n in sizes:
            parts.append(np.frombuffer(raw, np.uint16, count=n, offset=2 * off))
            off += n

        def dq(codes, shape, lo=-1.0, hi=1.0):
            return (codes.astype(np.float32) / levels) * (hi - lo) + lo

        y = dq(parts[0], None, 0, 1).reshape(h, w)
        alpha = dq(parts[1], None, 0, 1).reshape(h, w)
        cb = dq(parts[2], None).reshape(ch, cw)
        cr = dq(parts[3], None).reshape(ch, cw)
        if subsample:
            cb = cv2.resize(cb, (w, h))
            cr = cv2.resize(cr, (w, h))
        r = y + cr
        b = y + cb
        g = 3 * y - r - b
        rgba = np.stack([r, g, b, np.clip(alpha, 0, 1)], axis=-1)
        rgba[..., :3] = np.clip(rgba[..., :3], 0.0, 1.0)
        rgba[..., :3] = np.minimum(rgba[..., :3], rgba[..., 3:4])
        return rgba.astype(np.float32)


CODECS = {c.name: c for c in (LosslessCodec(), QuantizingCodec())}


def get_codec(name: str):
    try:
        return CODECS[name]
    except KeyError:
        raise CodecUnsupportedError(f"unknown codec: {name}") from None


# ---------------------------------------------------------- rate allocation

@dataclass(frozen=True)
class RdCurve:
    """Convex-hull pruned (rate, distortion) samples for one layer."""

    rates: np.ndarray       # strictly increasing
    distortions: np.ndarray  # strictly decreasing
    qualities: tuple = ()   # codec quality id per kept point, if known

    def __post_init__(self):
        r = np.asarray(self.rates, np.float64)
        d = np.asarray(self.distortions, np.float64)
        if r.ndim != 1 or r.shape != d.shape or r.size == 0:
            raise ValueError("need matching non-empty rate/distortion arrays")
        if np.any(np.diff(r) <= 0) or np.any(np.diff(d) >= 0):
            raise ValueError("hull must have increasing rates, decreasing distortion")
        object.__setattr__(self, "rates", r)
        object.__setattr__(self, "distortions", d)

    @classmethod
    def from_samples(cls, rates, distortions, qualities=None) -> "RdCurve":
        pts = sorted(zip(rates, distortions,
                         qualities if qualities is not None else [None] * len(rates)))
        # Drop points that spend more without lowering distortion.
        hull = []
        for r, d, q in pts:
            if hull and d >= hull[-1][1] - 1e-15:
                continue
            hull.append((r, d, q))
        # Lower convex hull: slopes must flatten (toward zero) as rate grows.
        pruned = []
        for p in hull:
            while len(pruned) >= 2:
                (r1, d1, _), (r2, d2, _) = pruned[-2], pruned[-1]
                s1 = (d2 - d1) / (r2 - r1)
                s2 = (p[1] - d2) / (p[0] - r2)
                if s2 > s1 + 1e-15:
                    break
                pruned.pop()
            pruned.append(p)
        return cls(rates=[p[0] for p in pruned],
                   distortions=[p[1] for p in pruned],
                   qualities=tuple(p[2] for p in pruned))


def _select(curves, weights, lam):
    """Per-layer hull point minimizing w*D + lam*r; ties toward lower rate."""
    picks = []
    for curve, wk in zip(curves, weights):
        score = wk * curve.distortions + lam * curve.rates
        picks.append(int(np.argmin(score)))  # argmin tie -> first = lower rate
    return picks


def allocate_rates(curves: list[RdCurve], weights, budget: float) -> np.ndarray:
    """Discrete Lagrangian allocation on convex hulls under a total budget.

    Bisects the multiplier until feasible, then greedily spends remaining
    budget on the steepest available upgrades. Invariant to uniform scaling
    of the weights; never exceeds the budget.
    """
    w = np.asarray(weights, np.float64)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    if w.sum() <= 0:
        w = np.ones_like(w)
    w = w / w.sum()
    min_spend = sum(float(c.rates[0]) for c in curves)
    if min_spend > budget + 1e-9:
        raise InfeasibleBudgetError(
            f"budget {budget} below minimum spend {min_spend}")

    def spend(picks):
        return sum(float(c.rates[i]) for c, i in zip(curves, picks))

    lo, hi = 0.0, 1.0
    while spend(_select(curves, w, hi)) > budget and hi < 1e12:
        hi *= 4.0
    picks = _select(curves, w, hi)
    if spend(picks) <= budget:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            trial = _select(curves, w, mid)
            if spend(trial) <= budget:
                hi = mid
                picks = trial
            else:
                lo = mid

    # Spend leftover budget on the best remaining hull steps.
    picks = list(picks)
    improved = True
    while improved:
        improved = False
        best_j, best_slope = -1, 0.0
        for j, (curve, i) in enumerate(zip(curves, picks)):
            if i + 1 >= curve.rates.size:
                continue
            dr = curve.rates[i + 1] - curve.rates[i]
            if spend(picks) + dr > budget + 1e-9:
                continue
            slope = w[j] * (curve.distortions[i] - curve.distortions[i + 1]) / dr
            if slope > best_slope + 1e-15:
                best_j, best_slope = j, slope
        if best_j >= 0:
            picks[best_j] += 1
            improved = True
    return np.array([c.rates[i] for c, i in zip(curves, picks)]), picks


def layer_weights(ls: LayerSet, mu: float = 1.0) -> np.ndarray:
    """Perceptual coding weights: saliency plus boundary sharpness, normalized."""
    from .layergen import contour_pixels

    out = []
    for layer in ls.layers:
        area = float((layer.alpha >= 0.5).sum())
        contour = float(contour_pixels(layer.alpha).sum())
        density = contour / area if area > 0 else 0.0
        out.append(layer.saliency_score + mu * density)
    w = np.asarray(out, np.float64)
    if w.sum() <= 0:
        return np.full(len(out), 1.0 / len(out))
    return w / w.sum()


# ----------------------------------------------------------------- container

def _chunk(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack("<Q", len(payload)) + payload


def _canonical_manifest(manifest: dict) -> bytes:
    return json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()


def _camera_dict(cam: Camera) -> dict:
    return {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
            "rotation": [float(v) for v in cam.rotation.ravel()],
            "translation": [float(v) for v in cam.translation]}


def _camera_from_dict(d: dict) -> Camera:
    return Camera(fx=d["fx"], fy=d["fy"], cx=d["cx"], cy=d["cy"],
                  rotation=np.array(d["rotation"]).reshape(3, 3),
                  translation=np.array(d["translation"]))


def pack(layer_sets: list[LayerSet], edc_per_frame: list[EdgeDepthCache],
         conf_per_frame: list[np.ndarray], codec: str = "lossless",
         qualities: list[int] | None = None, gop_types: list[str] | None = None,
         rates=None) -> bytes:
    """Serialize a layer-set sequence with EDC and confidence sidecars."""
    if not layer_sets:
        raise ValueError("nothing to pack")
    k = len(layer_sets[0].layers)
    if any(len(ls.layers) != k for ls in layer_sets):
        raise ValueError("layer count must be constant across packed frames")
    h, w = layer_sets[0].shape
    enc = get_codec(codec)
    qualities = list(qualities) if qualities is not None else [4] * k
    gop_types = list(gop_types) if gop_types is not None else \
        ["I"] + ["P"] * (len(layer_sets) - 1)

    edc0 = edc_per_frame[0]
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "width": w, "height": h, "k": k,
        "frame_count": len(layer_sets),
        "camera": _camera_dict(layer_sets[0].source_camera),
        "codec": codec,
        "qualities": qualities,
        "rates": [float(r) for r in rates] if rates is not None else None,
        "dz_min": edc0.dz_min, "dz_max": edc0.dz_max,
        "gop_table": [{"frame": i, "type": t} for i, t in enumerate(gop_types)],
        "frames": [
            {
                "frame_index": ls.frame_index,
                "layer_depths": [float(l.depth) for l in ls.layers],
                "saliency": [float(l.saliency_score) for l in ls.layers],
                "instance_ids": [sorted(l.instance_ids) for l in ls.layers],
            }
            for ls in layer_sets
        ],
    }

    streams = []
    for lk in range(k):
        frames = []
        for ls in layer_sets:
            layer = ls.layers[lk]
            rgba = np.dstack([layer.color_premul, layer.alpha])
            blob = enc.encode(rgba, qualities[lk])
            frames.append(struct.pack("<Q", len(blob)) + blob)
        streams.append(b"".join(frames))

    edcs = []
    for edc in edc_per_frame:
        body = bytearray(struct.pack("<I", len(edc.samples)))
        for s in edc.samples:
            fb = ((s.front_layer & 0xF) << 4) | (s.back_layer & 0xF)
            body += struct.pack("<HHBB", s.x, s.y, fb, s.dz_quant)
        edcs.append(bytes(body))

    confs = []
    for conf in conf_per_frame:
        confs.append(np.asarray(conf, np.float32).tobytes())

    out = bytearray(MAGIC + struct.pack("<I", SCHEMA_VERSION))
    out += _chunk(b"MANI", _canonical_manifest(manifest))
    for s in streams:
        out += _chunk(b"LAYR", s)
    out += _chunk(b"EDCS", b"".join(edcs))
    out += _chunk(b"CONF", b"".join(confs))
    return bytes(out)


def _read_chunks(data: bytes):
    pos = 0
    while pos < len(data):
        if pos + 12 > len(data):
            raise TruncatedStreamError("chunk header truncated")
        tag = data[pos:pos + 4]
        (length,) = struct.unpack("<Q", data[pos + 4:pos + 12])
        pos += 12
        if pos + length > len(data):
            raise TruncatedStreamError(f"chunk {tag!r} truncated")
        yield tag, data[pos:pos + length]
        pos += length


def unpack(data: bytes):
    """Inverse of pack. Returns (layer_sets, edc_per_frame, conf_per_frame,
    manifest dict)."""
    if len(data) < 8 or data[:4] != MAGIC:
        raise CorruptContainerError("bad magic bytes")
    (version,) = struct.unpack("<I", data[4:8])
    if version != SCHEMA_VERSION:
        raise VersionMismatchError(f"schema version {version} unsupported")
    manifest = None
    layr_chunks = []
    edcs_raw = conf_raw = None
    for tag, payload in _read_chunks(data[8:]):
        if tag == b"MANI":
            try:
                manifest = json.loads(payload.decode())
            except (UnicodeDecodeError, json.JSONDecodeError) as e:
                raise CorruptContainerError(f"manifest unreadable: {e}") from e
        elif tag == b"LAYR":
            layr_chunks.append(payload)
        elif tag == b"EDCS":
            edcs_raw = payload
        elif tag == b"CONF":
            conf_raw = payload
    if manifest is None:
        raise CorruptContainerError("missing manifest chunk")
    k = manifest["k"]
    n_frames = manifest["frame_count"]
    if len(layr_chunks) != k:
        raise CorruptContainerError(
            f"manifest promises {k} layer streams, found {len(layr_chunks)}")
    dec = get_codec(manifest["codec"])
    cam = _camera_from_dict(manifest["camera"])

    per_layer_frames = []
    for stream in layr_chunks:
        frames, pos = [], 0
        for _ in range(n_frames):
            if pos + 8 > len(stream):
                raise TruncatedStreamError("layer stream truncated")
            (length,) = struct.unpack("<Q", stream[pos:pos + 8])
            pos += 8
            if pos + length > len(stream):
                raise TruncatedStreamError("layer frame truncated")
            frames.append(dec.decode(stream[pos:pos + length]))
            pos += length
        per_layer_frames.append(frames)

    layer_sets = []
    for fi, meta in enumerate(manifest["frames"]):
        layers = []
        for lk in range(k):
            rgba = per_layer_frames[lk][fi]
            layers.append(Layer(
                color_premul=np.minimum(rgba[..., :3], rgba[..., 3:4]),
                alpha=rgba[..., 3],
                depth=meta["layer_depths"][lk],
                saliency_score=meta["saliency"][lk],
                instance_ids=frozenset(meta["instance_ids"][lk])))
        layer_sets.append(LayerSet(layers=tuple(layers),
                                   frame_index=meta["frame_index"],
                                   source_camera=cam))

    edc_per_frame = []
    if edcs_raw is not None:
        pos = 0
        for _ in range(n_frames):
            if pos + 4 > len(edcs_raw):
                raise TruncatedStreamError("EDC sidecar truncated")
            (count,) = struct.unpack("<I", edcs_raw[pos:pos + 4])
            pos += 4
            samples = []
            for _ in range(count):
                if pos + 6 > len(edcs_raw):
                    raise TruncatedStreamError("EDC sample truncated")
                x, y, fb, dz = struct.unpack("<HHBB", edcs_raw[pos:pos + 6])
                pos += 6
                samples.append(EdcSample(x=x, y=y, front_layer=fb >> 4,
                                         back_layer=fb & 0xF, dz_quant=dz))
            edc_per_frame.append(EdgeDepthCache(
                samples=tuple(samples), dz_min=manifest["dz_min"],
                dz_max=manifest["dz_max"]))

    conf_per_frame = []
    if conf_raw is not None:
        expect = 4 * k * n_frames
        if len(conf_raw) < expect:
            raise TruncatedStreamError("confidence sidecar truncated")
        arr = np.frombuffer(conf_raw[:expect], np.float32).reshape(n_frames, k)
        conf_per_frame = [arr[i].copy() for i in range(n_frames)]

    return layer_sets, edc_per_frame, conf_per_frame, manifest


def pack_to_file(path, *args, **kwargs) -> int:
    blob = pack(*args, **kwargs)
    with open(path, "wb") as f:
        f.write(blob)
    return len(blob)


def unpack_file(path):
    with open(path, "rb") as f:
        return unpack(f.read())

"""Sequence-directory ingestion and emission.

A sequence is a directory with a `sequence.json` manifest listing per-frame
files: RGB image, 16-bit depth image (scaled by depth_scale), and optional
label / instance / saliency / stability / flow maps. All images are read into
normalized float [0, 1] except integer label maps.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import cv2
import numpy as np

from .core import Camera, DepthMap, SemanticMaps

MANIFEST_NAME = "sequence.json"


class SequenceError(ValueError):
    pass


@dataclass(frozen=True)
class FrameInput:
    image: np.ndarray            # HxWx3 float32 in [0,1]
    depth: DepthMap
    sem: SemanticMaps
    flow: np.ndarray | None = None   # HxWx2 float32 or None


def _imread(path: str, flags=cv2.IMREAD_UNCHANGED) -> np.ndarray:
    img = cv2.imread(path, flags)
    if img is None:
        raise SequenceError(f"cannot read image: {path}")
    return img


def load_manifest(seq_dir: str) -> dict:
    path = os.path.join(seq_dir, MANIFEST_NAME)
    if not os.path.isfile(path):
        raise SequenceError(f"missing {MANIFEST_NAME} in {seq_dir}")
    with open(path) as f:
        try:
            manifest = json.load(f)
        except json.JSONDecodeError as e:
            raise SequenceError(f"unreadable manifest: {e}") from e
    for key in ("frames", "camera", "depth_scale"):
        if key not in manifest:
            raise SequenceError(f"manifest missing '{key}'")
    return manifest


def camera_from_manifest(manifest: dict) -> Camera:
    c = manifest["camera"]
    rotation = np.array(c.get("rotation", np.eye(3).ravel().tolist())).reshape(3, 3)
    translation = np.array(c.get("translation", [0.0, 0.0, 0.0]))
    return Camera(fx=c["fx"], fy=c["fy"], cx=c["cx"], cy=c["cy"],
                  rotation=rotation, translation=translation)


def load_frame(seq_dir: str, manifest: dict, index: int) -> FrameInput:
    entry = manifest["frames"][index]
    scale = float(manifest["depth_scale"])

    rgb = _imread(os.path.join(seq_dir, entry["image"]), cv2.IMREAD_COLOR)
    image = (rgb[..., ::-1].astype(np.float32) / 255.0)

    draw = _imread(os.path.join(seq_dir, entry["depth"]))
    if draw.ndim != 2:
        draw = draw[..., 0]
    values = draw.astype(np.float32) / scale
    valid = draw > 0

    h, w = values.shape
    stability = np.ones((h, w), np.float32)
    if "stability" in entry:
        stability = _imread(os.path.join(seq_dir, entry["stability"]))
        if stability.ndim != 2:
            stability = stability[..., 0]
        stability = stability.astype(np.float32) / np.float32(
            65535.0 if stability.dtype == np.uint16 else 255.0)
    values = np.where(valid, values, 0.0).astype(np.float32)
    depth = DepthMap(values=np.maximum(values, 1e-6), valid=valid,
                     stability=stability)

    sem_kwargs = {}
    if "labels" in entry:
        lab = _imread(os.path.join(seq_dir, entry["labels"]))
        if lab.ndim != 2:
            lab = lab[..., 0]
        sem_kwargs["semantic_label"] = lab.astype(np.int32)
    if "instances" in entry:
        inst = _imread(os.path.join(seq_dir, entry["instances"]))
        if inst.ndim != 2:
            inst = inst[..., 0]
        sem_kwargs["instance_id"] = inst.astype(np.int32)
    if "saliency" in entry:
        sal = _imread(os.path.join(seq_dir, entry["saliency"]))
        if sal.ndim != 2:
            sal = sal[..., 0]
        sem_kwargs["saliency"] = sal.astype(np.float32) / np.float32(
            65535.0 if sal.dtype == np.uint16 else 255.0)
    sem = SemanticMaps.neutral((h, w))
    if sem_kwargs:
        sem = SemanticMaps(
            saliency=sem_kwargs.get("saliency", sem.saliency),
            semantic_label=sem_kwargs.get("semantic_label", sem.semantic_label),
            instance_id=sem_kwargs.get("instance_id", sem.instance_id),
            semantic_edge=sem.semantic_edge)

    flow = None
    if "flow" in entry:
        flow = np.load(os.path.join(seq_dir, entry["flow"])).astype(np.float32)
        if flow.ndim != 3 or flow.shape[2] != 2:
            raise SequenceError("flow must be HxWx2")
    return FrameInput(image=image, depth=depth, sem=sem, flow=flow)


def write_sequence(seq_dir: str, frames, camera: Camera,
                   depth_scale: float = 1000.0) -> str:
    """Emit FrameInput-like tuples (image, depth, sem) as a sequence directory."""
    os.makedirs(seq_dir, exist_ok=True)
    entries = []
    for i, (image, depth, sem) in enumerate(frames):
        names = {
            "image": f"frame_{i:04d}_rgb.png",
            "depth": f"frame_{i:04d}_depth.png",
            "labels": f"frame_{i:04d}_labels.png",
            "instances": f"frame_{i:04d}_inst.png",
            "saliency": f"frame_{i:04d}_sal.png",
        }
        bgr = np.rint(np.clip(image[..., ::-1] * 255.0, 0, 255)).astype(np.uint8)
        cv2.imwrite(os.path.join(seq_dir, names["image"]), bgr)
        d16 = np.where(depth.valid,
                       np.rint(np.clip(depth.values * depth_scale, 1, 65535)), 0)
        cv2.imwrite(os.path.join(seq_dir, names["depth"]),
                    d16.astype(np.uint16))
        cv2.imwrite(os.path.join(seq_dir, names["labels"]),
                    np.clip(sem.semantic_label, 0, 65535).astype(np.uint16))
        cv2.imwrite(os.path.join(seq_dir, names["instances"]),
                    np.clip(sem.instance_id, 0, 65535).astype(np.uint16))
        cv2.imwrite(os.path.join(seq_dir, names["saliency"]),
                    np.rint(np.clip(sem.saliency * 255.0, 0, 255)).astype(np.uint8))
        entries.append(names)
    manifest = {
        "depth_scale": depth_scale,
        "camera": {"fx": camera.fx, "fy": camera.fy,
                   "cx": camera.cx, "cy": camera.cy,
                   "rotation": [float(v) for v in camera.rotation.ravel()],
                   "translation": [float(v) for v in camera.translation]},
        "frames": entries,
    }
    path = os.path.join(seq_dir, MANIFEST_NAME)
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return path


def write_image(path: str, image: np.ndarray):
    """Normalized [0,1] RGB or gray image to an 8-bit file."""
    img = np.rint(np.clip(np.asarray(image, np.float64) * 255.0, 0, 255)).astype(np.uint8)
    if img.ndim == 3:
        img = img[..., ::-1]
    if not cv2.imwrite(path, img):
        raise SequenceError(f"cannot write image: {path}")

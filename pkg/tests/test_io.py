import json
import os

import numpy as np
import pytest

from cpsl.io import (SequenceError, camera_from_manifest, load_frame,
                     load_manifest, write_image, write_sequence)
from cpsl.synth import jittered_sequence


@pytest.fixture(scope="module")
def seq_dir(tmp_path_factory):
    frames, cam = jittered_sequence(width=48, height=36, n_frames=2, seed=0)
    d = tmp_path_factory.mktemp("seq")
    write_sequence(str(d), frames, cam)
    return str(d), frames, cam


class TestManifest:
    def test_roundtrip_camera(self, seq_dir):
        d, frames, cam = seq_dir
        manifest = load_manifest(d)
        loaded = camera_from_manifest(manifest)
        assert np.allclose(loaded.K, cam.K)
        assert np.allclose(loaded.rotation, cam.rotation)
        assert np.allclose(loaded.translation, cam.translation)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(SequenceError):
            load_manifest(str(tmp_path))

    def test_malformed_json(self, tmp_path):
        (tmp_path / "sequence.json").write_text("{not json")
        with pytest.raises(SequenceError):
            load_manifest(str(tmp_path))

    def test_missing_required_key(self, tmp_path):
        (tmp_path / "sequence.json").write_text(json.dumps({"frames": []}))
        with pytest.raises(SequenceError):
            load_manifest(str(tmp_path))

    def test_default_pose_identity(self):
        manifest = {"camera": {"fx": 50.0, "fy": 50.0, "cx": 10.0, "cy": 8.0}}
        cam = camera_from_manifest(manifest)
        assert np.allclose(cam.rotation, np.eye(3))
        assert np.allclose(cam.translation, 0)


class TestLoadFrame:
    def test_image_depth_roundtrip(self, seq_dir):
        d, frames, cam = seq_dir
        manifest = load_manifest(d)
        fi = load_frame(d, manifest, 0)
        image, depth, sem = frames[0]
        assert fi.image.shape == image.shape
        assert fi.image.dtype == np.float32
        # 8-bit quantization bounds the image error
        assert np.abs(fi.image - image).max() <= 0.5 / 255 + 1e-6
        # 16-bit depth at depth_scale=1000 -> 1mm quantization
        assert np.array_equal(fi.depth.valid, depth.valid)
        err = np.abs(fi.depth.values - depth.values)[depth.valid]
        assert err.max() <= 0.5 / 1000 + 1e-6

    def test_semantics_roundtrip(self, seq_dir):
        d, frames, cam = seq_dir
        manifest = load_manifest(d)
        fi = load_frame(d, manifest, 1)
        _, _, sem = frames[1]
        assert np.array_equal(fi.sem.instance_id, sem.instance_id)
        assert np.array_equal(fi.sem.semantic_label, sem.semantic_label)
        assert np.abs(fi.sem.saliency - sem.saliency).max() <= 0.5 / 255 + 1e-6

    def test_flow_sidecar(self, seq_dir):
        d, frames, cam = seq_dir
        manifest = load_manifest(d)
        flow = np.random.default_rng(0).normal(0, 1, (36, 48, 2)) \
            .astype(np.float32)
        np.save(os.path.join(d, "flow_0001.npy"), flow)
        manifest["frames"][1]["flow"] = "flow_0001.npy"
        fi = load_frame(d, manifest, 1)
        assert np.array_equal(fi.flow, flow)

    def test_bad_flow_shape(self, seq_dir):
        d, frames, cam = seq_dir
        manifest = load_manifest(d)
        np.save(os.path.join(d, "bad_flow.npy"), np.zeros((4, 4), np.float32))
        manifest["frames"][0]["flow"] = "bad_flow.npy"
        with pytest.raises(SequenceError):
            load_frame(d, manifest, 0)

    def test_missing_image_file(self, seq_dir):
        d, frames, cam = seq_dir
        manifest = load_manifest(d)
        manifest["frames"][0]["image"] = "nope.png"
        with pytest.raises(SequenceError):
            load_frame(d, manifest, 0)

    def test_zero_depth_is_invalid(self, tmp_path):
        frames, cam = jittered_sequence(width=16, height=12, n_frames=1)
        image, depth, sem = frames[0]
        bad = depth.values.copy()
        from cpsl.core import DepthMap
        holey = DepthMap(values=bad,
                         valid=np.zeros_like(depth.valid), stability=depth.stability)
        write_sequence(str(tmp_path), [(image, holey, sem)], cam)
        fi = load_frame(str(tmp_path), load_manifest(str(tmp_path)), 0)
        assert not fi.depth.valid.any()


class TestWriteImage:
    def test_rgb_roundtrip(self, tmp_path):
        import cv2

        rng = np.random.default_rng(1)
        img = rng.random((8, 8, 3)).astype(np.float32)
        path = str(tmp_path / "out.png")
        write_image(path, img)
        back = cv2.imread(path)[..., ::-1].astype(np.float32) / 255.0
        assert np.abs(back - img).max() <= 0.5 / 255 + 1e-6

    def test_gray(self, tmp_path):
        path = str(tmp_path / "g.png")
        write_image(path, np.full((4, 4), 0.5))
        assert os.path.isfile(path)

    def test_bad_path(self):
        with pytest.raises(SequenceError):
            write_image("/nonexistent/dir/x.png", np.zeros((4, 4)))

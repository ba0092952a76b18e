import numpy as np
import pytest

from cpsl import layergen, pipeline, synth
from cpsl.config import EnergyConfig, PipelineConfig

WIDTH, HEIGHT = 96, 72

# One "[PASS]/[FAIL] criterion: detail" line per acceptance test, echoed in
# the terminal summary so they survive output capture.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def two_plane():
    """Scene, reference camera, and exact ground truth at 0 degrees."""
    scene = synth.two_plane_scene(WIDTH, HEIGHT)
    cam = scene.reference_camera
    image, depth, sem = synth.render_ground_truth(scene, cam, WIDTH, HEIGHT)
    return scene, cam, image, depth, sem


@pytest.fixture(scope="session")
def pipeline_cfg():
    return PipelineConfig(energy=EnergyConfig(k_layers=2))


@pytest.fixture(scope="session")
def decomposition(two_plane, pipeline_cfg):
    """Layer set + EDC decomposed from the two-plane fixture at 0 degrees."""
    scene, cam, image, depth, sem = two_plane
    ls = pipeline.decompose_frame(image, depth, sem, cam, pipeline_cfg)
    edc = layergen.build_edge_depth_cache(ls, pipeline_cfg.bundle.dz_min,
                                          pipeline_cfg.bundle.dz_max)
    return ls, edc


def random_layer(rng, h=8, w=8, depth=None):
    alpha = rng.random((h, w)).astype(np.float32)
    color = (rng.random((h, w, 3)).astype(np.float32) * alpha[..., None])
    from cpsl.core import Layer

    return Layer(color_premul=color, alpha=alpha,
                 depth=float(depth if depth is not None else rng.uniform(0.5, 5)))


def random_stack(rng, k, h=8, w=8):
    depths = np.sort(rng.uniform(0.5, 5.0, k))
    depths += np.arange(k) * 1e-3
    return [random_layer(rng, h, w, d) for d in depths]

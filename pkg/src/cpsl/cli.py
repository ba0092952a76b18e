"""Command-line surface: generate, pack, render, sweep, bench, metrics,
synth-scene, serve.

Exit codes: 0 success, 2 input error, 3 constraint infeasible, 4 corrupt
bundle.
"""

from __future__ import annotations

import csv
import os
import sys

import click
import numpy as np

from . import bundle as bundle_mod
from . import io as io_mod
from . import metrics as metrics_mod
from . import pipeline, synth
from .config import PipelineConfig

EXIT_INPUT = 2
EXIT_INFEASIBLE = 3
EXIT_CORRUPT = 4


def _load_config(path: str | None, seed: int | None,
                 threads: int | None) -> PipelineConfig:
    cfg = PipelineConfig.load(path) if path else PipelineConfig()
    if seed is not None:
        cfg = cfg.with_overrides(seed=seed)
    if threads is not None:
        cfg = cfg.with_overrides(threads=threads)
    return cfg


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _read_bundle(path: str):
    if not os.path.isfile(path):
        _fail(EXIT_INPUT, f"bundle not found: {path}")
    try:
        return bundle_mod.unpack_file(path)
    except (bundle_mod.CorruptContainerError, bundle_mod.VersionMismatchError,
            bundle_mod.TruncatedStreamError) as e:
        _fail(EXIT_CORRUPT, f"corrupt bundle: {e}")


def _parse_pose(ls, pose, yaw, pitch, baseline):
    from .core import Camera

    if pose is not None:
        vals = [float(v) for v in pose.replace(",", " ").split()]
        if len(vals) != 12:
            raise click.UsageError("--pose needs 12 numbers (row-major R then t)")
        src = ls.source_camera
        return Camera(fx=src.fx, fy=src.fy, cx=src.cx, cy=src.cy,
                      rotation=np.array(vals[:9]).reshape(3, 3),
                      translation=np.array(vals[9:]))
    return pipeline.orbit_pose(ls, yaw=yaw, pitch=pitch, baseline=baseline)


seed_option = click.option("--seed", type=int, default=None,
                           help="Deterministic seed.")
threads_option = click.option("--threads", type=int, default=None,
                              envvar="CPSL_THREADS",
                              help="Worker cap (env: CPSL_THREADS).")
config_option = click.option("--config", "config_path",
                             type=click.Path(exists=True), default=None,
                             help="YAML config overriding defaults.")


@click.group()
def main():
    """Layered 2.5D video: decompose, pack, and re-render frame sequences."""


@main.command()
@click.argument("input_dir", type=click.Path())
@click.option("-o", "--output", required=True, type=click.Path(),
              help="Output bundle path.")
@click.option("--codec", default="lossless",
              type=click.Choice(sorted(bundle_mod.CODECS)))
@click.option("--k", "k_layers", type=int, default=None,
              help="Layer budget override.")
@config_option
@seed_option
@threads_option
def generate(input_dir, output, codec, k_layers, config_path, seed, threads):
    """Decompose a sequence directory into a layer bundle."""
    cfg = _load_config(config_path, seed, threads)
    if k_layers is not None:
        cfg = cfg.with_overrides(energy={"k_layers": k_layers})
    if not os.path.isdir(input_dir):
        _fail(EXIT_INPUT, f"input directory not found: {input_dir}")
    try:
        layer_sets, edcs, confs, gops = pipeline.generate_from_dir(input_dir, cfg)
    except (io_mod.SequenceError, FileNotFoundError) as e:
        _fail(EXIT_INPUT, str(e))
    blob, _ = pipeline.pack_sequence(layer_sets, edcs, confs, gops, codec,
                                     cfg=cfg)
    with open(output, "wb") as f:
        f.write(blob)
    click.echo(f"wrote {output}: {len(layer_sets)} frames, "
               f"{len(layer_sets[0].layers)} layers, {len(blob)} bytes")


@main.command()
@click.argument("input_bundle", type=click.Path())
@click.option("-o", "--output", required=True, type=click.Path())
@click.option("--codec", default="lossy",
              type=click.Choice(sorted(bundle_mod.CODECS)))
@click.option("--budget", type=float, default=None,
              help="Rate budget in bytes per frame (lossy codec).")
@config_option
@seed_option
@threads_option
def pack(input_bundle, output, codec, budget, config_path, seed, threads):
    """Re-encode a bundle, optionally rate-allocated under a budget."""
    cfg = _load_config(config_path, seed, threads)
    layer_sets, edcs, confs, manifest = _read_bundle(input_bundle)
    gops = [row["type"] for row in manifest["gop_table"]]
    try:
        blob, qualities = pipeline.pack_sequence(layer_sets, edcs, confs, gops,
                                                 codec, budget, cfg)
    except bundle_mod.InfeasibleBudgetError as e:
        _fail(EXIT_INFEASIBLE, str(e))
    with open(output, "wb") as f:
        f.write(blob)
    click.echo(f"wrote {output}: {len(blob)} bytes"
               + (f", qualities {qualities}" if qualities else ""))


@main.command()
@click.argument("input_bundle", type=click.Path())
@click.option("-o", "--output", required=True, type=click.Path())
@click.option("--frame", type=int, default=0)
@click.option("--pose", default=None,
              help="Explicit pose: 12 numbers, row-major rotation then translation.")
@click.option("--yaw", type=float, default=0.0, help="Orbit yaw (degrees).")
@click.option("--pitch", type=float, default=0.0, help="Orbit pitch (degrees).")
@click.option("--baseline", type=float, default=0.0, help="Lateral offset (m).")
@click.option("--dps/--no-dps", default=True, help="Boundary strip repair.")
@config_option
@seed_option
@threads_option
def render(input_bundle, output, frame, pose, yaw, pitch, baseline, dps,
           config_path, seed, threads):
    """Render one bundle frame from a novel pose."""
    cfg = _load_config(config_path, seed, threads)
    layer_sets, edcs, confs, manifest = _read_bundle(input_bundle)
    if not 0 <= frame < len(layer_sets):
        _fail(EXIT_INPUT, f"frame {frame} out of range 0..{len(layer_sets) - 1}")
    ls = layer_sets[frame]
    viewer = _parse_pose(ls, pose, yaw, pitch, baseline)
    edc = edcs[frame] if edcs else None
    out = pipeline.render_view(ls, viewer, dps, edc, cfg)
    io_mod.write_image(output, out.color)
    click.echo(f"wrote {output}: coverage {out.coverage.mean():.4f}")


@main.command()
@click.argument("input_bundle", type=click.Path())
@click.option("-o", "--output-dir", required=True, type=click.Path())
@click.option("--angles", default="0,5,10,15,20,30",
              help="Comma-separated yaw angles in degrees.")
@click.option("--frame", type=int, default=0)
@click.option("--dps/--no-dps", default=True)
@config_option
@seed_option
@threads_option
def sweep(input_bundle, output_dir, angles, frame, dps, config_path, seed,
          threads):
    """Viewpoint sweep: render at each angle and write a metrics CSV."""
    cfg = _load_config(config_path, seed, threads)
    angle_list = [float(a) for a in angles.split(",") if a.strip()]
    if not angle_list:
        raise click.UsageError("--angles must list at least one angle")
    layer_sets, edcs, confs, manifest = _read_bundle(input_bundle)
    os.makedirs(output_dir, exist_ok=True)
    rows, images = pipeline.sweep(layer_sets, edcs, angle_list, cfg, dps, frame)
    for angle, out in zip(angle_list, images):
        io_mod.write_image(
            os.path.join(output_dir, f"sweep_{angle:+06.1f}.png"), out.color)
    csv_path = os.path.join(output_dir, "metrics.csv")
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    click.echo(f"wrote {len(rows)} rows to {csv_path}")


@main.command()
@click.argument("input_bundle", type=click.Path())
@click.option("-o", "--output", default="-", help="CSV path ('-' for stdout).")
@click.option("--frame", type=int, default=0)
@config_option
@seed_option
@threads_option
def bench(input_bundle, output, frame, config_path, seed, threads):
    """Per-stage render timings (unpack, warp, composite, strip repair)."""
    import time

    cfg = _load_config(config_path, seed, threads)
    t0 = time.perf_counter()
    layer_sets, edcs, confs, manifest = _read_bundle(input_bundle)
    unpack_ms = (time.perf_counter() - t0) * 1e3
    report = pipeline.bench(layer_sets[frame],
                            edcs[frame] if edcs else None, cfg)
    report = {"unpack_ms": unpack_ms, **report}
    lines = [",".join(report), ",".join(f"{v:.3f}" if isinstance(v, float)
                                        else str(v) for v in report.values())]
    text = "\n".join(lines) + "\n"
    if output == "-":
        click.echo(text, nl=False)
    else:
        with open(output, "w") as f:
            f.write(text)
        click.echo(f"wrote {output}")


@main.command()
@click.argument("image_a", type=click.Path())
@click.argument("image_b", type=click.Path())
def metrics(image_a, image_b):
    """PSNR/SSIM between two image files."""
    import cv2

    imgs = []
    for path in (image_a, image_b):
        img = cv2.imread(path, cv2.IMREAD_COLOR)
        if img is None:
            _fail(EXIT_INPUT, f"cannot read image: {path}")
        imgs.append(img[..., ::-1].astype(np.float64) / 255.0)
    try:
        p = metrics_mod.psnr(imgs[0], imgs[1])
        s = metrics_mod.ssim(imgs[0], imgs[1])
    except metrics_mod.DimensionMismatchError as e:
        _fail(EXIT_INPUT, str(e))
    click.echo("psnr_db,ssim")
    click.echo(f"{p:.4f},{s:.6f}")


@main.command("synth-scene")
@click.option("-o", "--output-dir", required=True, type=click.Path())
@click.option("--width", type=int, default=96)
@click.option("--height", type=int, default=72)
@click.option("--frames", "n_frames", type=int, default=8)
@click.option("--jitter", type=float, default=0.01,
              help="Foreground drift amplitude in meters.")
@seed_option
def synth_scene(output_dir, width, height, n_frames, jitter, seed):
    """Emit a synthetic two-plane sequence directory."""
    frames, cam = synth.jittered_sequence(width, height, n_frames, jitter,
                                          seed or 0)
    path = io_mod.write_sequence(output_dir, frames, cam)
    click.echo(f"wrote {n_frames} frames to {output_dir} ({path})")


@main.command()
@click.argument("bundles", nargs=-1, type=click.Path())
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@config_option
@seed_option
@threads_option
def serve(bundles, host, port, config_path, seed, threads):
    """Serve bundles (and the render API) over HTTP for the viewer."""
    import uvicorn

    from .service.app import create_app

    cfg = _load_config(config_path, seed, threads)
    for path in bundles:
        if not os.path.isfile(path):
            _fail(EXIT_INPUT, f"bundle not found: {path}")
    app = create_app(list(bundles), cfg)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()

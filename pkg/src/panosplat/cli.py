"""Command-line pipeline: synth, reconstruct, render, eval, serve."""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import dataset_io, synth
from .gaussians import GaussianConfig, decode_splats, merge, read_splt, write_splt
from .pano_image import DepthMap, depth_metrics, psnr, ssim, write_png, write_sdpt
from .renderer import PinholeCamera, rasterize, render_panorama
from .sphere_geom import ErpGrid, Pose
from .sweep import SweepConfig, estimate_depth

# CLI defaults tuned for the hand-crafted matching pipeline; the library
# dataclasses keep their own documented defaults.
DEFAULT_SIGMA = 0.4
DEFAULT_OPACITY_FLOOR = 0.8
DEFAULT_TEMPERATURE = 3e-5
DEFAULT_SUPERSAMPLE = 2


def _set_threads(threads: int | None) -> None:
    if threads is not None:
        import numba

        numba.set_num_threads(max(1, min(threads, numba.config.NUMBA_NUM_THREADS)))


def _round6(value):
    """Round floats to 6 significant digits, recursively, for stable reports."""
    if isinstance(value, float):
        return float(f"{value:.6g}")
    if isinstance(value, dict):
        return {k: _round6(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round6(v) for v in value]
    return value


@click.group()
def main():
    """Spherical-sweep reconstruction and splat rendering for panoramas."""


@main.command("synth")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Scene directory to write.")
@click.option("--preset", type=click.Choice(sorted(synth.SCENE_PRESETS)), default="grating", show_default=True)
@click.option("--n-frames", default=5, show_default=True, type=int)
@click.option("--baseline", default=0.125, show_default=True, type=float, help="Spacing between adjacent frames, meters.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--width", default=512, show_default=True, type=int, help="Panorama width (height is width/2).")
@click.option("--near", default=0.1, show_default=True, type=float)
@click.option("--far", default=10.0, show_default=True, type=float)
def cmd_synth(out_dir, preset, n_frames, baseline, seed, width, near, far):
    """Write a synthetic scene directory with GT depth."""
    grid = ErpGrid(width=width, height=width // 2)
    scene = synth.SCENE_PRESETS[preset]()
    poses = synth.make_trajectory(scene, n_frames, baseline, seed)
    frames = []
    for pose in poses:
        image, depth = synth.render_gt(scene, pose, grid)
        frames.append((image, depth, pose))
    dataset_io.save_scene(out_dir, frames, near=near, far=far)
    click.echo(f"wrote {n_frames} frames to {out_dir}")


def _reconstruct(
    manifest, i, j, depth_count, near, far, downsample, temperature, sigma,
    opacity_floor, no_biprojection=False,
):
    n = len(manifest)
    for k in (i, j):
        if not (0 <= k < n):
            raise click.ClickException(f"frame index {k} outside [0, {n})")
    images = [manifest.load_image(i), manifest.load_image(j)]
    poses = [manifest.pose(i), manifest.pose(j)]
    config = SweepConfig(
        near=near if near is not None else manifest.near,
        far=far if far is not None else manifest.far,
        depth_count=depth_count,
        downsample=downsample,
        temperature=temperature,
        use_biprojection=not no_biprojection,
    )
    results = estimate_depth(images, poses, config)
    gauss = GaussianConfig(scale_multiplier=sigma, opacity_floor=opacity_floor)
    sets = [
        decode_splats(images[k], results[k], poses[k], gauss, view_index=idx)
        for k, idx in ((0, i), (1, j))
    ]
    return images, poses, results, merge(sets)


_recon_options = [
    click.option("--depth-count", "-D", default=128, show_default=True, type=int),
    click.option("--near", default=None, type=float, help="Defaults to the scene manifest value."),
    click.option("--far", default=None, type=float, help="Defaults to the scene manifest value."),
    click.option("--downsample", default=4, show_default=True, type=int),
    click.option("--temperature", default=DEFAULT_TEMPERATURE, show_default=True, type=float),
    click.option("--sigma", default=DEFAULT_SIGMA, show_default=True, type=float, help="Splat footprint multiplier."),
    click.option("--opacity-floor", default=DEFAULT_OPACITY_FLOOR, show_default=True, type=float),
    click.option("--no-biprojection", is_flag=True, help="Disable the cubemap feature branch."),
    click.option("--threads", default=None, type=int, help="Worker threads for rasterization."),
]


def _add_options(options):
    def wrap(f):
        for option in reversed(options):
            f = option(f)
        return f

    return wrap


@main.command("reconstruct")
@click.option("--scene", "scene_dir", required=True, type=click.Path(exists=True))
@click.option("-i", "frame_i", default=0, show_default=True, type=int)
@click.option("-j", "frame_j", required=True, type=int)
@click.option("--out", "out_file", required=True, type=click.Path())
@_add_options(_recon_options)
def cmd_reconstruct(
    scene_dir, frame_i, frame_j, out_file, depth_count, near, far, downsample,
    temperature, sigma, opacity_floor, no_biprojection, threads,
):
    """Estimate depth from a context pair and write pixel-aligned splats.

    Writes the SPLT file plus per-view depth and confidence SDPT rasters
    next to it, and prints depth metrics when the scene carries GT depth.
    """
    _set_threads(threads)
    manifest = dataset_io.load_scene(scene_dir)
    images, poses, results, splats = _reconstruct(
        manifest, frame_i, frame_j, depth_count, near, far, downsample,
        temperature, sigma, opacity_floor, no_biprojection,
    )
    out = Path(out_file)
    write_splt(splats, out)
    for k, idx in ((0, frame_i), (1, frame_j)):
        write_sdpt(results[k].depth, out.with_suffix(f".depth{idx}.sdpt"))
        conf = DepthMap(grid=results[k].depth.grid, data=results[k].confidence)
        write_sdpt(conf, out.with_suffix(f".conf{idx}.sdpt"))
    click.echo(f"wrote {len(splats)} splats to {out}")
    for k, idx in ((0, frame_i), (1, frame_j)):
        gt = manifest.load_depth(idx)
        if gt is not None:
            m = _round6(depth_metrics(results[k].depth, gt))
            click.echo(f"frame {idx} depth vs GT: {json.dumps(m)}")


def _parse_c2w(text: str) -> Pose:
    values = [float(x) for x in text.replace(",", " ").split()]
    if len(values) != 16:
        raise click.ClickException("--c2w needs 16 numbers (row-major 4x4)")
    try:
        return Pose.from_matrix(np.asarray(values).reshape(4, 4))
    except ValueError as e:
        raise click.ClickException(f"invalid pose: {e}")


@main.command("render")
@click.option("--splats", "splat_file", required=True, type=click.Path(exists=True))
@click.option("--scene", "scene_dir", default=None, type=click.Path(exists=True), help="Scene whose frame pose to render at.")
@click.option("--frame", default=None, type=int, help="Frame index into --scene.")
@click.option("--c2w", default=None, type=str, help="Explicit 16-number camera-to-world pose.")
@click.option("--width", default=512, show_default=True, type=int)
@click.option("--mode", type=click.Choice(["erp", "pinhole"]), default="erp", show_default=True)
@click.option("--fov-deg", default=90.0, show_default=True, type=float, help="Pinhole-mode field of view.")
@click.option("--supersample", default=DEFAULT_SUPERSAMPLE, show_default=True, type=int)
@click.option("--background", default="0,0,0", show_default=True, help="Background rgb in [0,1].")
@click.option("--out", "out_file", required=True, type=click.Path())
@click.option("--depth-out", default=None, type=click.Path(), help="Optional SDPT depth output (erp mode).")
@click.option("--threads", default=None, type=int)
def cmd_render(
    splat_file, scene_dir, frame, c2w, width, mode, fov_deg, supersample,
    background, out_file, depth_out, threads,
):
    """Render a splat file at a pose, as a panorama or a pinhole view."""
    _set_threads(threads)
    splats = read_splt(splat_file)
    if c2w is not None:
        pose = _parse_c2w(c2w)
    elif scene_dir is not None and frame is not None:
        manifest = dataset_io.load_scene(scene_dir)
        if not (0 <= frame < len(manifest)):
            raise click.ClickException(f"frame index {frame} outside [0, {len(manifest)})")
        pose = manifest.pose(frame)
    else:
        raise click.ClickException("provide either --c2w or --scene with --frame")
    bg = tuple(float(x) for x in background.split(","))
    if len(bg) != 3:
        raise click.ClickException("--background needs r,g,b")

    if mode == "erp":
        grid = ErpGrid(width=width, height=width // 2)
        image, depth = render_panorama(splats, pose, grid, bg, supersample=supersample)
        write_png(image, out_file)
        if depth_out is not None:
            write_sdpt(depth, depth_out)
    else:
        # same screen orientation as the panorama's front (+z) face
        from .renderer import _face_pose

        cam = PinholeCamera.from_fov(fov_deg, width, width, _face_pose(pose, 0))
        res = rasterize(splats, cam, bg)
        arr = np.clip(res.color, 0.0, 1.0)
        from PIL import Image

        Image.fromarray(np.round(arr * 255).astype(np.uint8), "RGB").save(out_file)
    click.echo(f"wrote {out_file}")


@main.command("eval")
@click.option("--scene", "scene_dir", required=True, type=click.Path(exists=True))
@click.option("--interval", default=100, show_default=True, type=int)
@click.option("--n-targets", default=3, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_json", required=True, type=click.Path())
@click.option("--csv", "out_csv", default=None, type=click.Path())
@click.option("--supersample", default=DEFAULT_SUPERSAMPLE, show_default=True, type=int)
@click.option("--bypass-depth-gt", is_flag=True, help="Score GT depth against itself (harness check).")
@click.option("--bypass-color-gt", is_flag=True, help="Score GT images against themselves (harness check).")
@_add_options(_recon_options)
def cmd_eval(
    scene_dir, interval, n_targets, seed, out_json, out_csv, supersample,
    bypass_depth_gt, bypass_color_gt, depth_count, near, far, downsample,
    temperature, sigma, opacity_floor, no_biprojection, threads,
):
    """Reconstruct from context pairs and score rendered target views."""
    _set_threads(threads)
    manifest = dataset_io.load_scene(scene_dir)
    tuples = dataset_io.select_eval_tuples(manifest, interval, n_targets, seed)

    rows = []
    for t_index, tup in enumerate(tuples):
        i, j = tup.context
        splats = None
        if not (bypass_color_gt and bypass_depth_gt):
            _, _, _, splats = _reconstruct(
                manifest, i, j, depth_count, near, far, downsample,
                temperature, sigma, opacity_floor, no_biprojection,
            )
        for target in tup.targets:
            gt_image = manifest.load_image(target)
            gt_depth = manifest.load_depth(target)
            pose = manifest.pose(target)
            if bypass_color_gt and (bypass_depth_gt or gt_depth is None):
                rendered, rendered_depth = gt_image, gt_depth
            else:
                rendered, rendered_depth = render_panorama(
                    splats, pose, gt_image.grid, supersample=supersample
                )
                if bypass_color_gt:
                    rendered = gt_image
            row = {
                "tuple": t_index,
                "context_i": i,
                "context_j": j,
                "target": target,
                "psnr": psnr(rendered, gt_image),
                "ssim": ssim(rendered, gt_image),
            }
            if gt_depth is not None:
                pred = gt_depth if bypass_depth_gt else rendered_depth
                row.update(depth_metrics(pred, gt_depth))
            rows.append(row)

    depth_rows = [r for r in rows if "abs_rel" in r]
    report = {
        "tuples": len(tuples),
        "psnr": float(np.mean([r["psnr"] for r in rows])) if rows else None,
        "ssim": float(np.mean([r["ssim"] for r in rows])) if rows else None,
        "depth": (
            {
                key: float(np.mean([r[key] for r in depth_rows]))
                for key in ("abs_diff", "abs_rel", "rmse", "delta_1_25_percent")
            }
            if depth_rows
            else None
        ),
    }
    report = _round6(report)
    with open(out_json, "w") as f:
        json.dump(report, f, indent=1)
        f.write("\n")
    if out_csv is not None:
        fields = [
            "tuple", "context_i", "context_j", "target", "psnr", "ssim",
            "abs_diff", "abs_rel", "rmse", "delta_1_25_percent",
        ]
        with open(out_csv, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fields)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _round6(row.get(k, "")) for k in fields})
    click.echo(json.dumps(report))


@main.command("serve")
@click.option("--splats", "splat_file", default=None, type=click.Path(exists=True))
@click.option("--scene", "scene_dir", default=None, type=click.Path(exists=True))
@click.option("-i", "frame_i", default=0, show_default=True, type=int)
@click.option("-j", "frame_j", default=None, type=int, help="Defaults to the last frame.")
@click.option("--port", default=8080, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--static-dir", default=None, type=click.Path(exists=True), help="Viewer assets served at /.")
@click.option("--workers", default=2, show_default=True, type=int, help="Concurrent render cap.")
@click.option("--supersample", default=DEFAULT_SUPERSAMPLE, show_default=True, type=int)
@_add_options(_recon_options)
def cmd_serve(
    splat_file, scene_dir, frame_i, frame_j, port, host, static_dir, workers,
    supersample, depth_count, near, far, downsample, temperature, sigma,
    opacity_floor, no_biprojection, threads,
):
    """Serve renders of a splat file (or a reconstructed scene) over HTTP."""
    from .server import RenderService, run_server

    _set_threads(threads)
    suggested = Pose.identity()
    near_out, far_out = (near or 0.1), (far or 10.0)
    if splat_file is not None:
        splats = read_splt(splat_file)
    elif scene_dir is not None:
        manifest = dataset_io.load_scene(scene_dir)
        j = frame_j if frame_j is not None else len(manifest) - 1
        _, poses, _, splats = _reconstruct(
            manifest, frame_i, j, depth_count, near, far, downsample,
            temperature, sigma, opacity_floor, no_biprojection,
        )
        suggested = poses[0]
        near_out, far_out = manifest.near, manifest.far
    else:
        raise click.ClickException("provide --splats or --scene")

    service = RenderService(
        splats=splats, near=near_out, far=far_out, suggested_pose=suggested,
        workers=workers, supersample=supersample,
    )
    click.echo(f"serving {len(splats)} splats on http://{host}:{port}/")
    run_server(service, host=host, port=port, static_dir=static_dir)


if __name__ == "__main__":
    sys.exit(main())

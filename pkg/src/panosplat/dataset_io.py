"""Scene-directory persistence: posed panoramas with optional GT depth.

A scene directory holds `scene.json` plus the referenced PNG / SDPT files:

    {"near": 0.1, "far": 10.0,
     "frames": [{"image": "frames/0000.png",
                 "depth": "frames/0000.sdpt" | null,
                 "c2w": [16 floats, row-major camera-to-world]}]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pano_image import DepthMap, ErpImage, read_png, read_sdpt, write_png, write_sdpt
from .sphere_geom import Pose


@dataclass(frozen=True)
class FrameRecord:
    image: str
    depth: str | None
    pose: Pose


@dataclass(frozen=True)
class SceneManifest:
    root: Path
    near: float
    far: float
    frames: tuple[FrameRecord, ...]

    def __len__(self) -> int:
        return len(self.frames)

    def load_image(self, i: int) -> ErpImage:
        return read_png(self.root / self.frames[i].image)

    def load_depth(self, i: int) -> DepthMap | None:
        rel = self.frames[i].depth
        return None if rel is None else read_sdpt(self.root / rel)

    def pose(self, i: int) -> Pose:
        return self.frames[i].pose


def load_scene(directory) -> SceneManifest:
    """Parse and validate a scene directory; frames decode lazily."""
    root = Path(directory)
    manifest_path = root / "scene.json"
    if not manifest_path.is_file():
        raise FileNotFoundError(f"{root}: missing scene.json")
    with open(manifest_path) as f:
        raw = json.load(f)

    near = float(raw["near"])
    far = float(raw["far"])
    if not (0.0 < near < far):
        raise ValueError(f"{root}: need 0 < near < far, got [{near}, {far}]")
    entries = raw.get("frames", [])
    if not entries:
        raise ValueError(f"{root}: scene has no frames")

    frames = []
    for k, entry in enumerate(entries):
        c2w = np.asarray(entry["c2w"], dtype=np.float64)
        if c2w.shape != (16,):
            raise ValueError(f"{root}: frame {k} c2w must hold 16 numbers")
        try:
            pose = Pose.from_matrix(c2w.reshape(4, 4))
        except ValueError as e:
            raise ValueError(f"{root}: frame {k} has an invalid pose: {e}") from e
        image = entry["image"]
        if not (root / image).is_file():
            raise FileNotFoundError(f"{root}: frame {k} image missing: {image}")
        depth = entry.get("depth")
        if depth is not None and not (root / depth).is_file():
            raise FileNotFoundError(f"{root}: frame {k} depth missing: {depth}")
        frames.append(FrameRecord(image=image, depth=depth, pose=pose))
    return SceneManifest(root=root, near=near, far=far, frames=tuple(frames))


def save_scene(
    directory,
    frames: list[tuple[ErpImage, DepthMap | None, Pose]],
    near: float,
    far: float,
) -> SceneManifest:
    """Write images, depth rasters, and scene.json under ``directory``."""
    root = Path(directory)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    records = []
    for k, (image, depth, pose) in enumerate(frames):
        image_rel = f"frames/{k:04d}.png"
        write_png(image, root / image_rel)
        depth_rel = None
        if depth is not None:
            depth_rel = f"frames/{k:04d}.sdpt"
            write_sdpt(depth, root / depth_rel)
        records.append(
            {
                "image": image_rel,
                "depth": depth_rel,
                "c2w": [float(x) for x in pose.to_matrix().reshape(-1)],
            }
        )
    with open(root / "scene.json", "w") as f:
        json.dump({"near": near, "far": far, "frames": records}, f, indent=1)
        f.write("\n")
    return load_scene(root)


@dataclass(frozen=True)
class EvalTuple:
    context: tuple[int, int]
    targets: tuple[int, ...]


def select_eval_tuples(
    manifest: SceneManifest, interval: int = 100, n_targets: int = 3, seed: int = 0
) -> list[EvalTuple]:
    """Context pairs (i, i+interval) on disjoint windows, with ``n_targets``
    seed-deterministic distinct target indices strictly between them.

    Scenes shorter than one window yield an empty list.
    """
    if interval < 2:
        raise ValueError("interval must be >= 2")
    if n_targets < 1 or n_targets > interval - 1:
        raise ValueError("n_targets must lie in [1, interval - 1]")
    rng = np.random.default_rng(seed)
    tuples = []
    i = 0
    while i + interval < len(manifest):
        inner = np.arange(i + 1, i + interval)
        targets = np.sort(rng.choice(inner, size=n_targets, replace=False))
        tuples.append(EvalTuple(context=(i, i + interval), targets=tuple(int(t) for t in targets)))
        i += interval
    return tuples

"""Analytic test scenes: textured box rooms with exact ray-traced depth.

Exact ground truth comes from closed-form ray/box and ray/sphere
intersections along each pixel-center direction, so rendered panoramas and
radial depth maps can serve as oracles for the matching and rendering
pipeline. Textures are procedural (no file assets).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .pano_image import DepthMap, ErpImage
from .sphere_geom import ErpGrid, Pose, grid_directions

_WALL_AXES = ((0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1))
# In-plane texture axes per wall (+x, -x, +y, -y, +z, -z).
_WALL_UV = ((2, 1), (2, 1), (0, 2), (0, 2), (0, 1), (0, 1))


@dataclass(frozen=True)
class Checkerboard:
    period: float = 0.25
    color_a: tuple[float, float, float] = (0.9, 0.9, 0.9)
    color_b: tuple[float, float, float] = (0.1, 0.1, 0.1)

    def sample(self, pu: np.ndarray, pv: np.ndarray) -> np.ndarray:
        parity = (np.floor(pu / self.period) + np.floor(pv / self.period)) % 2
        a = np.asarray(self.color_a)
        b = np.asarray(self.color_b)
        return np.where(parity[..., None] == 0, a, b)


@dataclass(frozen=True)
class SineGrating:
    frequency: float = 1.0
    base: tuple[float, float, float] = (0.5, 0.5, 0.5)
    amplitude: float = 0.4

    def sample(self, pu: np.ndarray, pv: np.ndarray) -> np.ndarray:
        w = 2.0 * math.pi * self.frequency
        base = np.asarray(self.base)
        r = base[0] + self.amplitude * np.sin(w * pu)
        g = base[1] + self.amplitude * np.sin(w * pv)
        b = base[2] + self.amplitude * np.sin(w * (pu + pv) * 0.5)
        return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


@dataclass(frozen=True)
class Constant:
    color: tuple[float, float, float] = (0.5, 0.5, 0.5)

    def sample(self, pu: np.ndarray, pv: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.color), pu.shape + (3,)).copy()


@dataclass(frozen=True)
class SceneSphere:
    center: tuple[float, float, float]
    radius: float
    texture: object = field(default_factory=Checkerboard)


@dataclass(frozen=True)
class SyntheticScene:
    """Axis-aligned textured box room, optionally with inner spheres."""

    size: tuple[float, float, float] = (4.0, 3.0, 4.0)
    wall_textures: tuple = ()
    spheres: tuple[SceneSphere, ...] = ()

    def __post_init__(self):
        if any(s <= 0 for s in self.size):
            raise ValueError("room size must be positive")
        if len(self.wall_textures) == 0:
            object.__setattr__(self, "wall_textures", tuple(Checkerboard() for _ in range(6)))
        if len(self.wall_textures) != 6:
            raise ValueError("need one texture per wall (+x,-x,+y,-y,+z,-z)")

    @property
    def half(self) -> np.ndarray:
        return np.asarray(self.size) / 2.0

    def contains_camera(self, position: np.ndarray) -> bool:
        p = np.asarray(position, dtype=np.float64)
        if np.any(np.abs(p) >= self.half):
            return False
        for s in self.spheres:
            if np.linalg.norm(p - np.asarray(s.center)) <= s.radius:
                return False
        return True


def _intersect_box(origins: np.ndarray, dirs: np.ndarray, half: np.ndarray):
    """Exit distance and wall id for rays starting strictly inside the box."""
    t_best = np.full(dirs.shape[:-1], np.inf)
    wall = np.zeros(dirs.shape[:-1], dtype=np.int64)
    for wall_id, (axis, sign) in enumerate(_WALL_AXES):
        d = dirs[..., axis]
        facing = d * sign > 1e-15
        t = np.where(facing, (sign * half[axis] - origins[..., axis]) / np.where(facing, d, 1.0), np.inf)
        closer = t < t_best
        t_best = np.where(closer, t, t_best)
        wall = np.where(closer, wall_id, wall)
    return t_best, wall


def _intersect_sphere(origins: np.ndarray, dirs: np.ndarray, center: np.ndarray, radius: float):
    """Nearest positive hit distance for rays starting outside the sphere."""
    oc = center - origins
    b = np.sum(dirs * oc, axis=-1)
    disc = b * b - (np.sum(oc * oc, axis=-1) - radius * radius)
    hit = disc > 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t = b - sq
    hit = hit & (t > 1e-9)
    return np.where(hit, t, np.inf)


def render_gt(scene: SyntheticScene, pose: Pose, grid: ErpGrid) -> tuple[ErpImage, DepthMap]:
    """Ray-trace the scene from a panoramic camera with exact radial depth."""
    origin = pose.translation
    if not scene.contains_camera(origin):
        raise ValueError(f"camera at {origin} is not strictly inside the scene")

    dirs = grid_directions(grid) @ pose.rotation.T
    origins = np.broadcast_to(origin, dirs.shape)

    depth, wall = _intersect_box(origins, dirs, scene.half)
    obj = wall  # walls 0..5, spheres 6..
    for si, s in enumerate(scene.spheres):
        t = _intersect_sphere(origins, dirs, np.asarray(s.center, dtype=np.float64), s.radius)
        closer = t < depth
        depth = np.where(closer, t, depth)
        obj = np.where(closer, 6 + si, obj)

    hits = origins + depth[..., None] * dirs
    color = np.zeros(dirs.shape[:-1] + (3,))
    for wall_id in range(6):
        mask = obj == wall_id
        if not np.any(mask):
            continue
        ui, vi = _WALL_UV[wall_id]
        tex = scene.wall_textures[wall_id]
        color[mask] = tex.sample(hits[mask][:, ui], hits[mask][:, vi])
    for si, s in enumerate(scene.spheres):
        mask = obj == 6 + si
        if not np.any(mask):
            continue
        local = hits[mask] - np.asarray(s.center)
        lon = np.arctan2(local[:, 0], local[:, 2])
        lat = np.arcsin(np.clip(local[:, 1] / s.radius, -1.0, 1.0))
        color[mask] = s.texture.sample(lon * s.radius, lat * s.radius)

    return (
        ErpImage(grid=grid, data=color),
        DepthMap(grid=grid, data=depth),
    )


def make_test_pair(
    scene: SyntheticScene,
    baseline: float,
    seed: int,
    first: np.ndarray | None = None,
    max_tries: int = 100,
) -> tuple[Pose, Pose]:
    """Two identity-rotation cameras separated by ``baseline`` meters.

    The second camera sits along a seed-deterministic random direction from
    the first; directions are resampled until both cameras are valid.
    """
    rng = np.random.default_rng(seed)
    p0 = np.zeros(3) if first is None else np.asarray(first, dtype=np.float64)
    if not scene.contains_camera(p0):
        raise ValueError("first camera placement is invalid")
    for _ in range(max_tries):
        d = rng.normal(size=3)
        n = np.linalg.norm(d)
        if n < 1e-12:
            continue
        p1 = p0 + baseline * d / n
        if scene.contains_camera(p1):
            return Pose(np.eye(3), p0), Pose(np.eye(3), p1)
    raise ValueError(f"could not place a valid camera pair after {max_tries} tries")


def make_trajectory(
    scene: SyntheticScene, n_frames: int, spacing: float, seed: int
) -> list[Pose]:
    """Identity-rotation billiard path inside the room, ``spacing`` m/frame.

    The walk reflects off an inner margin box (90% of the half extents) so
    arbitrarily long trajectories stay valid; deterministic given the seed.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    rng = np.random.default_rng(seed)
    margin = scene.half * 0.9
    pos = np.zeros(3)
    d = rng.normal(size=3)
    d[1] *= 0.3  # mostly-horizontal motion, like indoor capture rigs
    d /= np.linalg.norm(d)
    poses = [Pose(np.eye(3), pos.copy())]
    for _ in range(n_frames - 1):
        for _ in range(10):
            nxt = pos + spacing * d
            bounced = False
            for axis in range(3):
                if abs(nxt[axis]) > margin[axis]:
                    d[axis] = -d[axis]
                    bounced = True
            if not bounced:
                break
        nxt = pos + spacing * d
        if not scene.contains_camera(nxt):
            raise ValueError("trajectory stepped into an invalid placement; try another seed")
        pos = nxt
        poses.append(Pose(np.eye(3), pos.copy()))
    return poses


def checker_room(size=(4.0, 3.0, 4.0), period: float = 0.25) -> SyntheticScene:
    """Box room with per-wall tinted checkerboards (texture everywhere)."""
    tints = [
        ((0.95, 0.55, 0.45), (0.2, 0.05, 0.05)),
        ((0.45, 0.95, 0.55), (0.05, 0.2, 0.05)),
        ((0.5, 0.6, 0.95), (0.05, 0.08, 0.2)),
        ((0.95, 0.9, 0.5), (0.2, 0.18, 0.05)),
        ((0.9, 0.5, 0.9), (0.18, 0.05, 0.18)),
        ((0.5, 0.9, 0.9), (0.05, 0.18, 0.18)),
    ]
    walls = tuple(Checkerboard(period=period, color_a=a, color_b=b) for a, b in tints)
    return SyntheticScene(size=size, wall_textures=walls)


def grating_room(
    size=(4.0, 3.0, 4.0), frequency: float = 1.5, amplitude: float = 0.15
) -> SyntheticScene:
    """Box room with smooth colorful sine gratings, frequency-varied per wall.

    The default amplitude is deliberately moderate: matching works on
    normalized (contrast-invariant) descriptors while reprojection error
    scales with texture contrast, so gentler gratings render better
    without hurting depth.
    """
    walls = tuple(
        SineGrating(
            frequency=frequency * (1.0 + 0.15 * k),
            amplitude=amplitude,
            base=(0.5, 0.45 + 0.02 * k, 0.55 - 0.02 * k),
        )
        for k in range(6)
    )
    return SyntheticScene(size=size, wall_textures=walls)


def sphere_room(size=(5.0, 3.0, 5.0), period: float = 0.25) -> SyntheticScene:
    """Checker room plus an off-center textured sphere."""
    base = checker_room(size=size, period=period)
    ball = SceneSphere(
        center=(size[0] * 0.28, -size[1] * 0.15, size[2] * 0.22),
        radius=min(size) * 0.18,
        texture=Checkerboard(period=period * 0.6, color_a=(0.95, 0.7, 0.2), color_b=(0.15, 0.1, 0.3)),
    )
    return SyntheticScene(size=size, wall_textures=base.wall_textures, spheres=(ball,))


SCENE_PRESETS = {
    "checker": checker_room,
    "grating": grating_room,
    "sphere": sphere_room,
}

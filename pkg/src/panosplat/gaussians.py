"""Pixel-aligned 3D Gaussians decoded from spherical depth maps.

One splat per valid depth pixel: the center back-projects the pixel along
its ray, color copies the pixel, opacity tracks the matching confidence,
and rotation/scale form an analytic footprint aligned with the local
ERP tangent frame (one pixel across tangentially, thin radially).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .pano_image import DepthMap, ErpImage
from .sphere_geom import ErpGrid, Pose
from .sweep import DepthResult

_SPLT_MAGIC = b"SPLT"
_FLOATS_PER_SPLAT = 14  # center 3, quat 4, scale 3, opacity 1, rgb 3

MIN_POLE_COS = 0.05


def quat_wxyz_to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternions (..., 4) in (w, x, y, z) order to rotation matrices."""
    q = np.asarray(q, dtype=np.float64)
    xyzw = np.concatenate([q[..., 1:], q[..., :1]], axis=-1)
    return Rotation.from_quat(xyzw.reshape(-1, 4)).as_matrix().reshape(q.shape[:-1] + (3, 3))


def matrix_to_quat_wxyz(m: np.ndarray) -> np.ndarray:
    """Rotation matrices (..., 3, 3) to canonical (w >= 0) unit quaternions."""
    m = np.asarray(m, dtype=np.float64)
    xyzw = Rotation.from_matrix(m.reshape(-1, 3, 3)).as_quat(canonical=True)
    q = np.concatenate([xyzw[:, 3:], xyzw[:, :3]], axis=-1)
    return q.reshape(m.shape[:-2] + (4,))


@dataclass(frozen=True)
class Splat:
    """A single 3D Gaussian primitive (world frame, linear scales)."""

    center: np.ndarray
    rotation: np.ndarray  # unit quaternion (w, x, y, z)
    scale: np.ndarray
    opacity: float
    color: np.ndarray

    def covariance(self) -> np.ndarray:
        """World covariance R diag(s)^2 R^T (always symmetric PSD)."""
        r = quat_wxyz_to_matrix(self.rotation)
        return r @ np.diag(np.asarray(self.scale) ** 2) @ r.T


class SplatSet:
    """Ordered collection of splats with per-splat provenance, stored columnar."""

    def __init__(
        self,
        centers: np.ndarray,
        rotations: np.ndarray,
        scales: np.ndarray,
        opacities: np.ndarray,
        colors: np.ndarray,
        view_index: np.ndarray | None = None,
        pixel: np.ndarray | None = None,
    ):
        n = len(centers)
        self.centers = np.asarray(centers, dtype=np.float64).reshape(n, 3)
        self.rotations = np.asarray(rotations, dtype=np.float64).reshape(n, 4)
        self.scales = np.asarray(scales, dtype=np.float64).reshape(n, 3)
        self.opacities = np.asarray(opacities, dtype=np.float64).reshape(n)
        self.colors = np.asarray(colors, dtype=np.float64).reshape(n, 3)
        self.view_index = (
            np.full(n, -1, dtype=np.int32) if view_index is None
            else np.asarray(view_index, dtype=np.int32).reshape(n)
        )
        self.pixel = (
            np.full((n, 2), -1, dtype=np.int32) if pixel is None
            else np.asarray(pixel, dtype=np.int32).reshape(n, 2)
        )
        self._validate()

    def _validate(self):
        if len(self) == 0:
            return
        norms = np.linalg.norm(self.rotations, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-6:
            raise ValueError("splat quaternions must be unit norm")
        if not np.all(np.isfinite(self.centers)) or not np.all(np.isfinite(self.scales)):
            raise ValueError("splat geometry must be finite")
        if self.scales.min() <= 0.0:
            raise ValueError("splat scales must be strictly positive")
        if self.opacities.min() < 0.0 or self.opacities.max() > 1.0:
            raise ValueError("opacities must lie in [0, 1]")
        if self.colors.min() < -1e-9 or self.colors.max() > 1.0 + 1e-9:
            raise ValueError("colors must lie in [0, 1]")

    @staticmethod
    def empty() -> "SplatSet":
        return SplatSet(
            np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 3)), np.zeros(0), np.zeros((0, 3))
        )

    def __len__(self) -> int:
        return len(self.centers)

    def __getitem__(self, i: int) -> Splat:
        return Splat(
            center=self.centers[i].copy(),
            rotation=self.rotations[i].copy(),
            scale=self.scales[i].copy(),
            opacity=float(self.opacities[i]),
            color=self.colors[i].copy(),
        )


def merge(sets: list[SplatSet]) -> SplatSet:
    """Concatenate splat sets, preserving order and provenance."""
    if not sets:
        return SplatSet.empty()
    return SplatSet(
        np.concatenate([s.centers for s in sets]),
        np.concatenate([s.rotations for s in sets]),
        np.concatenate([s.scales for s in sets]),
        np.concatenate([s.opacities for s in sets]),
        np.concatenate([s.colors for s in sets]),
        np.concatenate([s.view_index for s in sets]),
        np.concatenate([s.pixel for s in sets]),
    )


def _pixel_angles(grid: ErpGrid):
    theta = (0.5 - (np.arange(grid.width) + 0.5) / grid.width) * 2.0 * math.pi
    phi = (0.5 - (np.arange(grid.height) + 0.5) / grid.height) * math.pi
    return np.meshgrid(theta, phi)


def lift_centers(depth: DepthMap, pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    """Back-project every valid depth pixel to a world point.

    Returns (points, valid): points has shape (H, W, 3) and is zero where
    the depth sentinel marks a pixel invalid.
    """
    theta, phi = _pixel_angles(depth.grid)
    cos_phi = np.cos(phi)
    dirs = np.stack([cos_phi * np.sin(theta), np.sin(phi), cos_phi * np.cos(theta)], axis=-1)
    valid = depth.valid_mask
    points = depth.data[..., None] * dirs
    points = points @ pose.rotation.T + pose.translation
    points = np.where(valid[..., None], points, 0.0)
    return points, valid


@dataclass(frozen=True)
class GaussianConfig:
    scale_multiplier: float = 1.0
    opacity_floor: float = 0.01


def decode_splats(
    img: ErpImage,
    depth_result: DepthResult,
    pose: Pose,
    config: GaussianConfig = GaussianConfig(),
    view_index: int = 0,
) -> SplatSet:
    """One pixel-aligned Gaussian per valid depth pixel.

    The local frame's columns are the normalized longitude tangent, the
    latitude tangent, and the radial direction; scales cover one pixel
    tangentially (the longitude footprint shrinks with cos(phi), floored
    near the poles) and a tenth of that radially.
    """
    grid = img.grid
    if depth_result.depth.grid != grid:
        raise ValueError("image and depth must be on the same grid")
    if img.channels != 3:
        raise ValueError("splat decoding expects a 3-channel color image")

    depth = depth_result.depth
    valid = depth.valid_mask
    if not np.any(valid):
        return SplatSet.empty()

    theta, phi = _pixel_angles(grid)
    sin_t, cos_t = np.sin(theta), np.cos(theta)
    sin_p, cos_p = np.sin(phi), np.cos(phi)
    zeros = np.zeros_like(theta)
    e_theta = np.stack([cos_t, zeros, -sin_t], axis=-1)
    e_phi = np.stack([-sin_p * sin_t, cos_p, -sin_p * cos_t], axis=-1)
    e_radial = np.stack([cos_p * sin_t, sin_p, cos_p * cos_t], axis=-1)
    frames = np.stack([e_theta, e_phi, e_radial], axis=-1)  # columns
    frames_world = np.einsum("ab,hwbc->hwac", pose.rotation, frames)

    points, _ = lift_centers(depth, pose)
    r = depth.data
    sigma = config.scale_multiplier
    sx = sigma * r * (2.0 * math.pi / grid.width) * np.maximum(cos_p, MIN_POLE_COS)
    sy = sigma * r * (math.pi / grid.height) * np.ones_like(r)
    sz = 0.1 * sigma * r * (math.pi / grid.height) * np.ones_like(r)

    rows, cols = np.nonzero(valid)
    quats = matrix_to_quat_wxyz(frames_world[valid])
    return SplatSet(
        centers=points[valid],
        rotations=quats,
        scales=np.stack([sx[valid], sy[valid], sz[valid]], axis=-1),
        opacities=np.clip(depth_result.confidence[valid], config.opacity_floor, 1.0),
        colors=img.data[valid],
        view_index=np.full(rows.shape, view_index, dtype=np.int32),
        pixel=np.stack([rows, cols], axis=-1).astype(np.int32),
    )


def write_splt(splats: SplatSet, path) -> None:
    """Binary splat file: magic, LE u32 count, then 14 LE f32 per splat."""
    recs = np.empty((len(splats), _FLOATS_PER_SPLAT), dtype="<f4")
    recs[:, 0:3] = splats.centers
    recs[:, 3:7] = splats.rotations
    recs[:, 7:10] = splats.scales
    recs[:, 10] = splats.opacities
    recs[:, 11:14] = splats.colors
    with open(path, "wb") as f:
        f.write(_SPLT_MAGIC + struct.pack("<I", len(splats)))
        f.write(recs.tobytes(order="C"))


def read_splt(path) -> SplatSet:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _SPLT_MAGIC:
        raise ValueError(f"{path}: not a SPLT splat file")
    (count,) = struct.unpack("<I", blob[4:8])
    expected = 8 + 4 * _FLOATS_PER_SPLAT * count
    if len(blob) != expected:
        raise ValueError(f"{path}: truncated SPLT payload ({len(blob)} != {expected})")
    recs = np.frombuffer(blob, dtype="<f4", offset=8).reshape(count, _FLOATS_PER_SPLAT)
    # Values are kept exactly as stored so write/read round-trips bit-exactly;
    # f32 quantization of unit quaternions stays within validation tolerance.
    recs = recs.astype(np.float64)
    return SplatSet(
        centers=recs[:, 0:3],
        rotations=recs[:, 3:7],
        scales=recs[:, 7:10],
        opacities=recs[:, 10],
        colors=recs[:, 11:14],
    )

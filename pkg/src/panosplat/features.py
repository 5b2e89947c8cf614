"""Hand-crafted bi-projection descriptors for multi-view matching.

Per-pixel channels, computed at the (downsampled) matching resolution:
mean luminance, horizontal gradient, vertical gradient, and 3x3
local-mean-removed luminance. The ERP branch computes them directly on the
panorama with seam-wrapped neighborhoods; the cubemap branch computes the
same recipe per face (gradients rescaled to matching-pixel units) and
stitches the result back onto the ERP grid. A latitude-weighted convex
blend fuses the two branches, letting the cubemap branch dominate near the
poles where ERP distortion is worst.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .pano_image import CubeMap, ErpImage, cubemap_to_erp, erp_to_cubemap
from .sphere_geom import ErpGrid, grid_latitudes

ALLOWED_DOWNSAMPLE = (1, 2, 4, 8)


@dataclass(frozen=True)
class FeatureMap:
    """Per-pixel descriptor raster on the matching-resolution ERP grid."""

    grid: ErpGrid
    data: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[:2] != (self.grid.height, self.grid.width):
            raise ValueError(f"feature shape {data.shape} does not match {self.grid.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("features contain non-finite values")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def box_downsample(data: np.ndarray, factor: int) -> np.ndarray:
    """Average (H, W, C) blocks of ``factor`` x ``factor`` pixels."""
    if factor == 1:
        return np.asarray(data, dtype=np.float64).copy()
    h, w = data.shape[:2]
    if h % factor or w % factor:
        raise ValueError(f"dimensions {h}x{w} not divisible by {factor}")
    return data.reshape(h // factor, factor, w // factor, factor, -1).mean(axis=(1, 3))


def box_filter_seam(a: np.ndarray, radius: int) -> np.ndarray:
    """Box filter over the leading (H, W) axes: wrap columns, clamp rows."""
    if radius == 0:
        return np.array(a, dtype=np.float64, copy=True)
    h = a.shape[0]
    pad = [(radius, radius)] + [(0, 0)] * (a.ndim - 1)
    padded = np.pad(np.asarray(a, dtype=np.float64), pad, mode="edge")
    acc = np.zeros(a.shape, dtype=np.float64)
    for dy in range(2 * radius + 1):
        rows = padded[dy : dy + h]
        for dx in range(-radius, radius + 1):
            acc += np.roll(rows, dx, axis=1)
    return acc / float((2 * radius + 1) ** 2)


def _luminance(data: np.ndarray) -> np.ndarray:
    return data.mean(axis=2)


def _gradients_wrapped(lum: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Central differences; columns wrap across the seam, rows replicate.
    gx = 0.5 * (np.roll(lum, -1, axis=1) - np.roll(lum, 1, axis=1))
    padded = np.pad(lum, ((1, 1), (0, 0)), mode="edge")
    gy = 0.5 * (padded[2:] - padded[:-2])
    return gx, gy


def _gradients_clamped(lum: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    px = np.pad(lum, ((0, 0), (1, 1)), mode="edge")
    py = np.pad(lum, ((1, 1), (0, 0)), mode="edge")
    gx = 0.5 * (px[:, 2:] - px[:, :-2])
    gy = 0.5 * (py[2:] - py[:-2])
    return gx, gy


def _normalize_rows(feat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(feat, axis=-1, keepdims=True)
    return np.where(norms > 1e-12, feat / np.where(norms > 0, norms, 1.0), 0.0)


def extract_erp_features(
    img: ErpImage, downsample: int = 8, normalize: bool = True
) -> FeatureMap:
    """Descriptor channels on the box-downsampled panorama, seam-wrapped."""
    if downsample not in ALLOWED_DOWNSAMPLE:
        raise ValueError(f"downsample must be one of {ALLOWED_DOWNSAMPLE}")
    small = box_downsample(img.data, downsample)
    lum = _luminance(small)
    gx, gy = _gradients_wrapped(lum)
    local = lum - box_filter_seam(lum, 1)
    feat = np.stack([lum, gx, gy, local], axis=-1)
    if normalize:
        feat = _normalize_rows(feat)
    grid = ErpGrid(width=img.grid.width // downsample, height=img.grid.height // downsample)
    return FeatureMap(grid=grid, data=feat, normalized=normalize)


def _face_features(face: np.ndarray, gradient_scale: float) -> np.ndarray:
    lum = _luminance(face)
    gx, gy = _gradients_clamped(lum)
    pad = np.pad(lum, 1, mode="edge")
    local = np.zeros_like(lum)
    for dy in range(3):
        for dx in range(3):
            local += pad[dy : dy + lum.shape[0], dx : dx + lum.shape[1]]
    local = lum - local / 9.0
    return np.stack([lum, gx * gradient_scale, gy * gradient_scale, local], axis=-1)


def extract_cp_features(
    img: ErpImage,
    face_size: int | None = None,
    downsample: int = 8,
    normalize: bool = True,
) -> FeatureMap:
    """Descriptor channels computed per cubemap face, stitched to ERP.

    Face gradients are rescaled by the ratio of face to equatorial-ERP
    angular pixel size so both branches report comparable magnitudes.
    """
    if downsample not in ALLOWED_DOWNSAMPLE:
        raise ValueError(f"downsample must be one of {ALLOWED_DOWNSAMPLE}")
    if img.grid.width % downsample or img.grid.height % downsample:
        raise ValueError("image dimensions not divisible by downsample factor")
    grid = ErpGrid(width=img.grid.width // downsample, height=img.grid.height // downsample)
    if face_size is None:
        face_size = max(grid.width // 4, 8)
    cube = erp_to_cubemap(img, face_size)
    gradient_scale = math.pi * face_size / grid.width
    feat_faces = tuple(_face_features(f, gradient_scale) for f in cube.faces)
    stitched = cubemap_to_erp(CubeMap(face_size=face_size, faces=feat_faces), grid)
    feat = np.asarray(stitched.data)
    if normalize:
        feat = _normalize_rows(feat)
    return FeatureMap(grid=grid, data=feat, normalized=normalize)


def fusion_weight(phi) -> np.ndarray:
    """Cubemap-branch blend weight, 0 at the equator rising to 1 at the poles."""
    return 1.0 - np.cos(phi)


def fuse_biprojection(f_erp: FeatureMap, f_cp: FeatureMap) -> FeatureMap:
    """Latitude-weighted convex blend of the two branch features."""
    if f_erp.grid != f_cp.grid or f_erp.channels != f_cp.channels:
        raise ValueError("branch feature maps must share grid and channel count")
    w = fusion_weight(grid_latitudes(f_erp.grid))[:, None, None]
    blended = f_erp.data + w * (f_cp.data - f_erp.data)
    normalized = f_erp.normalized and f_cp.normalized
    if normalized:
        blended = _normalize_rows(blended)
    return FeatureMap(grid=f_erp.grid, data=blended, normalized=normalized)

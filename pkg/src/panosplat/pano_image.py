"""Panoramic raster containers, resampling, cubemap stitching, and metrics.

Images are float64 arrays of shape (H, W, C). Bilinear sampling on the
equirectangular grid wraps horizontally across the longitude seam and
clamps vertically at the poles. Cubemap faces are 90-degree-FOV pinhole
views ordered front(+z), right(+x), back(-z), left(-x), up(+y), down(-y).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.ndimage import correlate1d

from .sphere_geom import ErpGrid, grid_directions

FACE_NAMES = ("front", "right", "back", "left", "up", "down")

# Per face: forward axis, image-right, image-down. All right-handed
# (right x down = forward) and mutually consistent along shared edges.
_FACE_FORWARD = np.array(
    [[0, 0, 1], [1, 0, 0], [0, 0, -1], [-1, 0, 0], [0, 1, 0], [0, -1, 0]],
    dtype=np.float64,
)
_FACE_RIGHT = np.array(
    [[-1, 0, 0], [0, 0, 1], [1, 0, 0], [0, 0, -1], [-1, 0, 0], [-1, 0, 0]],
    dtype=np.float64,
)
_FACE_DOWN = np.array(
    [[0, -1, 0], [0, -1, 0], [0, -1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]],
    dtype=np.float64,
)


def _validate_raster(data: np.ndarray, what: str) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 3 or data.shape[2] < 1:
        raise ValueError(f"{what} data must have shape (H, W, C), got {data.shape}")
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{what} contains non-finite values")
    if data.shape[2] == 3:
        if data.min() < -1e-9 or data.max() > 1.0 + 1e-9:
            raise ValueError(f"color {what} values must lie in [0, 1]")
    return data


@dataclass(frozen=True)
class ErpImage:
    """Multi-channel equirectangular raster; color images live in [0, 1]."""

    grid: ErpGrid
    data: np.ndarray

    def __post_init__(self):
        data = _validate_raster(self.data, "image")
        if data.shape[:2] != (self.grid.height, self.grid.width):
            raise ValueError(
                f"data shape {data.shape[:2]} does not match grid {self.grid.shape}"
            )
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class CubeMap:
    """Six square perspective faces covering the sphere."""

    face_size: int
    faces: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.face_size < 2:
            raise ValueError("face_size must be >= 2")
        if len(self.faces) != 6:
            raise ValueError("a cubemap needs exactly six faces")
        checked = []
        for i, face in enumerate(self.faces):
            face = _validate_raster(face, f"face '{FACE_NAMES[i]}'")
            if face.shape[:2] != (self.face_size, self.face_size):
                raise ValueError(f"face '{FACE_NAMES[i]}' is not {self.face_size} square")
            face.setflags(write=False)
            checked.append(face)
        object.__setattr__(self, "faces", tuple(checked))

    @property
    def channels(self) -> int:
        return self.faces[0].shape[2]


@dataclass(frozen=True)
class DepthMap:
    """Spherical radial depth per pixel, meters; 0 marks invalid pixels."""

    grid: ErpGrid
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.shape != (self.grid.height, self.grid.width):
            raise ValueError(
                f"depth shape {data.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(data)) or data.min() < 0.0:
            raise ValueError("depth values must be finite and >= 0")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def valid_mask(self) -> np.ndarray:
        return self.data > 0.0


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------


def sample_erp_bilinear(data: np.ndarray, u, v) -> np.ndarray:
    """Bilinear sample of an (H, W, C) raster at continuous ERP coordinates.

    ``u`` wraps modulo W (seam continuity), ``v`` clamps to the pole rows.
    Returns an array with shape ``u.shape + (C,)``.
    """
    h, w = data.shape[:2]
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)

    x = u - 0.5
    x0 = np.floor(x)
    wx = (x - x0)[..., None]
    c0 = (x0.astype(np.int64)) % w
    c1 = (c0 + 1) % w

    y = np.clip(v, 0.0, float(h)) - 0.5
    y0 = np.floor(y)
    wy = (y - y0)[..., None]
    r0 = np.clip(y0.astype(np.int64), 0, h - 1)
    r1 = np.clip(y0.astype(np.int64) + 1, 0, h - 1)

    top = (1.0 - wx) * data[r0, c0] + wx * data[r0, c1]
    bot = (1.0 - wx) * data[r1, c0] + wx * data[r1, c1]
    return (1.0 - wy) * top + wy * bot


def sample_bilinear(img: ErpImage, u: float, v: float) -> np.ndarray:
    """Per-pixel-center bilinear interpolation with seam wrap and pole clamp."""
    if not (0.0 <= v <= img.grid.height):
        raise ValueError(f"v={v} outside [0, {img.grid.height}]")
    return sample_erp_bilinear(img.data, np.float64(u), np.float64(v))


def sample_face_bilinear(data: np.ndarray, x, y) -> np.ndarray:
    """Bilinear sample of a square face raster, clamped at the edges."""
    h, w = data.shape[:2]
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, w - 1.0)
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = (x - x0)[..., None]
    wy = (y - y0)[..., None]
    top = (1.0 - wx) * data[y0, x0] + wx * data[y0, x1]
    bot = (1.0 - wx) * data[y1, x0] + wx * data[y1, x1]
    return (1.0 - wy) * top + wy * bot


def erp_to_cubemap(img: ErpImage, face_size: int) -> CubeMap:
    """Render six 90-degree pinhole faces of the panorama."""
    if face_size < 2:
        raise ValueError("face_size must be >= 2")
    s = face_size
    ndc = (np.arange(s, dtype=np.float64) + 0.5) / s * 2.0 - 1.0
    a, b = np.meshgrid(ndc, ndc)  # a: image right, b: image down
    faces = []
    for k in range(6):
        dirs = (
            _FACE_FORWARD[k]
            + a[..., None] * _FACE_RIGHT[k]
            + b[..., None] * _FACE_DOWN[k]
        )
        u, v, _ = _dirs_to_erp_pixels(dirs, img.grid)
        faces.append(sample_erp_bilinear(img.data, u, v))
    return CubeMap(face_size=s, faces=tuple(faces))


def _dirs_to_erp_pixels(dirs: np.ndarray, grid: ErpGrid):
    # Local import avoids a cycle: sphere_geom has no image types.
    from .sphere_geom import cartesian_to_pixels_array

    return cartesian_to_pixels_array(dirs, grid)


def cubemap_to_erp(cm: CubeMap, grid: ErpGrid) -> ErpImage:
    """Stitch a cubemap back onto the equirectangular grid.

    Every ERP direction is sampled from the single face whose axis has the
    largest component along it (nearest face, bilinear within the face).
    """
    dirs = grid_directions(grid)  # (H, W, 3)
    dots = dirs @ _FACE_FORWARD.T  # (H, W, 6)
    face_idx = np.argmax(dots, axis=-1)

    s = cm.face_size
    out = np.zeros((grid.height, grid.width, cm.channels))
    for k in range(6):
        mask = face_idx == k
        if not np.any(mask):
            continue
        d = dirs[mask]
        fwd = d @ _FACE_FORWARD[k]
        a = (d @ _FACE_RIGHT[k]) / fwd
        b = (d @ _FACE_DOWN[k]) / fwd
        x = (a + 1.0) * 0.5 * s - 0.5
        y = (b + 1.0) * 0.5 * s - 0.5
        out[mask] = sample_face_bilinear(cm.faces[k], x, y)
    if cm.channels == 3:
        out = np.clip(out, 0.0, 1.0)
    return ErpImage(grid=grid, data=out)


# ---------------------------------------------------------------------------
# Quality metrics
# ---------------------------------------------------------------------------

PSNR_CAP_DB = 100.0


def psnr(a: ErpImage, b: ErpImage) -> float:
    """Peak signal-to-noise ratio in dB for [0, 1] images, capped at 100."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse < 1e-10:
        return PSNR_CAP_DB
    return 10.0 * math.log10(1.0 / mse)


def _ssim_window() -> np.ndarray:
    offsets = np.arange(-5, 6, dtype=np.float64)
    k = np.exp(-(offsets**2) / (2.0 * 1.5**2))
    return k / k.sum()


def _ssim_filter(x: np.ndarray) -> np.ndarray:
    # Horizontal wrap (panorama seam), vertical reflect at the poles.
    k = _ssim_window()
    out = correlate1d(x, k, axis=1, mode="wrap")
    return correlate1d(out, k, axis=0, mode="reflect")


def ssim(a: ErpImage, b: ErpImage) -> float:
    """Mean local SSIM, 11x11 Gaussian window sigma=1.5, k1=0.01, k2=0.03."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    c1 = 0.01**2
    c2 = 0.03**2
    total = 0.0
    for ch in range(a.channels):
        x = a.data[..., ch]
        y = b.data[..., ch]
        mu_x = _ssim_filter(x)
        mu_y = _ssim_filter(y)
        var_x = _ssim_filter(x * x) - mu_x * mu_x
        var_y = _ssim_filter(y * y) - mu_y * mu_y
        cov = _ssim_filter(x * y) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        total += float(np.mean(num / den))
    return total / a.channels


def depth_metrics(pred: DepthMap, gt: DepthMap) -> dict[str, float]:
    """Standard depth-error summary over pixels valid in both maps.

    Returns abs_diff (mean |d - g|), abs_rel (mean |d - g| / g), rmse, and
    delta_1_25_percent (percentage with max(d/g, g/d) < 1.25).
    """
    if pred.grid != gt.grid:
        raise ValueError("depth maps must share a grid")
    valid = pred.valid_mask & gt.valid_mask
    if not np.any(valid):
        raise ValueError("no pixels are valid in both depth maps")
    d = pred.data[valid]
    g = gt.data[valid]
    diff = np.abs(d - g)
    ratio = np.maximum(d / g, g / d)
    return {
        "abs_diff": float(np.mean(diff)),
        "abs_rel": float(np.mean(diff / g)),
        "rmse": float(np.sqrt(np.mean((d - g) ** 2))),
        "delta_1_25_percent": float(100.0 * np.mean(ratio < 1.25)),
    }


# ---------------------------------------------------------------------------
# File formats: 8-bit PNG for color, SDPT for depth rasters
# ---------------------------------------------------------------------------

_SDPT_MAGIC = b"SDPT"


def write_png(img: ErpImage, path) -> None:
    if img.channels != 3:
        raise ValueError("PNG output requires a 3-channel color image")
    quantized = np.round(np.clip(img.data, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(path, format="PNG")


def read_png(path) -> ErpImage:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    h, w = arr.shape[:2]
    return ErpImage(grid=ErpGrid(width=w, height=h), data=arr)


def write_sdpt(depth: DepthMap, path) -> None:
    """Write the radial-depth raster format: magic, u32 W, u32 H, f32 rows."""
    header = _SDPT_MAGIC + struct.pack("<II", depth.grid.width, depth.grid.height)
    payload = depth.data.astype("<f4").tobytes(order="C")
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def read_sdpt(path) -> DepthMap:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _SDPT_MAGIC:
        raise ValueError(f"{path}: not an SDPT depth raster")
    w, h = struct.unpack("<II", blob[4:12])
    expected = 12 + 4 * w * h
    if len(blob) != expected:
        raise ValueError(f"{path}: truncated SDPT payload ({len(blob)} != {expected})")
    data = np.frombuffer(blob, dtype="<f4", offset=12).reshape(h, w).astype(np.float64)
    return DepthMap(grid=ErpGrid(width=w, height=h), data=data)

"""Exact coordinate machinery for equirectangular panoramas.

Conventions used throughout the package:

* ``theta`` is longitude in ``(-pi, pi]``, ``phi`` is latitude in
  ``[-pi/2, pi/2]``, ``r`` is radial (spherical) depth in meters.
* The equirectangular map is ``theta = (0.5 - u/W) * 2pi`` and
  ``phi = (0.5 - v/H) * pi``; integer pixel ``k`` samples the continuous
  coordinate ``k + 0.5`` (pixel centers), so the seam and the poles land
  between pixels.
* Cartesian camera frame: ``x = r cos(phi) sin(theta)``, ``y = r sin(phi)``,
  ``z = r cos(phi) cos(theta)``. Forward is +z, up is +y.
* Poses are camera-to-world rigid transforms stored as rotation matrix plus
  translation vector.

Everything here is pure and operates on immutable values; the ``*_array``
helpers are vectorized twins of the scalar operations and accept numpy
arrays of any shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

_ORTHO_TOL = 1e-9


def wrap_theta(theta):
    """Normalize longitude into the canonical range ``(-pi, pi]``.

    Works on scalars and arrays alike.
    """
    return np.pi - np.remainder(np.pi - np.asarray(theta, dtype=np.float64), TWO_PI)


@dataclass(frozen=True)
class ErpGrid:
    """Pixel lattice of a full-sphere equirectangular image (W = 2H)."""

    width: int
    height: int

    def __post_init__(self):
        if self.width != 2 * self.height:
            raise ValueError(
                f"equirect grid must have W = 2H, got {self.width}x{self.height}"
            )
        if self.height < 2 or self.height % 2 != 0:
            raise ValueError(f"grid dimensions must be even and >= 2, got H={self.height}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass(frozen=True)
class SphericalCoord:
    """A direction (r = 1) or point (r > 0) in spherical coordinates."""

    theta: float
    phi: float
    r: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.theta) or not math.isfinite(self.phi):
            raise ValueError("non-finite spherical coordinate")
        if abs(self.phi) > math.pi / 2 + 1e-12:
            raise ValueError(f"latitude out of range: phi={self.phi}")
        if not (self.r > 0.0):
            raise ValueError(f"radial depth must be positive, got r={self.r}")
        object.__setattr__(self, "theta", float(wrap_theta(self.theta)))
        object.__setattr__(self, "phi", float(np.clip(self.phi, -math.pi / 2, math.pi / 2)))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Pose:
    """Rigid camera-to-world transform: ``p_world = R @ p_camera + t``."""

    rotation: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = _readonly(self.rotation)
        t = _readonly(self.translation)
        if R.shape != (3, 3) or t.shape != (3,):
            raise ValueError("pose requires a 3x3 rotation and a 3-vector translation")
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
            raise ValueError("non-finite pose")
        if np.max(np.abs(R @ R.T - np.eye(3))) > _ORTHO_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got shape {m.shape}")
        if np.max(np.abs(m[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > 1e-12:
            raise ValueError("last row of a rigid transform must be [0, 0, 0, 1]")
        return Pose(m[:3, :3], m[:3, 3])

    def to_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


def pixel_to_spherical(u: float, v: float, grid: ErpGrid) -> SphericalCoord:
    """Continuous equirect pixel coordinates to a unit direction.

    ``u`` wraps around the longitude seam; ``v`` outside ``[0, H]`` is a
    domain error (beyond the poles).
    """
    if not (0.0 <= v <= grid.height):
        raise ValueError(f"v={v} outside [0, {grid.height}]")
    theta = (0.5 - u / grid.width) * TWO_PI
    phi = (0.5 - v / grid.height) * math.pi
    return SphericalCoord(theta=theta, phi=phi, r=1.0)


def spherical_to_pixel(s: SphericalCoord, grid: ErpGrid) -> tuple[float, float]:
    """Inverse of :func:`pixel_to_spherical`: u in [0, W), v in [0, H]."""
    u = (0.5 - s.theta / TWO_PI) * grid.width % grid.width
    v = float(np.clip((0.5 - s.phi / math.pi) * grid.height, 0.0, grid.height))
    return (u, v)


def spherical_to_cartesian(s: SphericalCoord) -> np.ndarray:
    cos_phi = math.cos(s.phi)
    return np.array(
        [
            s.r * cos_phi * math.sin(s.theta),
            s.r * math.sin(s.phi),
            s.r * cos_phi * math.cos(s.theta),
        ]
    )


def cartesian_to_spherical(p: np.ndarray) -> SphericalCoord:
    """Cartesian point to spherical; theta := 0 at the poles by convention."""
    x, y, z = (float(c) for c in np.asarray(p, dtype=np.float64))
    r = math.sqrt(x * x + y * y + z * z)
    if r == 0.0:
        raise ValueError("cannot convert the zero vector to spherical coordinates")
    phi = math.asin(min(1.0, max(-1.0, y / r)))
    theta = math.atan2(x, z) if math.hypot(x, z) > 0.0 else 0.0
    return SphericalCoord(theta=theta, phi=phi, r=r)


def transform_point(pose: Pose, p: np.ndarray) -> np.ndarray:
    return pose.rotation @ np.asarray(p, dtype=np.float64) + pose.translation


def compose(a: Pose, b: Pose) -> Pose:
    """Composition a after b: ``compose(a, b)(p) = a(b(p))``."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(p: Pose) -> Pose:
    rt = p.rotation.T
    return Pose(rt, -rt @ p.translation)


def relative(src: Pose, dst: Pose) -> Pose:
    """Transform mapping camera-`src` coordinates into camera-`dst` coordinates."""
    return compose(invert(dst), src)


# ---------------------------------------------------------------------------
# Vectorized twins. Shapes are preserved; the trailing axis of cartesian
# arrays is xyz.
# ---------------------------------------------------------------------------


def pixels_to_dirs_array(u, v, grid: ErpGrid) -> np.ndarray:
    """Pixel coordinates (any shape) to unit direction vectors (..., 3)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    theta = (0.5 - u / grid.width) * TWO_PI
    phi = (0.5 - v / grid.height) * math.pi
    cos_phi = np.cos(phi)
    return np.stack(
        [cos_phi * np.sin(theta), np.sin(phi), cos_phi * np.cos(theta)], axis=-1
    )


def cartesian_to_pixels_array(p: np.ndarray, grid: ErpGrid):
    """Cartesian points (..., 3) to (u, v, r) arrays; u wrapped, v clamped."""
    p = np.asarray(p, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    r = np.sqrt(x * x + y * y + z * z)
    safe_r = np.where(r > 0.0, r, 1.0)
    phi = np.arcsin(np.clip(y / safe_r, -1.0, 1.0))
    theta = np.where(np.hypot(x, z) > 0.0, np.arctan2(x, z), 0.0)
    theta = wrap_theta(theta)
    u = (0.5 - theta / TWO_PI) * grid.width % grid.width
    v = np.clip((0.5 - phi / math.pi) * grid.height, 0.0, float(grid.height))
    return u, v, r


def grid_directions(grid: ErpGrid) -> np.ndarray:
    """Unit directions at every pixel center of the grid, shape (H, W, 3)."""
    u = np.arange(grid.width, dtype=np.float64) + 0.5
    v = np.arange(grid.height, dtype=np.float64) + 0.5
    uu, vv = np.meshgrid(u, v)
    return pixels_to_dirs_array(uu, vv, grid)


def grid_latitudes(grid: ErpGrid) -> np.ndarray:
    """Latitude phi of each pixel row center, shape (H,)."""
    v = np.arange(grid.height, dtype=np.float64) + 0.5
    return (0.5 - v / grid.height) * math.pi


def transform_points_array(pose: Pose, p: np.ndarray) -> np.ndarray:
    """Apply a pose to points of shape (..., 3)."""
    p = np.asarray(p, dtype=np.float64)
    return p @ pose.rotation.T + pose.translation

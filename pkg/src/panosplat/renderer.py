"""Forward Gaussian splatting on the CPU.

Splats are projected through a pinhole camera with the local affine
(Jacobian) approximation, then alpha-blended front to back. Two renderers
share one contract: a tile-binned rasterizer (numba-parallel over 16x16
tiles) and an exhaustive reference that loops over every sorted Gaussian
for every pixel. Both apply the identical per-pixel rules: a Gaussian
contributes only inside its 3-sigma Mahalanobis ellipse (the precise form
of the 3-sigma binning), alpha is clamped at 0.999, and blending stops
once transmittance drops below 1e-4 -- so they agree to float reordering
noise, far inside the 1e-4 contract.

Panoramas are rendered as six padded cubemap faces (90-degree FOV plus a
12% margin so splats straddling face borders are not clipped), cropped,
and stitched back to the equirectangular grid.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

# Pick the OpenMP layer up front: probing TBB first warns on older TBB builds.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")
from numba import njit, prange

from .gaussians import Splat, SplatSet, quat_wxyz_to_matrix
from .pano_image import CubeMap, DepthMap, ErpImage, cubemap_to_erp
from .pano_image import _FACE_DOWN, _FACE_FORWARD, _FACE_RIGHT
from .sphere_geom import ErpGrid, Pose, compose, invert

NEAR_CLIP = 0.05
COV_DILATION = 0.3
ALPHA_MAX = 0.999
TRANSMITTANCE_STOP = 1e-4
MAHALANOBIS_CUTOFF = 9.0  # 3-sigma ellipse
TILE_SIZE = 16
PANORAMA_FACE_MARGIN = 0.12
JACOBIAN_TANGENT_MARGIN = 1.3


@dataclass(frozen=True)
class PinholeCamera:
    """Intrinsics in pixels plus a camera-to-world pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: Pose

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0.0 < self.cx < self.width and 0.0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @staticmethod
    def from_fov(fov_deg: float, width: int, height: int, pose: Pose) -> "PinholeCamera":
        if not (0.0 < fov_deg < 180.0):
            raise ValueError("fov must be in (0, 180) degrees")
        f = width / (2.0 * math.tan(math.radians(fov_deg) / 2.0))
        return PinholeCamera(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0,
                             width=width, height=height, pose=pose)


@dataclass(frozen=True)
class Projected2DGaussian:
    mean2d: np.ndarray
    cov2d: np.ndarray
    view_z: float
    opacity: float
    color: np.ndarray


def _tangent_limits(cam: PinholeCamera) -> tuple[float, float]:
    # The affine (Jacobian) approximation diverges for points far outside
    # the frustum; clamping the view-space tangents there is the standard
    # splatting stabilization and keeps off-screen footprints bounded.
    lim_x = JACOBIAN_TANGENT_MARGIN * max(cam.cx, cam.width - cam.cx) / cam.fx
    lim_y = JACOBIAN_TANGENT_MARGIN * max(cam.cy, cam.height - cam.cy) / cam.fy
    return lim_x, lim_y


def project_gaussian(splat: Splat, cam: PinholeCamera) -> Projected2DGaussian | None:
    """EWA projection of one splat; None when culled by the near clip."""
    w2c = invert(cam.pose)
    t = w2c.rotation @ splat.center + w2c.translation
    if t[2] <= NEAR_CLIP:
        return None
    tx, ty, tz = t
    mean2d = np.array([cam.fx * tx / tz + cam.cx, cam.fy * ty / tz + cam.cy])
    rot = quat_wxyz_to_matrix(splat.rotation)
    m = rot * np.asarray(splat.scale)[None, :]
    cov_world = m @ m.T
    cov_view = w2c.rotation @ cov_world @ w2c.rotation.T
    lim_x, lim_y = _tangent_limits(cam)
    jx = min(max(tx / tz, -lim_x), lim_x) * tz
    jy = min(max(ty / tz, -lim_y), lim_y) * tz
    jac = np.array(
        [
            [cam.fx / tz, 0.0, -cam.fx * jx / (tz * tz)],
            [0.0, cam.fy / tz, -cam.fy * jy / (tz * tz)],
        ]
    )
    cov2d = jac @ cov_view @ jac.T + COV_DILATION * np.eye(2)
    return Projected2DGaussian(
        mean2d=mean2d, cov2d=cov2d, view_z=float(tz),
        opacity=float(splat.opacity), color=splat.color.copy(),
    )


def project_splats_batch(splats: SplatSet, cam: PinholeCamera):
    """Vectorized twin of :func:`project_gaussian` for a whole set.

    Returns (means2d, cov2d packed [a, b, c], view_z, opacity, color) for
    the surviving splats, in front-to-back order (stable z sort, original
    index breaking ties).
    """
    n = len(splats)
    if n == 0:
        e = np.zeros
        return e((0, 2)), e((0, 3)), e(0), e(0), e((0, 3))
    w2c = invert(cam.pose)
    t = splats.centers @ w2c.rotation.T + w2c.translation
    keep = t[:, 2] > NEAR_CLIP

    t = t[keep]
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]
    means = np.stack([cam.fx * tx / tz + cam.cx, cam.fy * ty / tz + cam.cy], axis=-1)

    rot = quat_wxyz_to_matrix(splats.rotations[keep])
    m = rot * splats.scales[keep][:, None, :]
    cov_world = m @ np.transpose(m, (0, 2, 1))
    cov_view = np.einsum("ab,nbc,dc->nad", w2c.rotation, cov_world, w2c.rotation)

    lim_x, lim_y = _tangent_limits(cam)
    jx = np.clip(tx / tz, -lim_x, lim_x) * tz
    jy = np.clip(ty / tz, -lim_y, lim_y) * tz
    zeros = np.zeros_like(tz)
    jac = np.stack(
        [
            np.stack([cam.fx / tz, zeros, -cam.fx * jx / (tz * tz)], axis=-1),
            np.stack([zeros, cam.fy / tz, -cam.fy * jy / (tz * tz)], axis=-1),
        ],
        axis=1,
    )
    cov2d = np.einsum("nab,nbc,ndc->nad", jac, cov_view, jac)
    cov2d[:, 0, 0] += COV_DILATION
    cov2d[:, 1, 1] += COV_DILATION

    order = np.argsort(tz, kind="stable")
    packed = np.stack([cov2d[:, 0, 0], cov2d[:, 0, 1], cov2d[:, 1, 1]], axis=-1)
    return (
        np.ascontiguousarray(means[order]),
        np.ascontiguousarray(packed[order]),
        np.ascontiguousarray(tz[order]),
        np.ascontiguousarray(splats.opacities[keep][order]),
        np.ascontiguousarray(splats.colors[keep][order]),
    )


@dataclass(frozen=True)
class RenderResult:
    color: np.ndarray  # (H, W, 3) in [0, 1]
    alpha: np.ndarray  # (H, W) in [0, 1]
    depth: np.ndarray  # (H, W) alpha-weighted expected view z; 0 where empty


def _inverse_cov(packed: np.ndarray) -> np.ndarray:
    a, b, c = packed[:, 0], packed[:, 1], packed[:, 2]
    det = a * c - b * b
    return np.stack([c / det, -b / det, a / det], axis=-1)


def rasterize_reference(
    splats: SplatSet, cam: PinholeCamera, background=(0.0, 0.0, 0.0)
) -> RenderResult:
    """Oracle renderer: no tiling, every sorted Gaussian against every pixel."""
    bg = np.asarray(background, dtype=np.float64)
    h, w = cam.height, cam.width
    color = np.zeros((h, w, 3))
    trans = np.ones((h, w))
    zsum = np.zeros((h, w))
    wsum = np.zeros((h, w))

    projected = [project_gaussian(splats[i], cam) for i in range(len(splats))]
    projected = [p for p in projected if p is not None]
    projected.sort(key=lambda p: p.view_z)  # list.sort is stable: index tie-break

    xs = np.arange(w, dtype=np.float64) + 0.5
    ys = np.arange(h, dtype=np.float64) + 0.5
    for p in projected:
        a2, b2, c2 = p.cov2d[0, 0], p.cov2d[0, 1], p.cov2d[1, 1]
        det = a2 * c2 - b2 * b2
        ia, ib, ic = c2 / det, -b2 / det, a2 / det
        dx = xs - p.mean2d[0]
        dy = ys - p.mean2d[1]
        maha = ia * dx[None, :] ** 2 + 2.0 * ib * dy[:, None] * dx[None, :] + ic * dy[:, None] ** 2
        g = np.where(maha <= MAHALANOBIS_CUTOFF, np.exp(-0.5 * maha), 0.0)
        alpha = np.minimum(p.opacity * g, ALPHA_MAX)
        alpha = np.where(trans >= TRANSMITTANCE_STOP, alpha, 0.0)
        weight = trans * alpha
        color += weight[..., None] * p.color
        zsum += weight * p.view_z
        wsum += weight
        trans = trans * (1.0 - alpha)

    color += trans[..., None] * bg
    depth = np.where(wsum > 1e-12, zsum / np.maximum(wsum, 1e-300), 0.0)
    return RenderResult(color=color, alpha=1.0 - trans, depth=depth)


@njit(cache=True, parallel=True)
def _blend_tiles(
    pair_splat, tile_starts, means, inv_cov, zs, opac, cols,
    width, height, tiles_x, bg, out_color, out_alpha, out_depth,
):  # pragma: no cover - exercised via rasterize()
    n_tiles = tile_starts.shape[0] - 1
    for tile in prange(n_tiles):
        ty = tile // tiles_x
        tx = tile % tiles_x
        y_lo = ty * TILE_SIZE
        x_lo = tx * TILE_SIZE
        y_hi = min(y_lo + TILE_SIZE, height)
        x_hi = min(x_lo + TILE_SIZE, width)
        for py in range(y_lo, y_hi):
            for px in range(x_lo, x_hi):
                t_cur = 1.0
                cr = 0.0
                cg = 0.0
                cb = 0.0
                zsum = 0.0
                wsum = 0.0
                for k in range(tile_starts[tile], tile_starts[tile + 1]):
                    if t_cur < TRANSMITTANCE_STOP:
                        break
                    i = pair_splat[k]
                    dx = px + 0.5 - means[i, 0]
                    dy = py + 0.5 - means[i, 1]
                    maha = inv_cov[i, 0] * dx * dx + 2.0 * inv_cov[i, 1] * dx * dy + inv_cov[i, 2] * dy * dy
                    if maha > MAHALANOBIS_CUTOFF:
                        continue
                    alpha = opac[i] * math.exp(-0.5 * maha)
                    if alpha > ALPHA_MAX:
                        alpha = ALPHA_MAX
                    weight = t_cur * alpha
                    cr += weight * cols[i, 0]
                    cg += weight * cols[i, 1]
                    cb += weight * cols[i, 2]
                    zsum += weight * zs[i]
                    wsum += weight
                    t_cur *= 1.0 - alpha
                out_color[py, px, 0] = cr + t_cur * bg[0]
                out_color[py, px, 1] = cg + t_cur * bg[1]
                out_color[py, px, 2] = cb + t_cur * bg[2]
                out_alpha[py, px] = 1.0 - t_cur
                out_depth[py, px] = zsum / wsum if wsum > 1e-12 else 0.0


def _bin_splats(means, packed_cov, width, height, tiles_x, tiles_y):
    """Conservative tile lists: the axis-aligned box around each 3-sigma ellipse."""
    a, b, c = packed_cov[:, 0], packed_cov[:, 1], packed_cov[:, 2]
    half_trace = 0.5 * (a + c)
    lam_max = half_trace + np.sqrt(np.maximum((0.5 * (a - c)) ** 2 + b * b, 0.0))
    radius = 3.0 * np.sqrt(lam_max)

    tx0 = np.maximum(np.floor((means[:, 0] - radius) / TILE_SIZE).astype(np.int64), 0)
    tx1 = np.minimum(np.floor((means[:, 0] + radius) / TILE_SIZE).astype(np.int64), tiles_x - 1)
    ty0 = np.maximum(np.floor((means[:, 1] - radius) / TILE_SIZE).astype(np.int64), 0)
    ty1 = np.minimum(np.floor((means[:, 1] + radius) / TILE_SIZE).astype(np.int64), tiles_y - 1)

    nx = tx1 - tx0 + 1
    ny = ty1 - ty0 + 1
    valid = (nx > 0) & (ny > 0)
    counts = np.where(valid, nx * ny, 0)
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)

    splat_of_pair = np.repeat(np.arange(len(means), dtype=np.int64), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    within = np.arange(total, dtype=np.int64) - np.repeat(starts, counts)
    nx_rep = np.repeat(np.maximum(nx, 1), counts)
    tile_x = np.repeat(tx0, counts) + within % nx_rep
    tile_y = np.repeat(ty0, counts) + within // nx_rep
    tile_id = tile_y * tiles_x + tile_x

    order = np.lexsort((splat_of_pair, tile_id))
    return splat_of_pair[order], tile_id[order]


def rasterize(
    splats: SplatSet, cam: PinholeCamera, background=(0.0, 0.0, 0.0)
) -> RenderResult:
    """Tile-binned front-to-back alpha blending; bit-deterministic for any
    worker count (tiles own disjoint pixels, blending order is the global
    z-then-index sort)."""
    bg = np.asarray(background, dtype=np.float64)
    h, w = cam.height, cam.width
    means, packed, zs, opac, cols = project_splats_batch(splats, cam)

    out_color = np.empty((h, w, 3))
    out_alpha = np.empty((h, w))
    out_depth = np.empty((h, w))
    tiles_x = (w + TILE_SIZE - 1) // TILE_SIZE
    tiles_y = (h + TILE_SIZE - 1) // TILE_SIZE

    if len(means) == 0:
        out_color[:] = bg
        out_alpha[:] = 0.0
        out_depth[:] = 0.0
        return RenderResult(color=out_color, alpha=out_alpha, depth=out_depth)

    pair_splat, tile_id = _bin_splats(means, packed, w, h, tiles_x, tiles_y)
    tile_starts = np.searchsorted(tile_id, np.arange(tiles_x * tiles_y + 1, dtype=np.int64))
    _blend_tiles(
        pair_splat, tile_starts, means, _inverse_cov(packed), zs, opac,
        np.ascontiguousarray(cols), w, h, tiles_x, bg, out_color, out_alpha, out_depth,
    )
    return RenderResult(color=out_color, alpha=out_alpha, depth=out_depth)


# ---------------------------------------------------------------------------
# Panorama composition
# ---------------------------------------------------------------------------


def _face_pose(pano_pose: Pose, face: int) -> Pose:
    r_face = np.stack([_FACE_RIGHT[face], _FACE_DOWN[face], _FACE_FORWARD[face]], axis=-1)
    return compose(pano_pose, Pose(r_face, np.zeros(3)))


def render_panorama(
    splats: SplatSet,
    pose: Pose,
    grid: ErpGrid,
    background=(0.0, 0.0, 0.0),
    supersample: int = 2,
) -> tuple[ErpImage, DepthMap]:
    """Render six padded pinhole faces at the pose, crop, and stitch.

    Faces are rasterized at ``supersample`` times the W/4 base size and
    stitched directly: sampling the panorama from a finer face grid keeps
    the stitch resample near-lossless at the equator, where W/4 faces
    would undersample the ERP by ~1.3x. Face depth (camera z) is converted
    to radial distance before stitching so the returned map is spherical
    depth like everything else here.
    """
    if supersample < 1:
        raise ValueError("supersample must be >= 1")
    core = (grid.width // 4) * supersample
    pad = math.ceil(PANORAMA_FACE_MARGIN * core / 2.0)
    size = core + 2 * pad
    focal = core / 2.0

    color_faces = []
    depth_faces = []
    for face in range(6):
        cam = PinholeCamera(
            fx=focal, fy=focal, cx=size / 2.0, cy=size / 2.0,
            width=size, height=size, pose=_face_pose(pose, face),
        )
        res = rasterize(splats, cam, background)
        xs = (np.arange(size) + 0.5 - size / 2.0) / focal
        tan_sq = xs[None, :] ** 2 + xs[:, None] ** 2
        radial = res.depth * np.sqrt(1.0 + tan_sq)
        color_faces.append(np.clip(res.color[pad : pad + core, pad : pad + core], 0.0, 1.0))
        depth_faces.append(radial[pad : pad + core, pad : pad + core, None])

    color = cubemap_to_erp(CubeMap(face_size=core, faces=tuple(color_faces)), grid)
    depth = cubemap_to_erp(CubeMap(face_size=core, faces=tuple(depth_faces)), grid)
    return color, DepthMap(grid=grid, data=depth.data[..., 0])

"""Raster containers, resampling, stitching, and metric tests."""

import math

import numpy as np
import pytest

from panosplat.pano_image import (
    CubeMap,
    DepthMap,
    ErpImage,
    cubemap_to_erp,
    depth_metrics,
    erp_to_cubemap,
    psnr,
    read_png,
    read_sdpt,
    sample_bilinear,
    ssim,
    write_png,
    write_sdpt,
)
from panosplat.sphere_geom import ErpGrid, grid_directions


def smooth_image(grid, amplitude=0.2):
    """Band-limited test texture: low-order harmonics of the direction."""
    d = grid_directions(grid)
    r = 0.5 + amplitude * np.sin(2.0 * d[..., 0]) * np.cos(d[..., 1])
    g = 0.5 + amplitude * np.sin(1.5 * d[..., 1] + 0.7)
    b = 0.5 + amplitude * np.cos(2.5 * d[..., 2] - 0.3)
    return ErpImage(grid=grid, data=np.clip(np.stack([r, g, b], axis=-1), 0, 1))


class TestContainers:
    def test_rejects_nonfinite(self):
        g = ErpGrid(8, 4)
        data = np.zeros((4, 8, 1))
        data[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            ErpImage(grid=g, data=data)

    def test_rejects_color_out_of_range(self):
        g = ErpGrid(8, 4)
        with pytest.raises(ValueError):
            ErpImage(grid=g, data=np.full((4, 8, 3), 1.5))

    def test_depth_rejects_negative(self):
        g = ErpGrid(8, 4)
        with pytest.raises(ValueError):
            DepthMap(grid=g, data=np.full((4, 8), -1.0))


class TestBilinear:
    def test_pixel_center_exact(self):
        g = ErpGrid(8, 4)
        rng = np.random.default_rng(0)
        img = ErpImage(grid=g, data=rng.uniform(size=(4, 8, 3)))
        assert sample_bilinear(img, 2.5, 1.5) == pytest.approx(img.data[1, 2])

    def test_constant_everywhere(self):
        g = ErpGrid(8, 4)
        img = ErpImage(grid=g, data=np.full((4, 8, 2), 0.37))
        for u, v in [(0.0, 2.0), (7.99, 0.0), (4.2, 4.0), (-3.0, 1.1)]:
            np.testing.assert_allclose(sample_bilinear(img, u, v), 0.37)

    def test_seam_blend_hand_computed(self):
        g = ErpGrid(8, 4)
        rng = np.random.default_rng(1)
        img = ErpImage(grid=g, data=rng.uniform(size=(4, 8, 1)))
        got = sample_bilinear(img, 7.75, 1.5)  # = W - 0.5 + 0.25
        expected = 0.75 * img.data[1, 7] + 0.25 * img.data[1, 0]
        np.testing.assert_allclose(got, expected)

    def test_seam_continuity(self):
        g = ErpGrid(256, 128)
        img = smooth_image(g)
        for eps in (1e-3, 1e-6):
            a = sample_bilinear(img, g.width - eps, 37.0)
            b = sample_bilinear(img, eps, 37.0)
            assert np.max(np.abs(a - b)) < 2e-3 * max(eps / 1e-6, 1.0) * 1e-3 + 1e-4


class TestCubemap:
    def test_constant_round_trip(self):
        g = ErpGrid(64, 32)
        img = ErpImage(grid=g, data=np.full((32, 64, 3), 0.25))
        cube = erp_to_cubemap(img, 16)
        for f in cube.faces:
            np.testing.assert_allclose(f, 0.25, atol=1e-12)
        back = cubemap_to_erp(cube, g)
        np.testing.assert_allclose(back.data, 0.25, atol=1e-12)

    def test_front_center_matches_forward_sample(self):
        g = ErpGrid(256, 128)
        img = smooth_image(g)
        cube = erp_to_cubemap(img, 64)
        center = 0.25 * (
            cube.faces[0][31, 31] + cube.faces[0][31, 32]
            + cube.faces[0][32, 31] + cube.faces[0][32, 32]
        )
        fwd = sample_bilinear(img, g.width / 2, g.height / 2)
        np.testing.assert_allclose(center, fwd, atol=2e-3)

    def test_forward_direction_reads_front_center(self):
        g = ErpGrid(64, 32)
        faces = [np.full((16, 16, 1), k / 10.0) for k in range(6)]
        cube = CubeMap(face_size=16, faces=tuple(faces))
        back = cubemap_to_erp(cube, g)
        # the pixel nearest (theta=0, phi=0) lives on the front face
        assert back.data[16, 32, 0] == pytest.approx(0.0)
        assert back.data[16, 0, 0] == pytest.approx(0.2)  # seam pixel: back face

    def test_latitude_gradient_up_face_radially_symmetric(self):
        g = ErpGrid(256, 128)
        d = grid_directions(g)
        img = ErpImage(grid=g, data=(0.5 + 0.4 * d[..., 1:2]))
        up = erp_to_cubemap(img, 64).faces[4][..., 0]
        c = (64 - 1) / 2.0
        rng = np.random.default_rng(2)
        for _ in range(8):
            ang = rng.uniform(0, 2 * math.pi)
            rad = rng.uniform(3, 25)
            ys = c + rad * math.sin(ang), c + rad * math.cos(ang)
            a = up[int(round(ys[0])), int(round(ys[1]))]
            b = up[int(round(c + rad)), int(round(c))]
            assert a == pytest.approx(b, abs=5e-3)

    def test_smooth_stitch_psnr_bound(self):
        g = ErpGrid(512, 256)
        img = smooth_image(g)
        back = cubemap_to_erp(erp_to_cubemap(img, 256), g)
        assert psnr(back, img) >= 40.0

    def test_stitch_idempotent_on_very_smooth_content(self):
        # the residual is the in-face edge clamp, first-order in the content
        # gradient (no cross-face blending by design), so the fixpoint bound
        # needs a correspondingly gentle band-limited field
        g = ErpGrid(512, 256)
        img = smooth_image(g, amplitude=2e-4)
        once = cubemap_to_erp(erp_to_cubemap(img, 256), g)
        twice = cubemap_to_erp(erp_to_cubemap(once, 256), g)
        assert np.max(np.abs(twice.data - once.data)) < 1e-6


class TestMetrics:
    def test_psnr_identical_capped(self):
        g = ErpGrid(16, 8)
        img = smooth_image(g)
        assert psnr(img, img) == 100.0
        assert ssim(img, img) == pytest.approx(1.0, abs=1e-12)

    def test_psnr_closed_form(self):
        g = ErpGrid(16, 8)
        a = ErpImage(grid=g, data=np.zeros((8, 16, 3)))
        b = ErpImage(grid=g, data=np.full((8, 16, 3), 0.5))
        assert psnr(a, b) == pytest.approx(10 * math.log10(1 / 0.25), abs=1e-9)
        assert psnr(a, b) == pytest.approx(6.0206, abs=1e-4)

    def test_shape_mismatch_raises(self):
        a = smooth_image(ErpGrid(16, 8))
        b = smooth_image(ErpGrid(32, 16))
        with pytest.raises(ValueError):
            psnr(a, b)
        with pytest.raises(ValueError):
            ssim(a, b)

    def test_ssim_inverted_checkerboard_near_minus_one(self):
        g = ErpGrid(64, 32)
        yy, xx = np.meshgrid(np.arange(32), np.arange(64), indexing="ij")
        board = (((xx // 2) + (yy // 2)) % 2).astype(float)
        a = ErpImage(grid=g, data=np.repeat(board[..., None], 3, axis=2))
        b = ErpImage(grid=g, data=np.repeat((1.0 - board)[..., None], 3, axis=2))
        s = ssim(a, b)
        # reference: with mu_a = mu_b = mu and cov = -var the formula gives
        # ((2 mu^2 + c1)(c2 - 2 var)) / ((2 mu^2 + c1)(2 var + c2))
        assert -1.0 <= s < -0.9

    def test_metric_symmetry(self):
        g = ErpGrid(32, 16)
        rng = np.random.default_rng(3)
        a = ErpImage(grid=g, data=rng.uniform(size=(16, 32, 3)))
        b = ErpImage(grid=g, data=rng.uniform(size=(16, 32, 3)))
        assert psnr(a, b) == pytest.approx(psnr(b, a), abs=1e-9)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-9)


class TestDepthMetrics:
    def grid(self):
        return ErpGrid(16, 8)

    def test_identical(self):
        g = self.grid()
        d = DepthMap(grid=g, data=np.full((8, 16), 2.0))
        m = depth_metrics(d, d)
        assert (m["abs_diff"], m["abs_rel"], m["rmse"]) == (0, 0, 0)
        assert m["delta_1_25_percent"] == 100.0

    def test_scale_by_1_3(self):
        g = self.grid()
        gt = DepthMap(grid=g, data=np.full((8, 16), 1.0))
        pred = DepthMap(grid=g, data=np.full((8, 16), 1.3))
        m = depth_metrics(pred, gt)
        assert m["abs_rel"] == pytest.approx(0.3)
        assert m["delta_1_25_percent"] == 0.0

    def test_constant_offset(self):
        g = self.grid()
        gt = DepthMap(grid=g, data=np.full((8, 16), 1.0))
        pred = DepthMap(grid=g, data=np.full((8, 16), 1.1))
        m = depth_metrics(pred, gt)
        assert m["abs_diff"] == pytest.approx(0.1)
        assert m["rmse"] == pytest.approx(0.1)
        assert m["delta_1_25_percent"] == 100.0

    def test_delta_swap_symmetric(self):
        g = self.grid()
        rng = np.random.default_rng(4)
        a = DepthMap(grid=g, data=rng.uniform(0.5, 5, (8, 16)))
        b = DepthMap(grid=g, data=rng.uniform(0.5, 5, (8, 16)))
        assert depth_metrics(a, b)["delta_1_25_percent"] == depth_metrics(b, a)["delta_1_25_percent"]

    def test_no_overlap_raises(self):
        g = self.grid()
        a = np.zeros((8, 16))
        b = np.zeros((8, 16))
        a[0, 0] = 1.0
        b[0, 1] = 1.0
        with pytest.raises(ValueError):
            depth_metrics(DepthMap(grid=g, data=a), DepthMap(grid=g, data=b))

    def test_sentinel_pixels_excluded(self):
        g = self.grid()
        gt = np.full((8, 16), 2.0)
        pred = np.full((8, 16), 2.0)
        pred[0, :] = 0.0  # invalid in prediction
        gt[1, :] = 0.0  # invalid in GT
        m = depth_metrics(DepthMap(grid=g, data=pred), DepthMap(grid=g, data=gt))
        assert m["abs_diff"] == 0.0


class TestFileFormats:
    def test_sdpt_round_trip(self, tmp_path):
        g = ErpGrid(32, 16)
        rng = np.random.default_rng(5)
        data = rng.uniform(0.1, 9.0, (16, 32)).astype(np.float32).astype(np.float64)
        data[3, 7] = 0.0
        d = DepthMap(grid=g, data=data)
        path = tmp_path / "d.sdpt"
        write_sdpt(d, path)
        blob = path.read_bytes()
        assert blob[:4] == b"SDPT"
        assert len(blob) == 12 + 4 * 32 * 16
        d2 = read_sdpt(path)
        np.testing.assert_array_equal(d2.data, d.data)
        write_sdpt(d2, tmp_path / "d2.sdpt")
        assert (tmp_path / "d2.sdpt").read_bytes() == blob

    def test_sdpt_rejects_garbage(self, tmp_path):
        path = tmp_path / "x.sdpt"
        path.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(ValueError):
            read_sdpt(path)

    def test_png_round_trip_8bit_exact(self, tmp_path):
        g = ErpGrid(32, 16)
        rng = np.random.default_rng(6)
        quantized = np.round(rng.uniform(size=(16, 32, 3)) * 255) / 255.0
        img = ErpImage(grid=g, data=quantized)
        path = tmp_path / "i.png"
        write_png(img, path)
        img2 = read_png(path)
        np.testing.assert_array_equal(img2.data, img.data)

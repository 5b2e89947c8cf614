"""Analytic-scene oracle tests."""

import math

import numpy as np
import pytest

from panosplat.pano_image import psnr
from panosplat.sphere_geom import ErpGrid, Pose, grid_directions
from panosplat.synth import (
    Checkerboard,
    Constant,
    SceneSphere,
    SyntheticScene,
    checker_room,
    grating_room,
    make_test_pair,
    make_trajectory,
    render_gt,
    sphere_room,
)


class TestRenderGt:
    def test_cube_center_axis_depths(self):
        scene = SyntheticScene(size=(2.0, 2.0, 2.0))
        grid = ErpGrid(64, 32)
        _, depth = render_gt(scene, Pose.identity(), grid)
        # pixels nearest the six axis directions see the walls at ~1 m
        for (r, c) in [(16, 32), (16, 0), (16, 16), (16, 48), (0, 10), (31, 50)]:
            assert depth.data[r, c] == pytest.approx(1.0, rel=0.02)

    def test_cube_corner_depth(self):
        scene = SyntheticScene(size=(2.0, 2.0, 2.0))
        grid = ErpGrid(512, 256)
        _, depth = render_gt(scene, Pose.identity(), grid)
        dirs = grid_directions(grid)
        corner = np.array([1.0, 1.0, 1.0]) / math.sqrt(3)
        idx = np.unravel_index(np.argmax(dirs @ corner), grid.shape)
        assert depth.data[idx] == pytest.approx(math.sqrt(3), rel=0.02)

    def test_constant_texture_constant_image(self):
        walls = tuple(Constant(color=(0.3, 0.5, 0.7)) for _ in range(6))
        scene = SyntheticScene(size=(2.0, 2.0, 2.0), wall_textures=walls)
        grid = ErpGrid(64, 32)
        img, _ = render_gt(scene, Pose.identity(), grid)
        np.testing.assert_allclose(img.data, np.broadcast_to([0.3, 0.5, 0.7], (32, 64, 3)))
        assert psnr(img, img) == 100.0

    def test_camera_outside_rejected(self):
        scene = SyntheticScene(size=(2.0, 2.0, 2.0))
        with pytest.raises(ValueError):
            render_gt(scene, Pose(np.eye(3), np.array([5.0, 0, 0])), ErpGrid(32, 16))

    def test_camera_inside_sphere_rejected(self):
        scene = sphere_room()
        ball = scene.spheres[0]
        with pytest.raises(ValueError):
            render_gt(scene, Pose(np.eye(3), np.asarray(ball.center)), ErpGrid(32, 16))

    def test_lift_reproject_identity(self):
        # lifting each pixel by its GT depth must land back on the geometry
        scene = sphere_room()
        grid = ErpGrid(128, 64)
        pose = Pose(np.eye(3), np.array([-0.4, 0.1, 0.3]))
        _, depth = render_gt(scene, pose, grid)
        dirs = grid_directions(grid) @ pose.rotation.T
        points = pose.translation + depth.data[..., None] * dirs
        half = scene.half
        on_wall = np.min(np.abs(np.abs(points) - half), axis=-1) < 1e-9
        on_ball = np.abs(
            np.linalg.norm(points - np.asarray(scene.spheres[0].center), axis=-1)
            - scene.spheres[0].radius
        ) < 1e-9
        assert np.all(on_wall | on_ball)

    def test_mirror_symmetry(self):
        scene = SyntheticScene(size=(3.0, 2.0, 4.0))
        grid = ErpGrid(64, 32)
        _, d1 = render_gt(scene, Pose(np.eye(3), np.array([0.5, 0.1, -0.2])), grid)
        _, d2 = render_gt(scene, Pose(np.eye(3), np.array([-0.5, 0.1, -0.2])), grid)
        # mirroring x flips the longitude axis: u -> W-1-u
        np.testing.assert_allclose(d2.data, d1.data[:, ::-1], atol=1e-9)

    def test_depth_exact_on_sphere(self):
        scene = sphere_room()
        grid = ErpGrid(128, 64)
        img, depth = render_gt(scene, Pose.identity(), grid)
        ball = scene.spheres[0]
        to_center = np.asarray(ball.center)
        dirs = grid_directions(grid)
        center_dir = to_center / np.linalg.norm(to_center)
        idx = np.unravel_index(np.argmax(dirs @ center_dir), grid.shape)
        expected = np.linalg.norm(to_center) - ball.radius
        assert depth.data[idx] == pytest.approx(expected, rel=0.01)


class TestMakeTestPair:
    def test_zero_baseline_identical(self):
        pa, pb = make_test_pair(checker_room(), 0.0, seed=0)
        np.testing.assert_array_equal(pa.translation, pb.translation)

    def test_deterministic(self):
        a1, b1 = make_test_pair(checker_room(), 0.5, seed=13)
        a2, b2 = make_test_pair(checker_room(), 0.5, seed=13)
        np.testing.assert_array_equal(b1.translation, b2.translation)
        np.testing.assert_array_equal(a1.translation, a2.translation)

    def test_both_inside(self):
        scene = checker_room(size=(4.0, 4.0, 4.0))
        for seed in range(10):
            pa, pb = make_test_pair(scene, 0.5, seed=seed)
            assert scene.contains_camera(pa.translation)
            assert scene.contains_camera(pb.translation)
            assert np.linalg.norm(pb.translation - pa.translation) == pytest.approx(0.5)

    def test_impossible_placement_raises(self):
        scene = checker_room(size=(1.0, 1.0, 1.0))
        with pytest.raises(ValueError):
            make_test_pair(scene, 5.0, seed=0)


class TestTrajectory:
    def test_stays_inside_long_walk(self):
        scene = grating_room()
        poses = make_trajectory(scene, 200, 0.15, seed=3)
        assert len(poses) == 200
        for p in poses:
            assert scene.contains_camera(p.translation)

    def test_deterministic(self):
        a = make_trajectory(grating_room(), 10, 0.2, seed=5)
        b = make_trajectory(grating_room(), 10, 0.2, seed=5)
        for pa, pb in zip(a, b):
            np.testing.assert_array_equal(pa.translation, pb.translation)

    def test_spacing(self):
        poses = make_trajectory(grating_room(), 20, 0.25, seed=1)
        for k in range(19):
            step = np.linalg.norm(poses[k + 1].translation - poses[k].translation)
            assert step == pytest.approx(0.25, rel=1e-9)


class TestTextures:
    def test_checkerboard_parity(self):
        tex = Checkerboard(period=1.0, color_a=(1, 1, 1), color_b=(0, 0, 0))
        pu = np.array([0.5, 1.5, 0.5])
        pv = np.array([0.5, 0.5, 1.5])
        out = tex.sample(pu, pv)
        np.testing.assert_array_equal(out[0], [1, 1, 1])
        np.testing.assert_array_equal(out[1], [0, 0, 0])
        np.testing.assert_array_equal(out[2], [0, 0, 0])

    def test_scene_validation(self):
        with pytest.raises(ValueError):
            SyntheticScene(size=(0.0, 1.0, 1.0))
        with pytest.raises(ValueError):
            SyntheticScene(size=(2, 2, 2), wall_textures=(Constant(),) * 5)

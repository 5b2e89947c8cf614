"""Coordinate-transform and pose correctness tests."""

import math

import numpy as np
import pytest

from panosplat.sphere_geom import (
    ErpGrid,
    Pose,
    SphericalCoord,
    cartesian_to_pixels_array,
    cartesian_to_spherical,
    compose,
    grid_directions,
    invert,
    pixel_to_spherical,
    pixels_to_dirs_array,
    relative,
    spherical_to_cartesian,
    spherical_to_pixel,
    transform_point,
    wrap_theta,
)


def random_pose(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    rot = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )
    return Pose(rot, rng.normal(size=3))


class TestGrid:
    def test_rejects_non_2to1(self):
        with pytest.raises(ValueError):
            ErpGrid(width=100, height=100)

    def test_rejects_odd_or_tiny(self):
        with pytest.raises(ValueError):
            ErpGrid(width=6, height=3)
        with pytest.raises(ValueError):
            ErpGrid(width=2, height=1)


class TestPixelSpherical:
    def test_left_edge_is_seam(self):
        g = ErpGrid(64, 32)
        s = pixel_to_spherical(0.0, g.height / 2, g)
        assert s.theta == pytest.approx(math.pi)
        assert s.phi == pytest.approx(0.0)

    def test_center_is_forward(self):
        g = ErpGrid(64, 32)
        s = pixel_to_spherical(g.width / 2, g.height / 2, g)
        assert s.theta == pytest.approx(0.0)
        assert s.phi == pytest.approx(0.0)

    def test_quarter_point(self):
        g = ErpGrid(64, 32)
        s = pixel_to_spherical(g.width / 4, g.height / 4, g)
        assert s.theta == pytest.approx(math.pi / 2)
        assert s.phi == pytest.approx(math.pi / 4)

    def test_v_out_of_range_raises(self):
        g = ErpGrid(64, 32)
        with pytest.raises(ValueError):
            pixel_to_spherical(1.0, -0.1, g)
        with pytest.raises(ValueError):
            pixel_to_spherical(1.0, g.height + 0.1, g)

    def test_inverse_examples(self):
        g = ErpGrid(64, 32)
        assert spherical_to_pixel(SphericalCoord(0.0, 0.0), g) == pytest.approx((32, 16))
        assert spherical_to_pixel(SphericalCoord(math.pi, 0.0), g) == pytest.approx((0, 16))

    def test_round_trip_all_pixel_centers(self):
        g = ErpGrid(64, 32)
        for k in range(g.width):
            for r in range(g.height):
                u, v = k + 0.5, r + 0.5
                s = pixel_to_spherical(u, v, g)
                u2, v2 = spherical_to_pixel(s, g)
                assert abs(u2 - u) < 1e-9 and abs(v2 - v) < 1e-9


class TestCartesian:
    def test_forward_axis(self):
        p = spherical_to_cartesian(SphericalCoord(0.0, 0.0, 1.0))
        np.testing.assert_allclose(p, [0, 0, 1], atol=1e-15)

    def test_right_axis(self):
        p = spherical_to_cartesian(SphericalCoord(math.pi / 2, 0.0, 2.0))
        np.testing.assert_allclose(p, [2, 0, 0], atol=1e-15)

    def test_pole_any_theta(self):
        p = spherical_to_cartesian(SphericalCoord(1.234, math.pi / 2, 3.0))
        np.testing.assert_allclose(p, [0, 3, 0], atol=1e-9)

    def test_inverse_examples(self):
        s = cartesian_to_spherical([0, 0, 5])
        assert (s.theta, s.phi, s.r) == pytest.approx((0, 0, 5))
        s = cartesian_to_spherical([1, 0, 0])
        assert (s.theta, s.phi, s.r) == pytest.approx((math.pi / 2, 0, 1))
        s = cartesian_to_spherical([0, -2, 0])
        assert (s.theta, s.phi, s.r) == pytest.approx((0.0, -math.pi / 2, 2))

    def test_zero_vector_raises(self):
        with pytest.raises(ValueError):
            cartesian_to_spherical([0.0, 0.0, 0.0])

    def test_norm_preserved(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            s = SphericalCoord(rng.uniform(-4, 4), rng.uniform(-1.5, 1.5), rng.uniform(0.1, 9))
            p = spherical_to_cartesian(s)
            assert np.linalg.norm(p) == pytest.approx(s.r, rel=1e-12)

    def test_round_trip_off_pole(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            s = SphericalCoord(
                rng.uniform(-math.pi, math.pi),
                rng.uniform(-math.pi / 2 + 1e-6, math.pi / 2 - 1e-6),
                rng.uniform(0.05, 20),
            )
            s2 = cartesian_to_spherical(spherical_to_cartesian(s))
            assert s2.r == pytest.approx(s.r, rel=1e-12)
            assert s2.phi == pytest.approx(s.phi, abs=1e-9)
            assert wrap_theta(s2.theta - s.theta) == pytest.approx(0.0, abs=1e-9)


class TestPose:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            Pose(np.eye(3) * 1.001, np.zeros(3))

    def test_rejects_reflection(self):
        with pytest.raises(ValueError):
            Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_inverse_is_two_sided(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            p = random_pose(rng)
            for q in (compose(p, invert(p)), compose(invert(p), p)):
                np.testing.assert_allclose(q.rotation, np.eye(3), atol=1e-9)
                np.testing.assert_allclose(q.translation, 0, atol=1e-9)

    def test_compose_associative(self):
        rng = np.random.default_rng(3)
        a, b, c = (random_pose(rng) for _ in range(3))
        lhs = compose(compose(a, b), c)
        rhs = compose(a, compose(b, c))
        np.testing.assert_allclose(lhs.rotation, rhs.rotation, atol=1e-9)
        np.testing.assert_allclose(lhs.translation, rhs.translation, atol=1e-9)

    def test_relative_of_self_is_identity(self):
        rng = np.random.default_rng(4)
        p = random_pose(rng)
        rel = relative(p, p)
        x = rng.normal(size=3)
        np.testing.assert_allclose(transform_point(rel, x), x, atol=1e-9)

    def test_relative_pure_translation(self):
        a = Pose(np.eye(3), np.array([1.0, 2.0, 3.0]))
        b = Pose(np.eye(3), np.array([1.5, 2.0, 2.0]))
        rel = relative(a, b)
        p = np.array([0.2, -0.3, 0.9])
        np.testing.assert_allclose(transform_point(rel, p), p + a.translation - b.translation)

    def test_distances_preserved(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            pose = random_pose(rng)
            p, q = rng.normal(size=3), rng.normal(size=3)
            d0 = np.linalg.norm(p - q)
            d1 = np.linalg.norm(transform_point(pose, p) - transform_point(pose, q))
            assert d1 == pytest.approx(d0, abs=1e-9)

    def test_matrix_round_trip(self):
        rng = np.random.default_rng(6)
        p = random_pose(rng)
        q = Pose.from_matrix(p.to_matrix())
        np.testing.assert_allclose(q.rotation, p.rotation)
        np.testing.assert_allclose(q.translation, p.translation)


class TestVectorizedTwins:
    def test_matches_scalar_ops(self):
        g = ErpGrid(64, 32)
        rng = np.random.default_rng(7)
        u = rng.uniform(0, g.width, 64)
        v = rng.uniform(0, g.height, 64)
        dirs = pixels_to_dirs_array(u, v, g)
        for k in range(64):
            s = pixel_to_spherical(u[k], v[k], g)
            np.testing.assert_allclose(dirs[k], spherical_to_cartesian(s), atol=1e-12)

    def test_grid_directions_unit(self):
        g = ErpGrid(32, 16)
        d = grid_directions(g)
        np.testing.assert_allclose(np.linalg.norm(d, axis=-1), 1.0, atol=1e-12)

    def test_pixels_round_trip(self):
        g = ErpGrid(64, 32)
        d = grid_directions(g) * 2.5
        u, v, r = cartesian_to_pixels_array(d, g)
        uu, vv = np.meshgrid(np.arange(g.width) + 0.5, np.arange(g.height) + 0.5)
        np.testing.assert_allclose(u, uu, atol=1e-9)
        np.testing.assert_allclose(v, vv, atol=1e-9)
        np.testing.assert_allclose(r, 2.5, atol=1e-12)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmrl import geometry as g
from rmrl.geometry import CameraIntrinsics, MaskedDepthImage, PlanarPose, RigidTransform3D

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
angles = st.floats(-50.0, 50.0, allow_nan=False)
poses = st.builds(PlanarPose, finite, finite, angles)


def test_wrap_angle_range_and_tie():
    assert g.wrap_angle(math.pi) == pytest.approx(math.pi)
    assert g.wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert g.wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert g.wrap_angle(0.25) == 0.25


def test_compose_identity():
    assert g.compose_pick_pose(PlanarPose(0, 0, 0), PlanarPose(0, 0, 0)) == PlanarPose(0, 0, 0)


def test_compose_wraps_yaw():
    out = g.compose_pick_pose(PlanarPose(0.1, 0.2, 3.0), PlanarPose(0, 0, 0.3))
    assert out.x == 0.1 and out.y == 0.2
    assert out.psi == pytest.approx(3.0 + 0.3 - 2 * math.pi, abs=1e-12)
    assert out.psi == pytest.approx(-2.9831853, abs=1e-7)


def test_compose_componentwise():
    out = g.compose_pick_pose(PlanarPose(0.05, -0.02, 0.1), PlanarPose(0.002, 0.004, -0.0174533))
    np.testing.assert_allclose(out.as_array(), [0.052, -0.016, 0.0825467], atol=1e-12)


@given(poses, poses)
def test_compose_psi_always_in_half_open_range(a, b):
    psi = g.compose_pick_pose(a, b).psi
    assert -math.pi < psi <= math.pi


def test_planar_pose_rejects_nonfinite():
    with pytest.raises(ValueError):
        PlanarPose(float("nan"), 0, 0)


def test_translation_error_examples():
    p = PlanarPose(0.3, -0.1, 1.0)
    assert g.translation_error(p, p) == 0
    assert g.translation_error(PlanarPose(0.003, 0.004, 1), PlanarPose(0, 0, 0)) == pytest.approx(0.005, abs=1e-15)
    assert g.translation_error(PlanarPose(0.0021, 0, 0), PlanarPose(0, 0, 2)) == pytest.approx(0.0021)


def test_rotation_error_examples():
    assert g.rotation_error(PlanarPose(0, 0, 0.7), PlanarPose(1, 1, 0.7)) == 0
    assert g.rotation_error(PlanarPose(0, 0, math.pi), PlanarPose(0, 0, 0)) == 2.0
    assert g.rotation_error(PlanarPose(0, 0, 0.0104720), PlanarPose(0, 0, 0)) == pytest.approx(5.4831e-5, abs=1e-9)


@given(poses, poses)
def test_errors_symmetric_nonnegative(a, b):
    assert g.translation_error(a, b) == g.translation_error(b, a) >= 0
    assert g.rotation_error(a, b) == pytest.approx(g.rotation_error(b, a), abs=1e-12)
    assert -1e-15 <= g.rotation_error(a, b) <= 2 + 1e-15


@given(poses, poses)
def test_rotation_error_periodic(a, b):
    shifted = PlanarPose(a.x, a.y, a.psi + 2 * math.pi)
    assert g.rotation_error(shifted, b) == pytest.approx(g.rotation_error(a, b), abs=1e-9)


def test_reward_examples():
    p = PlanarPose(0.1, 0.2, 0.3)
    assert g.reward(p, p) == 1.0
    e_rot = 1 - math.cos(math.radians(0.58))
    assert g.reward_from_errors(0.0036, e_rot) == pytest.approx(0.996355, abs=1e-6)
    assert g.reward(PlanarPose(1.0, 0, 0), PlanarPose(0, 0, 0)) == pytest.approx(0.3678794, abs=1e-7)


@given(poses)
def test_reward_of_identical_poses_is_one(p):
    assert g.reward(p, p) == 1.0


@given(st.floats(0, 5), st.floats(0, 2), st.floats(1e-6, 1.0))
def test_reward_bounds_and_monotone(e_t, e_r, d):
    r = g.reward_from_errors(e_t, e_r)
    assert 0 < r <= 1
    assert g.reward_from_errors(e_t + d, e_r) < r
    assert g.reward_from_errors(e_t, e_r + d) < r


K = CameraIntrinsics(fx=615.0, fy=612.5, cx=320.4, cy=241.7)


def test_backproject_examples():
    np.testing.assert_allclose(g.backproject(K.cx, K.cy, 1.0, K), [0, 0, 1.0], atol=1e-15)
    np.testing.assert_allclose(g.backproject(K.cx + K.fx, K.cy, 2.0, K), [2.0, 0, 2.0], atol=1e-12)


def test_backproject_uses_v_for_y():
    # an offset in v only must move Y only
    p = g.backproject(K.cx, K.cy + K.fy, 1.0, K)
    np.testing.assert_allclose(p, [0, 1.0, 1.0], atol=1e-12)


@pytest.mark.parametrize("Z", [0.0, -1.0])
def test_backproject_rejects_nonpositive_depth(Z):
    with pytest.raises(ValueError):
        g.backproject(10, 10, Z, K)


@settings(max_examples=300)
@given(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4), st.floats(0.1, 10.0))
def test_project_backproject_roundtrip(u, v, Z):
    p = g.backproject(u, v, Z, K)
    u2, v2 = g.project(p, K)
    assert abs(u2 - u) <= 1e-9 and abs(v2 - v) <= 1e-9
    np.testing.assert_allclose(g.backproject(u2, v2, Z, K), p, rtol=0, atol=1e-9)


def _random_transform(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return RigidTransform3D(q, rng.standard_normal(3))


def test_camera_to_world_examples(rng):
    p = np.array([0.3, -0.2, 1.1])
    np.testing.assert_array_equal(g.camera_to_world(p, RigidTransform3D.identity()), p)
    T = RigidTransform3D(g.rotation_about_z(math.pi / 2), np.zeros(3))
    np.testing.assert_allclose(g.camera_to_world([1, 0, 0], T), [0, 1, 0], atol=1e-12)


def test_transform_chain_associativity(rng):
    for _ in range(50):
        wrist_from_camera = _random_transform(rng)
        world_from_wrist = _random_transform(rng)
        p = rng.standard_normal(3)
        stepwise = g.camera_to_world(g.camera_to_world(p, wrist_from_camera), world_from_wrist)
        composed = g.camera_to_world(p, world_from_wrist.compose(wrist_from_camera))
        np.testing.assert_allclose(stepwise, composed, rtol=0, atol=1e-12)


def test_rigid_transform_validation():
    with pytest.raises(ValueError):
        RigidTransform3D(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        RigidTransform3D(2 * np.eye(3), np.zeros(3))


def test_mask_mean_depth_examples(rng):
    depth = np.full((8, 9), 0.75)
    mask = rng.random((8, 9)) > 0.5
    assert mask_mean(depth, mask) == 0.75
    depth = rng.uniform(0.1, 5, size=(4, 4))
    depth[1, 2], depth[3, 0] = 1.0, 2.0
    mask = np.zeros((4, 4), bool)
    mask[1, 2] = mask[3, 0] = True
    assert mask_mean(depth, mask) == 1.5
    with pytest.raises(ValueError):
        mask_mean(depth, np.zeros((4, 4), bool))


def test_mask_mean_depth_skips_holes():
    depth = np.array([[0.0, 1.0], [3.0, 0.0]])
    assert mask_mean(depth, np.ones((2, 2), bool)) == 2.0
    with pytest.raises(ValueError):
        mask_mean(np.zeros((2, 2)), np.ones((2, 2), bool))


def test_masked_depth_shape_mismatch():
    with pytest.raises(ValueError):
        MaskedDepthImage(np.ones((3, 3)), np.ones((3, 4), bool))


def mask_mean(depth, mask):
    return g.mask_mean_depth(MaskedDepthImage(depth, mask))


def test_pca_yaw_axis_aligned_rectangle():
    mask = np.zeros((60, 80), bool)
    mask[25:35, 20:60] = True
    assert g.pca_yaw(mask) == pytest.approx(0.0, abs=1e-6)


def test_pca_yaw_rotated_rectangle():
    mask = g.rasterize_rectangle((120, 120), (60, 60), 40, 10, math.radians(20))
    assert abs(g.pca_yaw(mask) - math.radians(20)) <= math.radians(1)
    assert g.pca_yaw(mask) == pytest.approx(0.349, abs=0.0175)


def test_pca_yaw_circle_is_degenerate():
    rows, cols = np.mgrid[0:41, 0:41]
    circle = (rows - 20) ** 2 + (cols - 20) ** 2 <= 15 ** 2
    with pytest.raises(g.DegenerateOrientationError, match="degenerate orientation"):
        g.pca_yaw(circle)


def test_pca_yaw_needs_two_pixels():
    mask = np.zeros((5, 5), bool)
    mask[2, 2] = True
    with pytest.raises(ValueError):
        g.pca_yaw(mask)


@settings(max_examples=40, deadline=None)
@given(st.floats(-89.0, 89.0), st.integers(-15, 15), st.integers(-15, 15))
def test_pca_yaw_equivariant_and_translation_invariant(deg, du, dv):
    yaw = math.radians(deg)
    # thin masks alias badly near the axes; 80x20 keeps the worst case near 0.6 deg
    base = g.rasterize_rectangle((160, 160), (80, 80), 80, 20, yaw)
    moved = g.rasterize_rectangle((160, 160), (80 + du, 80 + dv), 80, 20, yaw)
    assert base.sum() >= 200
    est = g.pca_yaw(base)
    diff = g.wrap_angle(2 * (est - yaw)) / 2  # axis ambiguity: compare modulo pi
    assert abs(diff) <= math.radians(1)
    assert g.pca_yaw(moved) == pytest.approx(est, abs=1e-9)


def test_localize_pipeline():
    K_ = CameraIntrinsics(600.0, 600.0, 64.0, 48.0)
    mask = g.rasterize_rectangle((96, 128), (80, 30), 30, 12, math.radians(15))
    depth = np.where(mask, 0.8, 1.2)
    T = RigidTransform3D(g.rotation_about_z(0.3), np.array([0.5, -0.1, 0.9]))
    p_world, yaw = g.localize(MaskedDepthImage(depth, mask), K_, T)
    u, v = g.mask_center(mask)
    expected = T.rotation @ np.array([(u - 64) * 0.8 / 600, (v - 48) * 0.8 / 600, 0.8]) + T.translation
    np.testing.assert_allclose(p_world, expected, atol=1e-12)
    assert yaw == pytest.approx(math.radians(15), abs=math.radians(1))

"""Tests for rigid transforms, the error chart, kinematics, and camera maps."""

from __future__ import annotations

import numpy as np
import pytest

from shafttrack.geometry import (
    AngleNearPi,
    CameraIntrinsics,
    JointCountMismatch,
    KinematicChain,
    LumpedErrorParams,
    Pose,
    canonicalize_axis_angle,
    chain_from_dict,
    chain_to_dict,
    forward_kinematics,
    params_from_pose,
    pixel_to_unit,
    pose_from_params,
    prismatic,
    revolute,
    rotation_from_axis_angle,
    unit_to_pixel,
)


def random_params(rng, max_angle=np.pi - 0.01) -> LumpedErrorParams:
    b = rng.uniform(-1.0, 1.0, 3)
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    return LumpedErrorParams(b, axis * angle)


def random_pose(rng) -> Pose:
    return pose_from_params(random_params(rng))


def naive_chain_product(matrices: list[np.ndarray]) -> np.ndarray:
    """Independent oracle: plain left-to-right 4x4 homogeneous product."""
    out = np.eye(4)
    for m in matrices:
        out = out @ m
    return out


class TestPose:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            Pose(np.eye(3) * 1.001, np.zeros(3))

    def test_rejects_reflection(self):
        with pytest.raises(ValueError):
            Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_composition_matches_matrix_product(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            a, b = random_pose(rng), random_pose(rng)
            expected = a.as_matrix() @ b.as_matrix()
            np.testing.assert_allclose((a @ b).as_matrix(), expected, atol=1e-12)

    def test_composition_associative(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            a, b, c = (random_pose(rng) for _ in range(3))
            left = ((a @ b) @ c).as_matrix()
            right = (a @ (b @ c)).as_matrix()
            np.testing.assert_allclose(left, right, atol=1e-12)

    def test_inverse(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            t = random_pose(rng)
            np.testing.assert_allclose(
                (t @ t.inverse()).as_matrix(), np.eye(4), atol=1e-12
            )

    def test_rotation_preserves_norm(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            t = random_pose(rng)
            v = rng.standard_normal(3)
            assert abs(np.linalg.norm(t.rotate(v)) - np.linalg.norm(v)) < 1e-12


class TestAxisAngleChart:
    def test_identity_params(self):
        pose = pose_from_params(LumpedErrorParams(np.zeros(3), np.zeros(3)))
        np.testing.assert_allclose(pose.as_matrix(), np.eye(4), atol=0)

    def test_quarter_turn_example(self):
        # z-rotation by pi/2 plus translation (1,2,3) sends (1,0,0) to (1,3,3)
        pose = pose_from_params(
            LumpedErrorParams(np.array([1.0, 2.0, 3.0]), np.array([0.0, 0.0, np.pi / 2]))
        )
        np.testing.assert_allclose(pose.apply([1.0, 0.0, 0.0]), [1.0, 3.0, 3.0], atol=1e-12)

    def test_rodrigues_against_matrix_exponential(self):
        from scipy.linalg import expm

        from shafttrack.geometry import skew

        rng = np.random.default_rng(5)
        for _ in range(50):
            w = rng.uniform(-2.0, 2.0, 3)
            np.testing.assert_allclose(
                rotation_from_axis_angle(w), expm(skew(w)), atol=1e-10
            )

    def test_round_trip_params(self):
        rng = np.random.default_rng(6)
        for _ in range(1000):
            p = random_params(rng)
            q = params_from_pose(pose_from_params(p))
            np.testing.assert_allclose(q.b, p.b, atol=1e-9)
            np.testing.assert_allclose(q.w, p.w, atol=1e-9)

    def test_round_trip_pose(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            t = random_pose(rng)
            t2 = pose_from_params(params_from_pose(t))
            np.testing.assert_allclose(t2.as_matrix(), t.as_matrix(), atol=1e-9)

    def test_params_from_pose_trivial(self):
        p = params_from_pose(Pose.identity())
        np.testing.assert_allclose(p.b, 0.0, atol=0)
        np.testing.assert_allclose(p.w, 0.0, atol=0)

        p = params_from_pose(Pose(np.eye(3), np.array([0.1, 0.0, 0.0])))
        np.testing.assert_allclose(p.b, [0.1, 0.0, 0.0], atol=0)
        np.testing.assert_allclose(p.w, 0.0, atol=0)

    def test_angle_near_pi_raises(self):
        r = rotation_from_axis_angle(np.array([np.pi - 1e-8, 0.0, 0.0]))
        with pytest.raises(AngleNearPi):
            params_from_pose(Pose(r, np.zeros(3)))

    def test_canonicalize_preserves_rotation(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            axis = rng.standard_normal(3)
            axis /= np.linalg.norm(axis)
            angle = rng.uniform(np.pi + 0.01, 2 * np.pi - 0.01)
            w = axis * angle
            folded = canonicalize_axis_angle(w)
            assert np.linalg.norm(folded) < np.pi
            np.testing.assert_allclose(
                rotation_from_axis_angle(folded),
                rotation_from_axis_angle(w),
                atol=1e-9,
            )

    def test_constructor_canonicalizes(self):
        p = LumpedErrorParams(np.zeros(3), np.array([0.0, 0.0, 1.5 * np.pi]))
        assert np.linalg.norm(p.w) < np.pi
        np.testing.assert_allclose(p.w, [0.0, 0.0, -0.5 * np.pi], atol=1e-12)


class TestForwardKinematics:
    def _random_chain(self, rng, n_joints=3) -> KinematicChain:
        joints = []
        for _ in range(n_joints):
            offset = random_pose(rng)
            axis = rng.standard_normal(3)
            if rng.random() < 0.5:
                joints.append(revolute(axis, offset))
            else:
                joints.append(prismatic(axis, offset))
        return KinematicChain(tuple(joints), rng.standard_normal(3))

    def test_identity_chain(self):
        chain = KinematicChain((revolute([0, 0, 1]),), np.zeros(3))
        pose = forward_kinematics(chain, [0.0], Pose.identity())
        np.testing.assert_allclose(pose.as_matrix(), np.eye(4), atol=0)

    def test_single_prismatic(self):
        chain = KinematicChain((prismatic([0, 0, 1]),), np.zeros(3))
        pose = forward_kinematics(chain, [0.05], Pose.identity())
        np.testing.assert_allclose(pose.translation, [0.0, 0.0, 0.05], atol=1e-15)
        np.testing.assert_allclose(pose.rotation, np.eye(3), atol=0)

    def test_matches_naive_matrix_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            chain = self._random_chain(rng)
            q = rng.uniform(-1.0, 1.0, len(chain))
            error = random_pose(rng)
            matrices = [error.as_matrix()] + [
                j.pose(v).as_matrix() for j, v in zip(chain.joints, q)
            ]
            expected = naive_chain_product(matrices)
            got = forward_kinematics(chain, q, error).as_matrix()
            np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_partial_product(self):
        rng = np.random.default_rng(10)
        chain = self._random_chain(rng)
        q = rng.uniform(-1.0, 1.0, len(chain))
        error = random_pose(rng)
        partial = forward_kinematics(chain, q, error, upto_joint=1)
        expected = naive_chain_product(
            [error.as_matrix()]
            + [j.pose(v).as_matrix() for j, v in zip(chain.joints[:2], q[:2])]
        )
        np.testing.assert_allclose(partial.as_matrix(), expected, atol=1e-12)

    def test_joint_count_mismatch(self):
        chain = KinematicChain((revolute([0, 0, 1]),), np.zeros(3))
        with pytest.raises(JointCountMismatch):
            forward_kinematics(chain, [0.0, 1.0], Pose.identity())

    def test_chain_json_round_trip(self):
        rng = np.random.default_rng(11)
        chain = self._random_chain(rng)
        rebuilt = chain_from_dict(chain_to_dict(chain))
        q = rng.uniform(-1.0, 1.0, len(chain))
        np.testing.assert_allclose(
            forward_kinematics(rebuilt, q, Pose.identity()).as_matrix(),
            forward_kinematics(chain, q, Pose.identity()).as_matrix(),
            atol=1e-12,
        )


class TestCameraConversions:
    K = CameraIntrinsics(fx=1000.0, fy=1000.0, cu=960.0, cv=540.0, width=1920, height=1080)

    def test_principal_point(self):
        np.testing.assert_allclose(pixel_to_unit([960.0, 540.0], self.K), [0.0, 0.0], atol=0)
        np.testing.assert_allclose(unit_to_pixel([0.0, 0.0], self.K), [960.0, 540.0], atol=0)

    def test_unit_offset(self):
        np.testing.assert_allclose(pixel_to_unit([1960.0, 540.0], self.K), [1.0, 0.0], atol=0)
        np.testing.assert_allclose(unit_to_pixel([1.0, 0.0], self.K), [1960.0, 540.0], atol=0)

    def test_round_trip(self):
        rng = np.random.default_rng(12)
        px = rng.uniform(0.0, 1900.0, (100, 2))
        back = unit_to_pixel(pixel_to_unit(px, self.K), self.K)
        np.testing.assert_allclose(back, px, atol=1e-12)

    def test_rejects_bad_intrinsics(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(fx=-1.0, fy=1.0, cu=0.0, cv=0.0, width=10, height=10)
        with pytest.raises(ValueError):
            CameraIntrinsics(fx=1.0, fy=1.0, cu=20.0, cv=0.0, width=10, height=10)

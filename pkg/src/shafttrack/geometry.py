"""Rigid transforms, the 6-DoF error parameterization, and chain kinematics.

All geometry is expressed in meters and radians. Pixels appear only at the
camera boundary (``pixel_to_unit`` / ``unit_to_pixel``). Rotations are kept
in the axis-angle chart ``|w| < pi`` so the tracked error state has a unique
parameterization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ROTATION_TOL = 1e-9
ANGLE_NEAR_PI_TOL = 1e-6


class AngleNearPi(ValueError):
    """Rotation angle is too close to pi for a well-conditioned log map."""


class JointCountMismatch(ValueError):
    """Number of joint values does not match the chain's joint count."""


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix: skew(v) @ u == cross(v, u)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_from_axis_angle(w: np.ndarray) -> np.ndarray:
    """Rodrigues rotation for axis-angle vectors of shape (..., 3).

    Small angles use the second-order series so the map is smooth at w = 0.
    """
    w = np.asarray(w, dtype=float)
    angle = np.linalg.norm(w, axis=-1)
    small = angle < 1e-8

    k = np.zeros(w.shape[:-1] + (3, 3))
    k[..., 0, 1] = -w[..., 2]
    k[..., 0, 2] = w[..., 1]
    k[..., 1, 0] = w[..., 2]
    k[..., 1, 2] = -w[..., 0]
    k[..., 2, 0] = -w[..., 1]
    k[..., 2, 1] = w[..., 0]
    k2 = k @ k

    safe = np.where(small, 1.0, angle)
    # sin(a)/a and (1-cos(a))/a^2, with series values at a -> 0
    c1 = np.where(small, 1.0 - angle**2 / 6.0, np.sin(safe) / safe)
    c2 = np.where(small, 0.5 - angle**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)

    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + c1[..., None, None] * k + c2[..., None, None] * k2


def axis_angle_from_rotation(r: np.ndarray) -> np.ndarray:
    """Log map of a rotation matrix to an axis-angle 3-vector.

    Raises AngleNearPi within 1e-6 of the chart boundary, where the axis is
    no longer recoverable from the skew part.
    """
    r = np.asarray(r, dtype=float)
    cos_angle = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    angle = float(np.arccos(cos_angle))
    if angle >= np.pi - ANGLE_NEAR_PI_TOL:
        raise AngleNearPi(f"rotation angle {angle:.9f} within 1e-6 of pi")
    v = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if angle < 1e-4:
        # v = sin(angle) * axis; angle/sin(angle) via series
        return v * (1.0 + angle**2 / 6.0 + 7.0 * angle**4 / 360.0)
    return v * (angle / np.sin(angle))


def canonicalize_axis_angle(w: np.ndarray) -> np.ndarray:
    """Fold an axis-angle vector into the chart |w| < pi.

    Vectors with |w| in [pi, 2*pi) map to the antipodal representation
    w * (1 - 2*pi/|w|); larger magnitudes are reduced mod 2*pi first.
    """
    w = np.asarray(w, dtype=float)
    angle = float(np.linalg.norm(w))
    if angle < np.pi:
        return w.copy()
    if angle >= 2.0 * np.pi:
        reduced = angle % (2.0 * np.pi)
        if reduced == 0.0:
            return np.zeros(3)
        w = w * (reduced / angle)
        angle = reduced
        if angle < np.pi:
            return w
    out = w * (1.0 - 2.0 * np.pi / angle)
    if np.linalg.norm(out) >= np.pi:
        raise AngleNearPi("axis-angle magnitude is exactly pi; chart is ambiguous")
    return out


@dataclass(frozen=True)
class Pose:
    """Rigid transform: p_out = rotation @ p_in + translation.

    rotation must be orthonormal with determinant +1 (checked to 1e-9).
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if t.shape != (3,):
            raise ValueError(f"translation must be a 3-vector, got {t.shape}")
        if np.max(np.abs(r @ r.T - np.eye(3))) > ROTATION_TOL:
            raise ValueError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(r) - 1.0) > ROTATION_TOL:
            raise ValueError("rotation determinant is not +1 within 1e-9")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def compose(self, other: "Pose") -> "Pose":
        """self applied after other: (self * other)(p) = self(other(p))."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "Pose") -> "Pose":
        return self.compose(other)

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def apply(self, point: np.ndarray) -> np.ndarray:
        """Transform points of shape (3,) or (..., 3)."""
        p = np.asarray(point, dtype=float)
        return p @ self.rotation.T + self.translation

    def rotate(self, direction: np.ndarray) -> np.ndarray:
        """Rotate directions (no translation), shape (3,) or (..., 3)."""
        return np.asarray(direction, dtype=float) @ self.rotation.T

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True)
class LumpedErrorParams:
    """Tracked 6-DoF error state: translation b (m) and axis-angle w (rad).

    w is re-canonicalized into |w| < pi on construction.
    """

    b: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float).reshape(3)
        w = np.asarray(self.w, dtype=float).reshape(3)
        if np.linalg.norm(w) >= np.pi:
            w = canonicalize_axis_angle(w)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "w", w)

    def as_vector(self) -> np.ndarray:
        """Stacked (b, w) 6-vector."""
        return np.concatenate([self.b, self.w])

    @staticmethod
    def from_vector(v: np.ndarray) -> "LumpedErrorParams":
        v = np.asarray(v, dtype=float).reshape(6)
        return LumpedErrorParams(v[:3], v[3:])


def pose_from_params(p: LumpedErrorParams) -> Pose:
    """Pose with rotation exp(w) (Rodrigues) and translation b."""
    return Pose(rotation_from_axis_angle(p.w), p.b)


def params_from_pose(t: Pose) -> LumpedErrorParams:
    """Inverse of pose_from_params; raises AngleNearPi near the chart edge."""
    return LumpedErrorParams(t.translation, axis_angle_from_rotation(t.rotation))


@dataclass(frozen=True)
class Joint:
    """One joint: a fixed offset followed by motion about/along an axis.

    pose(q) = fixed_offset * (rotation about axis by q)  for revolute joints
    pose(q) = fixed_offset * (translation axis * q)      for prismatic joints
    """

    kind: str
    axis: np.ndarray
    fixed_offset: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        if self.kind not in ("revolute", "prismatic"):
            raise ValueError(f"unknown joint kind {self.kind!r}")
        a = np.asarray(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(a)
        if n == 0.0:
            raise ValueError("joint axis must be nonzero")
        object.__setattr__(self, "axis", a / n)

    def pose(self, q: float) -> Pose:
        if self.kind == "revolute":
            motion = Pose(rotation_from_axis_angle(self.axis * q), np.zeros(3))
        else:
            motion = Pose(np.eye(3), self.axis * q)
        return self.fixed_offset @ motion


def revolute(axis, fixed_offset: Pose | None = None) -> Joint:
    return Joint("revolute", np.asarray(axis, dtype=float), fixed_offset or Pose.identity())


def prismatic(axis, fixed_offset: Pose | None = None) -> Joint:
    return Joint("prismatic", np.asarray(axis, dtype=float), fixed_offset or Pose.identity())


@dataclass(frozen=True)
class KinematicChain:
    """Ordered joints plus an evaluation point in the final joint frame."""

    joints: tuple
    tip_point: np.ndarray

    def __post_init__(self):
        joints = tuple(self.joints)
        if not joints:
            raise ValueError("chain needs at least one joint")
        object.__setattr__(self, "joints", joints)
        object.__setattr__(
            self, "tip_point", np.asarray(self.tip_point, dtype=float).reshape(3)
        )

    def __len__(self) -> int:
        return len(self.joints)


def forward_kinematics(
    chain: KinematicChain,
    q,
    error: Pose,
    upto_joint: int | None = None,
) -> Pose:
    """Compose error * T_0(q_0) * ... * T_j(q_j).

    With upto_joint=None the product runs over the whole chain (the distal
    joint frame); otherwise it stops at that joint index, inclusive.
    """
    q = list(q)
    if len(q) != len(chain):
        raise JointCountMismatch(f"expected {len(chain)} joint values, got {len(q)}")
    last = len(chain) - 1 if upto_joint is None else upto_joint
    if not 0 <= last < len(chain):
        raise IndexError(f"joint index {last} out of range for {len(chain)} joints")
    pose = error
    for joint, value in zip(chain.joints[: last + 1], q[: last + 1]):
        pose = pose @ joint.pose(value)
    return pose


def tip_in_camera(chain: KinematicChain, q, error: Pose) -> np.ndarray:
    """Camera-frame position of the chain's tip point."""
    return forward_kinematics(chain, q, error).apply(chain.tip_point)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cu: float
    cv: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cu < self.width and 0 <= self.cv < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def diagonal(self) -> float:
        return float(np.hypot(self.width, self.height))

    @property
    def isotropic(self) -> bool:
        return abs(self.fx - self.fy) <= 1e-9 * self.fx


def pixel_to_unit(px, k: CameraIntrinsics) -> np.ndarray:
    """Map pixel coordinates to the unit camera: ((u-cu)/fx, (v-cv)/fy)."""
    px = np.asarray(px, dtype=float)
    return np.stack(
        [(px[..., 0] - k.cu) / k.fx, (px[..., 1] - k.cv) / k.fy], axis=-1
    )


def unit_to_pixel(xy, k: CameraIntrinsics) -> np.ndarray:
    """Exact inverse of pixel_to_unit."""
    xy = np.asarray(xy, dtype=float)
    return np.stack(
        [xy[..., 0] * k.fx + k.cu, xy[..., 1] * k.fy + k.cv], axis=-1
    )


def project_point(point_cam, k: CameraIntrinsics) -> np.ndarray:
    """Pinhole projection of camera-frame points (z > 0) to pixels."""
    p = np.asarray(point_cam, dtype=float)
    z = p[..., 2]
    if np.any(z <= 0):
        raise ValueError("point is behind the camera")
    return unit_to_pixel(np.stack([p[..., 0] / z, p[..., 1] / z], axis=-1), k)


# -- chain serialization ------------------------------------------------------

def _pose_to_rows(pose: Pose) -> list:
    return np.hstack([pose.rotation, pose.translation[:, None]]).tolist()


def _pose_from_rows(rows) -> Pose:
    m = np.asarray(rows, dtype=float)
    if m.shape != (3, 4):
        raise ValueError(f"fixed_offset must be 3x4 row-major, got {m.shape}")
    return Pose(m[:, :3], m[:, 3])


def chain_to_dict(chain: KinematicChain) -> dict:
    return {
        "joints": [
            {
                "type": j.kind,
                "axis": j.axis.tolist(),
                "fixed_offset": _pose_to_rows(j.fixed_offset),
            }
            for j in chain.joints
        ],
        "tip_point": chain.tip_point.tolist(),
    }


def chain_from_dict(doc: dict) -> KinematicChain:
    joints = [
        Joint(j["type"], np.asarray(j["axis"], dtype=float), _pose_from_rows(j["fixed_offset"]))
        for j in doc["joints"]
    ]
    return KinematicChain(tuple(joints), np.asarray(doc["tip_point"], dtype=float))


def load_chain(path) -> KinematicChain:
    with open(path) as f:
        return chain_from_dict(json.load(f))

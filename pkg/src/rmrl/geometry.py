"""Planar pose arithmetic, the pick-and-place reward, and plate localization math.

Everything here works in meters and radians. Conversion to millimeters and
degrees happens only where results are reported.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(psi: float) -> float:
    """Wrap an angle into (-pi, pi]; -pi itself maps to +pi."""
    wrapped = math.remainder(psi, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


@dataclass(frozen=True)
class PlanarPose:
    x: float
    y: float
    psi: float

    def __post_init__(self):
        for name in ("x", "y", "psi"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"PlanarPose.{name} must be finite, got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_array(cls, values) -> "PlanarPose":
        x, y, psi = (float(v) for v in values)
        return cls(x, y, psi)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.psi], dtype=np.float64)

    def normalized(self) -> "PlanarPose":
        return PlanarPose(self.x, self.y, wrap_angle(self.psi))


def compose_pick_pose(estimate: PlanarPose, action: PlanarPose) -> PlanarPose:
    """Commanded pick pose: estimated pose plus the predicted adjustment."""
    return PlanarPose(
        estimate.x + action.x,
        estimate.y + action.y,
        wrap_angle(estimate.psi + action.psi),
    )


def translation_error(final: PlanarPose, target: PlanarPose) -> float:
    return math.hypot(final.x - target.x, final.y - target.y)


def rotation_error(final: PlanarPose, target: PlanarPose) -> float:
    return 1.0 - math.cos(final.psi - target.psi)


def angular_difference(final: PlanarPose, target: PlanarPose) -> float:
    """Absolute yaw difference in radians, in [0, pi]."""
    return abs(wrap_angle(final.psi - target.psi))


def reward_from_errors(e_trans: float, e_rot: float) -> float:
    return math.exp(-(e_trans + e_rot))


def reward(final: PlanarPose, target: PlanarPose) -> float:
    return reward_from_errors(translation_error(final, target), rotation_error(final, target))


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class RigidTransform3D:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {R.shape}")
        if not np.allclose(R.T @ R, np.eye(3), rtol=0.0, atol=1e-9):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("rotation must have determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform3D":
        return cls(np.eye(3), np.zeros(3))

    def compose(self, other: "RigidTransform3D") -> "RigidTransform3D":
        """Return self * other, i.e. apply `other` first, then `self`."""
        return RigidTransform3D(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def as_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T


def rotation_about_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def project(p_camera, K: CameraIntrinsics) -> tuple[float, float]:
    """Pinhole projection of a camera-frame point to pixel coordinates."""
    X, Y, Z = (float(v) for v in p_camera)
    if Z <= 0:
        raise ValueError(f"point must lie in front of the camera, got Z={Z}")
    return K.fx * X / Z + K.cx, K.fy * Y / Z + K.cy


def backproject(u: float, v: float, Z: float, K: CameraIntrinsics) -> np.ndarray:
    """Lift pixel (u, v) at depth Z into the camera frame."""
    if not Z > 0:
        raise ValueError(f"depth must be positive, got Z={Z}")
    return np.array([(u - K.cx) * Z / K.fx, (v - K.cy) * Z / K.fy, Z])


def camera_to_world(p_camera, T: RigidTransform3D) -> np.ndarray:
    return T.rotation @ np.asarray(p_camera, dtype=np.float64) + T.translation


@dataclass(frozen=True)
class MaskedDepthImage:
    depth: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=np.float64)
        mask = np.asarray(self.mask).astype(bool)
        if depth.shape != mask.shape or depth.ndim != 2:
            raise ValueError(f"depth {depth.shape} and mask {mask.shape} must be matching 2-D arrays")
        if np.any(depth < 0) or not np.all(np.isfinite(depth)):
            raise ValueError("depth must be finite and non-negative")
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "mask", mask)


def mask_mean_depth(img: MaskedDepthImage) -> float:
    """Mean depth over masked pixels; zero-depth holes are skipped."""
    values = img.depth[img.mask & (img.depth > 0)]
    if values.size == 0:
        raise ValueError("mask contains no pixels with valid depth")
    return float(values.mean())


def mask_center(mask: np.ndarray) -> tuple[float, float]:
    """Bounding-box center (u, v) of a binary mask, u along columns."""
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        raise ValueError("empty mask")
    return (cols.min() + cols.max()) / 2.0, (rows.min() + rows.max()) / 2.0


class DegenerateOrientationError(ValueError):
    """Raised when a mask has no dominant principal axis."""


def pca_yaw(mask: np.ndarray, *, isotropy_tol: float = 1e-9) -> float:
    """Yaw of the mask's first principal axis, in (-pi/2, pi/2].

    Pixel coordinates are taken as (x = column, y = row). The axis has a
    180 degree ambiguity, so the result is folded into a half-open range.
    ``isotropy_tol`` is relative to the larger eigenvalue.
    """
    rows, cols = np.nonzero(np.asarray(mask))
    if rows.size < 2:
        raise ValueError("pca_yaw needs at least two set pixels")
    pts = np.stack([cols, rows], axis=1).astype(np.float64)
    pts -= pts.mean(axis=0)
    cov = pts.T @ pts / len(pts)
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals[1] - eigvals[0] <= isotropy_tol * max(eigvals[1], 1.0):
        raise DegenerateOrientationError("degenerate orientation: mask is isotropic")
    vx, vy = eigvecs[:, 1]
    yaw = math.atan2(vy, vx)
    if yaw <= -math.pi / 2:
        yaw += math.pi
    elif yaw > math.pi / 2:
        yaw -= math.pi
    return yaw


def rasterize_rectangle(shape, center, length: float, width: float, yaw: float) -> np.ndarray:
    """Boolean mask of a filled rectangle, long side `length` rotated by `yaw`."""
    H, W = shape
    rows, cols = np.mgrid[0:H, 0:W]
    dx = cols - center[0]
    dy = rows - center[1]
    c, s = math.cos(yaw), math.sin(yaw)
    along = dx * c + dy * s
    across = -dx * s + dy * c
    return (np.abs(along) <= length / 2) & (np.abs(across) <= width / 2)


def localize(
    depth_image: MaskedDepthImage, K: CameraIntrinsics, camera_to_world_T: RigidTransform3D
) -> tuple[np.ndarray, float]:
    """Full plate localization: world position of the mask center and PCA yaw."""
    u, v = mask_center(depth_image.mask)
    Z = mask_mean_depth(depth_image)
    p_world = camera_to_world(backproject(u, v, Z, K), camera_to_world_T)
    return p_world, pca_yaw(depth_image.mask)

"""Pinhole camera models, RGBD lifting, rigid transforms and z-buffered splatting.

Conventions used throughout the package:

* Right-handed camera frame: +x right, +y down, +z forward.
* Image origin at the top-left; pixel (row, col) samples the scene along the
  ray through image coordinates (u, v) = (col, row).  Lifting and splatting
  are exact inverses under this convention, which is what makes the identity
  round-trip bitwise.
* Ray maps use pixel centers at (col + 0.5, row + 0.5); they describe ray
  bundles rather than sample sites, so the half-pixel offset applies there.
* A ``CameraPose`` maps source-camera (world) coordinates into target-camera
  coordinates: p_target = R @ p + t.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError

# Points closer than this to the camera plane are culled before projection.
Z_NEAR = 1e-4

ORTHONORMALITY_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixel units."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image dimensions must be >= 1, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width):
            raise ValueError(f"cx={self.cx} outside [0, {self.width})")
        if not (0 <= self.cy < self.height):
            raise ValueError(f"cy={self.cy} outside [0, {self.height})")

    def scaled_focal(self, factor: float) -> "CameraIntrinsics":
        """Same camera with fx, fy multiplied by ``factor`` (focal zoom)."""
        return CameraIntrinsics(self.fx * factor, self.fy * factor,
                                self.cx, self.cy, self.width, self.height)


@dataclass(frozen=True)
class CameraPose:
    """Rigid transform taking source-camera coordinates to target-camera coordinates."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        err = np.max(np.abs(r.T @ r - np.eye(3)))
        if err > ORTHONORMALITY_TOL:
            raise ValueError(f"rotation is not orthonormal: max |R^T R - I| = {err:.3e}")
        if np.linalg.det(r) < 0:
            raise ValueError("rotation must have determinant +1 (no reflections)")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "CameraPose":
        return CameraPose(np.eye(3), np.zeros(3))

    def compose(self, outer: "CameraPose") -> "CameraPose":
        """Pose equal to applying ``self`` first, then ``outer``."""
        return CameraPose(outer.rotation @ self.rotation,
                          outer.rotation @ self.translation + outer.translation)

    def inverse(self) -> "CameraPose":
        return CameraPose(self.rotation.T, -self.rotation.T @ self.translation)

    def camera_center(self) -> np.ndarray:
        """Target-camera center expressed in source coordinates."""
        return -self.rotation.T @ self.translation


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel metric depth with an explicit validity grid.

    Entries that are non-finite or <= 0 are never valid; ``validity`` may
    additionally mark finite positive entries as unknown.
    """

    values: np.ndarray
    validity: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        ok = np.asarray(self.validity, dtype=bool)
        if v.ndim != 2:
            raise ValueError(f"depth values must be HxW, got shape {v.shape}")
        if ok.shape != v.shape:
            raise DimensionMismatchError("validity", v.shape, ok.shape, "DepthMap")
        bad = ok & ~(np.isfinite(v) & (v > 0))
        if bad.any():
            raise ValueError(f"{int(bad.sum())} valid depth entries are not finite and positive")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "validity", ok)

    @staticmethod
    def from_values(values: np.ndarray) -> "DepthMap":
        """Build a depth map where finite positive entries are valid."""
        v = np.asarray(values, dtype=np.float64)
        return DepthMap(v, np.isfinite(v) & (v > 0))

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class Frame:
    """One RGB image with channels in [0, 1], shape (H, W, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim != 3 or p.shape[2] != 3:
            raise ValueError(f"frame must be HxWx3, got shape {p.shape}")
        if not np.isfinite(p).all():
            raise ValueError("frame contains non-finite values")
        if p.min() < 0.0 or p.max() > 1.0:
            raise ValueError(f"frame channels outside [0, 1]: range [{p.min()}, {p.max()}]")
        object.__setattr__(self, "pixels", p)

    @property
    def shape(self):
        return self.pixels.shape[:2]


@dataclass(frozen=True)
class PointCloud:
    """Colored 3D points lifted from one RGBD frame.

    Stored struct-of-arrays: ``positions`` (N, 3), ``colors`` (N, 3) and
    ``source_pixels`` (N, 2) as (row, col) into the originating frame of
    shape ``source_shape``.  Freshly lifted clouds have strictly positive z;
    after a rigid transform points may move behind the camera — they are kept
    (see :meth:`forward_flags`) and culled at projection time.
    """

    positions: np.ndarray
    colors: np.ndarray
    source_pixels: np.ndarray
    source_shape: tuple[int, int]

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        col = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
        pix = np.asarray(self.source_pixels, dtype=np.int64).reshape(-1, 2)
        if not (len(pos) == len(col) == len(pix)):
            raise ValueError("positions, colors and source_pixels must have equal length")
        if not np.isfinite(pos).all():
            raise ValueError("point positions contain non-finite coordinates")
        h, w = self.source_shape
        if len(pix) and ((pix[:, 0] < 0).any() or (pix[:, 0] >= h).any()
                         or (pix[:, 1] < 0).any() or (pix[:, 1] >= w).any()):
            raise ValueError(f"source_pixel indices outside frame bounds {h}x{w}")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "colors", col)
        object.__setattr__(self, "source_pixels", pix)

    def __len__(self):
        return len(self.positions)

    def forward_flags(self) -> np.ndarray:
        """Boolean flags, True where a point still lies in front of the camera."""
        return self.positions[:, 2] > 0


@dataclass(frozen=True)
class Raymap:
    """Per-pixel ray origins and unit directions relative to a reference camera."""

    origins: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origins, dtype=np.float64)
        d = np.asarray(self.directions, dtype=np.float64)
        if o.ndim != 3 or o.shape[2] != 3 or d.shape != o.shape:
            raise ValueError(f"raymap arrays must be HxWx3 and equal, got {o.shape} / {d.shape}")
        norms = np.linalg.norm(d, axis=2)
        if np.max(np.abs(norms - 1.0)) > 1e-9:
            raise ValueError("raymap directions must be unit vectors")
        object.__setattr__(self, "origins", o)
        object.__setattr__(self, "directions", d)


def lift_rgbd(frame: Frame, depth: DepthMap, k: CameraIntrinsics) -> PointCloud:
    """Back-project every valid depth pixel into a camera-frame point cloud.

    Pixel (row v, col u) with depth d lifts to ((u - cx) d / fx,
    (v - cy) d / fy, d); the pixel color is carried along unchanged.
    """
    h, w = depth.shape
    if frame.shape != (h, w):
        axis = "height" if frame.shape[0] != h else "width"
        raise DimensionMismatchError(axis, (h, w), frame.shape, "frame vs depth")
    if (k.height, k.width) != (h, w):
        axis = "height" if k.height != h else "width"
        raise DimensionMismatchError(axis, (k.height, k.width), (h, w), "intrinsics vs depth")

    rows, cols = np.nonzero(depth.validity)
    d = depth.values[rows, cols]
    x = (cols - k.cx) * d / k.fx
    y = (rows - k.cy) * d / k.fy
    positions = np.stack([x, y, d], axis=1)
    colors = frame.pixels[rows, cols]
    source_pixels = np.stack([rows, cols], axis=1)
    return PointCloud(positions, colors, source_pixels, (h, w))


def apply_pose(cloud: PointCloud, pose: CameraPose) -> PointCloud:
    """Rigidly transform all points: p -> R @ p + t.

    Colors and source pixels are preserved.  Points whose transformed z is
    non-positive are retained; projection culls them.
    """
    positions = cloud.positions @ pose.rotation.T + pose.translation
    return PointCloud(positions, cloud.colors, cloud.source_pixels, cloud.source_shape)


def _disc_offsets(radius: int) -> np.ndarray:
    """Integer (dy, dx) offsets inside a filled disc of the given pixel radius."""
    r = int(radius)
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    keep = dy * dy + dx * dx <= r * r
    return np.stack([dy[keep], dx[keep]], axis=1)


def project_splat(cloud: PointCloud, k: CameraIntrinsics,
                  splat_radius: int = 1, z_near: float = Z_NEAR):
    """Forward-project a point cloud onto the image plane with a z-buffer.

    Each point in front of ``z_near`` projects to (fx x / z + cx,
    fy y / z + cy) and rounds to the nearest pixel.  Conflicts between points
    projecting to the same pixel resolve to the nearest depth; exact ties go
    to the lower point index, so output is deterministic.  With
    ``splat_radius`` > 0 each point also stamps a filled disc, and disc
    periphery fills only pixels no point projects to directly: that closes
    the sampling gaps that open where the reprojection magnifies, without
    smearing foreground edges across already-covered background.

    Returns (Frame, mask, DepthMap) where mask is a (H, W) bool array that is
    True exactly where at least one point landed, and the depth map holds the
    winning depth per covered pixel.
    """
    if splat_radius < 0:
        raise ValueError(f"splat_radius must be >= 0, got {splat_radius}")
    h, w = k.height, k.width
    image = np.zeros((h, w, 3), dtype=np.float64)
    mask = np.zeros((h, w), dtype=bool)
    depth_vals = np.zeros((h, w), dtype=np.float64)
    if len(cloud) == 0:
        return Frame(image), mask, DepthMap(depth_vals, mask.copy())

    z = cloud.positions[:, 2]
    keep = z > z_near
    if not keep.any():
        return Frame(image), mask, DepthMap(depth_vals, mask.copy())

    idx = np.nonzero(keep)[0]
    x, y, z = cloud.positions[idx, 0], cloud.positions[idx, 1], cloud.positions[idx, 2]
    u = np.rint(k.fx * x / z + k.cx).astype(np.int64)
    v = np.rint(k.fy * y / z + k.cy).astype(np.int64)

    offsets = _disc_offsets(splat_radius)
    n, m = len(idx), len(offsets)
    uu = (u[None, :] + offsets[:, 1:2]).ravel()
    vv = (v[None, :] + offsets[:, 0:1]).ravel()
    zz = np.broadcast_to(z, (m, n)).ravel()
    ii = np.broadcast_to(idx, (m, n)).ravel()
    periphery = np.repeat((offsets != 0).any(axis=1), n)

    inside = (uu >= 0) & (uu < w) & (vv >= 0) & (vv < h)
    uu, vv, zz, ii = uu[inside], vv[inside], zz[inside], ii[inside]
    periphery = periphery[inside]
    if len(uu) == 0:
        return Frame(image), mask, DepthMap(depth_vals, mask.copy())

    # Group candidates by pixel: direct projections before disc periphery,
    # then nearest depth, then point index.  The first entry of each group is
    # the deterministic winner.
    pix = vv * w + uu
    order = np.lexsort((ii, zz, periphery, pix))
    pix, zz, ii = pix[order], zz[order], ii[order]
    first = np.ones(len(pix), dtype=bool)
    first[1:] = pix[1:] != pix[:-1]
    win_pix, win_z, win_i = pix[first], zz[first], ii[first]

    rows, cols = win_pix // w, win_pix % w
    image[rows, cols] = cloud.colors[win_i]
    mask[rows, cols] = True
    depth_vals[rows, cols] = win_z
    return Frame(image), mask, DepthMap(depth_vals, mask.copy())


def render_view(frame: Frame, depth: DepthMap, k_src: CameraIntrinsics,
                k_dst: CameraIntrinsics, pose: CameraPose,
                splat_radius: int = 1):
    """Re-render one RGBD frame from a new camera: lift, transform, splat.

    Returns (Frame, mask); the intermediate depth buffer is discarded.
    """
    cloud = apply_pose(lift_rgbd(frame, depth, k_src), pose)
    out_frame, mask, _ = project_splat(cloud, k_dst, splat_radius)
    return out_frame, mask


def compute_raymap(k: CameraIntrinsics, pose_relative_to_first: CameraPose) -> Raymap:
    """Per-pixel ray origins/directions of a camera, in the first camera's frame.

    ``pose_relative_to_first`` maps first-camera coordinates into the target
    camera's coordinates.  Rays pass through pixel centers (col + 0.5,
    row + 0.5); origins all equal the target camera center expressed in the
    first camera's frame.
    """
    pose = pose_relative_to_first
    center = pose.camera_center()
    cols = np.arange(k.width, dtype=np.float64) + 0.5
    rows = np.arange(k.height, dtype=np.float64) + 0.5
    x = (cols[None, :] - k.cx) / k.fx
    y = (rows[:, None] - k.cy) / k.fy
    dirs_cam = np.stack([np.broadcast_to(x, (k.height, k.width)),
                         np.broadcast_to(y, (k.height, k.width)),
                         np.ones((k.height, k.width))], axis=2)
    dirs = dirs_cam @ pose.rotation  # == each direction rotated by R^T
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    origins = np.broadcast_to(center, (k.height, k.width, 3)).copy()
    return Raymap(origins, dirs)

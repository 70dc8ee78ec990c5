"""Analytic test scenes and a ray-cast reference renderer.

The renderer here exists to check the splat pipeline against ground truth:
it intersects camera rays with spheres, boxes and a background plane in
closed form and shares no projection code with :mod:`recam.geometry`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraIntrinsics, CameraPose, DepthMap, Frame

_MISS = np.inf


@dataclass(frozen=True)
class SceneObject:
    """One rigid object with a linear center trajectory center0 + t * velocity.

    ``size`` is the radius for spheres and the (hx, hy, hz) half extents for
    axis-aligned boxes.  Colors are flat RGB in [0, 1].
    """

    shape: str
    center0: np.ndarray
    velocity: np.ndarray
    size: np.ndarray
    color: np.ndarray

    def __post_init__(self):
        if self.shape not in ("sphere", "box"):
            raise ValueError(f"shape must be 'sphere' or 'box', got {self.shape!r}")
        object.__setattr__(self, "center0", np.asarray(self.center0, dtype=np.float64).reshape(3))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=np.float64).reshape(3))
        size = np.atleast_1d(np.asarray(self.size, dtype=np.float64))
        if self.shape == "sphere" and size.shape != (1,):
            raise ValueError("sphere size must be a scalar radius")
        if self.shape == "box" and size.shape != (3,):
            raise ValueError("box size must be three half extents")
        if (size <= 0).any():
            raise ValueError("object size must be positive")
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "color", np.asarray(self.color, dtype=np.float64).reshape(3))

    def center(self, time: float) -> np.ndarray:
        return self.center0 + time * self.velocity

    def bounding_radius(self) -> float:
        return float(self.size[0]) if self.shape == "sphere" else float(np.linalg.norm(self.size))


@dataclass(frozen=True)
class SyntheticScene:
    """Objects in front of a reference camera plus a constant-depth backdrop."""

    objects: tuple[SceneObject, ...]
    background_depth: float
    background_color: np.ndarray
    frames: int

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "background_color",
                           np.asarray(self.background_color, dtype=np.float64).reshape(3))
        if self.background_depth <= 0:
            raise ValueError("background depth must be positive")
        if self.frames < 1:
            raise ValueError("scene duration must be at least one frame")
        for i, obj in enumerate(self.objects):
            for t in (0, self.frames - 1):
                if obj.center(t)[2] - obj.bounding_radius() <= 0:
                    raise ValueError(f"object {i} is not in front of the reference camera at t={t}")

    def mean_depth(self) -> float:
        """Average object center depth at t=0; handy for sizing test poses."""
        if not self.objects:
            return self.background_depth
        return float(np.mean([obj.center0[2] for obj in self.objects]))


def _sphere_hits(origin, dirs, center, radius):
    """Smallest positive ray parameter per pixel, inf where the ray misses."""
    oc = origin - center
    a = np.einsum("hwc,hwc->hw", dirs, dirs)
    b = 2.0 * np.einsum("hwc,c->hw", dirs, oc)
    e = float(oc @ oc - radius * radius)
    disc = b * b - 4.0 * a * e
    hit = disc >= 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    s_near = (-b - sq) / (2.0 * a)
    s_far = (-b + sq) / (2.0 * a)
    s = np.where(s_near > 0, s_near, s_far)
    return np.where(hit & (s > 0), s, _MISS)


def _box_hits(origin, dirs, center, half):
    """Slab-test ray parameter per pixel for an axis-aligned box."""
    lo = center - half
    hi = center + half
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - origin) / dirs
        t2 = (hi - origin) / dirs
    # Rays parallel to a slab: hit only if the origin lies between the planes.
    parallel = dirs == 0.0
    inside = (origin >= lo) & (origin <= hi)
    t1 = np.where(parallel, np.where(inside, -np.inf, np.inf), t1)
    t2 = np.where(parallel, np.where(inside, np.inf, -np.inf), t2)
    t_near = np.max(np.minimum(t1, t2), axis=2)
    t_far = np.min(np.maximum(t1, t2), axis=2)
    hit = (t_near <= t_far) & (t_far > 0)
    s = np.where(t_near > 0, t_near, t_far)
    return np.where(hit & (s > 0), s, _MISS)


def oracle_render(scene: SyntheticScene, k: CameraIntrinsics, pose: CameraPose,
                  time: float = 0.0) -> tuple[Frame, DepthMap]:
    """Render the scene by analytic ray casting.

    ``pose`` maps scene (reference-camera) coordinates into the render
    camera's coordinates.  Rays are parameterized so that the intersection
    parameter equals camera-frame depth; pixels whose ray hits nothing are
    marked invalid in the returned depth map.
    """
    h, w = k.height, k.width
    origin = pose.camera_center()
    cols = np.arange(w, dtype=np.float64)
    rows = np.arange(h, dtype=np.float64)
    x = (cols[None, :] - k.cx) / k.fx
    y = (rows[:, None] - k.cy) / k.fy
    dirs_cam = np.stack([np.broadcast_to(x, (h, w)),
                         np.broadcast_to(y, (h, w)),
                         np.ones((h, w))], axis=2)
    # World direction with unit camera-z component: ray parameter == depth.
    dirs = dirs_cam @ pose.rotation

    layers = []
    colors = []
    for obj in scene.objects:
        center = obj.center(time)
        if obj.shape == "sphere":
            layers.append(_sphere_hits(origin, dirs, center, float(obj.size[0])))
        else:
            layers.append(_box_hits(origin, dirs, center, obj.size))
        colors.append(obj.color)

    # Background plane z = background_depth in scene coordinates.
    dz = dirs[:, :, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        s_bg = (scene.background_depth - origin[2]) / dz
    layers.append(np.where((dz != 0) & (s_bg > 0), s_bg, _MISS))
    colors.append(scene.background_color)

    depth = np.stack(layers, axis=0)
    winner = np.argmin(depth, axis=0)
    best = np.take_along_axis(depth, winner[None], axis=0)[0]
    valid = np.isfinite(best)

    palette = np.stack(colors, axis=0)
    pixels = palette[winner]
    pixels[~valid] = 0.0
    values = np.where(valid, best, 0.0)
    return Frame(pixels), DepthMap(values, valid)


def make_random_scene(seed: int, n_objects: int, frames: int,
                      k: CameraIntrinsics | None = None,
                      depth_range: tuple[float, float] = (4.0, 9.0),
                      size_range: tuple[float, float] = (0.35, 0.8),
                      palette: tuple[float, float] = (0.05, 0.95),
                      velocity_scale: float = 1.0) -> SyntheticScene:
    """Seeded random scene with moving spheres and boxes inside the view frustum.

    ``size_range`` is relative to depth (objects farther away are larger in
    scene units, similar on screen); ``palette`` bounds the flat colors.
    """
    if not 1 <= n_objects <= 22:
        raise ValueError(f"n_objects must be in [1, 22], got {n_objects}")
    rng = np.random.default_rng(seed)
    if k is None:
        k = CameraIntrinsics(100.0, 100.0, 64.0, 64.0, 128, 128)

    objects = []
    for _ in range(n_objects):
        z = rng.uniform(*depth_range)
        # Keep centers well inside the frustum so objects stay visible.
        x_span = 0.65 * z * (k.width / 2) / k.fx
        y_span = 0.65 * z * (k.height / 2) / k.fy
        center = np.array([rng.uniform(-x_span, x_span), rng.uniform(-y_span, y_span), z])
        velocity = rng.uniform(-0.04, 0.04, size=3) * np.array([1.0, 1.0, 0.5]) * velocity_scale
        color = rng.uniform(*palette, size=3)
        scale = z / 6.0
        if rng.random() < 0.5:
            objects.append(SceneObject("sphere", center, velocity,
                                       np.array([rng.uniform(*size_range) * scale]), color))
        else:
            objects.append(SceneObject("box", center, velocity,
                                       rng.uniform(size_range[0] * 0.8, size_range[1] * 0.8,
                                                   size=3) * scale, color))
    background = rng.uniform(0.7, 0.9, size=3)
    return SyntheticScene(tuple(objects), background_depth=14.0,
                          background_color=background, frames=frames)

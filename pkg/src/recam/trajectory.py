"""Declarative camera-move programs compiled to per-frame (intrinsics, pose).

A trajectory is a list of primitives (pan, tilt, zoom, pedestal, truck,
dolly, orbit) that run simultaneously, each interpolated over the whole clip
with its own easing.  Frame 0 is always the source camera: identity pose and
source intrinsics.

Sign conventions (camera frame: +x right, +y down, +z forward):

* pan / tilt: yaw about +y / pitch about +x applied to the point cloud, in
  degrees.
* pedestal / truck / dolly: the point cloud translates by ``magnitude`` along
  +y / +x / +z scene units (equivalently the camera moves the opposite way).
* zoom: focal lengths scale to ``1 + s (magnitude - 1)``; no parallax.
* orbit: the camera rides a circle of radius ``pivot_depth`` around the pivot
  (0, 0, pivot_depth) while looking at it, up = (0, -1, 0); positive angles
  move the camera toward -x.

Simultaneous primitives compose translation-first, then rotations in listed
order, so combined moves stay easy to reason about.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import TrajectoryParseError
from .geometry import CameraIntrinsics, CameraPose

KINDS = ("pan", "tilt", "zoom", "pedestal", "truck", "dolly", "orbit")
EASINGS = ("linear", "smoothstep")

# JSON magnitude key per primitive kind.
_MAGNITUDE_KEY = {
    "pan": "deg", "tilt": "deg", "orbit": "deg",
    "pedestal": "units", "truck": "units", "dolly": "units",
    "zoom": "scale",
}


def ease(u: float, mode: str) -> float:
    """Interpolation curve on [0, 1]: 'linear' is u, 'smoothstep' is 3u^2 - 2u^3."""
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"ease argument must be in [0, 1], got {u}")
    if mode == "linear":
        return u
    if mode == "smoothstep":
        return u * u * (3.0 - 2.0 * u)
    raise ValueError(f"unknown easing mode {mode!r}")


@dataclass(frozen=True)
class TrajectoryPrimitive:
    kind: str
    magnitude: float
    easing: str = "linear"
    pivot_depth: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        if self.easing not in EASINGS:
            raise ValueError(f"unknown easing {self.easing!r}")
        if not math.isfinite(self.magnitude):
            raise ValueError(f"magnitude must be finite, got {self.magnitude}")
        if self.kind == "zoom" and self.magnitude <= 0:
            raise ValueError(f"zoom magnitude must be > 0, got {self.magnitude}")
        if self.kind == "orbit":
            if self.pivot_depth is None or not (self.pivot_depth > 0):
                raise ValueError(f"orbit requires pivot_depth > 0, got {self.pivot_depth}")
        elif self.pivot_depth is not None:
            raise ValueError(f"pivot_depth only applies to orbit, not {self.kind!r}")


@dataclass(frozen=True)
class TrajectorySpec:
    primitives: tuple[TrajectoryPrimitive, ...]
    frame_count: int

    def __post_init__(self):
        if self.frame_count < 1:
            raise ValueError(f"frames must be >= 1, got {self.frame_count}")
        object.__setattr__(self, "primitives", tuple(self.primitives))


@dataclass(frozen=True)
class CompiledTrajectory:
    """Sequence of per-frame camera records produced by :func:`compile_trajectory`."""

    per_frame: tuple

    def __post_init__(self):
        first = self.per_frame[0]
        if not np.array_equal(first.pose.rotation, np.eye(3)) or first.pose.translation.any():
            raise ValueError("frame 0 of a compiled trajectory must have the identity pose")

    def __len__(self):
        return len(self.per_frame)

    def __getitem__(self, i):
        return self.per_frame[i]


@dataclass(frozen=True)
class FrameCamera:
    intrinsics: CameraIntrinsics
    pose: CameraPose


def _yaw(deg: float) -> np.ndarray:
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _pitch(deg: float) -> np.ndarray:
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _orbit_pose(angle_deg: float, pivot_depth: float) -> tuple[np.ndarray, np.ndarray]:
    """Rotation and camera center for an orbit around (0, 0, pivot_depth).

    Positive angles move the camera toward -x; the camera looks at the pivot
    with up = (0, -1, 0).  Returns (R, center) with center in source coords;
    the pose applied to points is p -> R (p - center).
    """
    a = math.radians(angle_deg)
    rho = pivot_depth
    pivot = np.array([0.0, 0.0, rho])
    center = pivot + rho * np.array([-math.sin(a), 0.0, -math.cos(a)])
    forward = pivot - center
    forward /= np.linalg.norm(forward)
    up = np.array([0.0, -1.0, 0.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward], axis=0)
    return rot, center


def compile_trajectory(spec: TrajectorySpec, k_src: CameraIntrinsics) -> CompiledTrajectory:
    """Expand a trajectory spec into per-frame intrinsics and poses.

    At frame i the shared progress for a primitive is s = ease(i / (N - 1));
    a single-frame clip compiles to the identity camera regardless of the
    primitive list.
    """
    n = spec.frame_count
    records = []
    for i in range(n):
        u = 0.0 if n == 1 else i / (n - 1)
        rot = np.eye(3)
        t_src = np.zeros(3)
        focal_scale = 1.0
        for prim in spec.primitives:
            s = ease(u, prim.easing)
            if prim.kind == "pan":
                rot = _yaw(s * prim.magnitude) @ rot
            elif prim.kind == "tilt":
                rot = _pitch(s * prim.magnitude) @ rot
            elif prim.kind == "truck":
                t_src = t_src + np.array([s * prim.magnitude, 0.0, 0.0])
            elif prim.kind == "pedestal":
                t_src = t_src + np.array([0.0, s * prim.magnitude, 0.0])
            elif prim.kind == "dolly":
                t_src = t_src + np.array([0.0, 0.0, s * prim.magnitude])
            elif prim.kind == "zoom":
                focal_scale *= 1.0 + s * (prim.magnitude - 1.0)
            elif prim.kind == "orbit":
                r_o, center = _orbit_pose(s * prim.magnitude, prim.pivot_depth)
                rot = r_o @ rot
                t_src = t_src - center
        # Translate in the source frame first, then rotate.
        pose = CameraPose(rot, rot @ t_src)
        if i == 0:
            pose = CameraPose.identity()
            intr = k_src
        else:
            intr = k_src.scaled_focal(focal_scale) if focal_scale != 1.0 else k_src
        records.append(FrameCamera(intr, pose))
    return CompiledTrajectory(tuple(records))


def _require(obj: dict, key: str, move_index: int | None = None):
    if key not in obj:
        raise TrajectoryParseError("missing field", field=key, move_index=move_index)
    return obj[key]


def parse_trajectory(text: bytes | str) -> TrajectorySpec:
    """Parse the trajectory JSON wire format.

    Top level: ``{"frames": int, "moves": [...]}`` where each move is
    ``{"kind": str, "deg"|"units"|"scale": number, "ease": str,
    "pivot_depth"?: number}``.  Raises :class:`TrajectoryParseError` with
    field context on any malformed input.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise TrajectoryParseError(f"invalid JSON at line {e.lineno} col {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise TrajectoryParseError(f"top level must be an object, got {type(doc).__name__}")

    frames = _require(doc, "frames")
    if not isinstance(frames, int) or isinstance(frames, bool):
        raise TrajectoryParseError("must be an integer", field="frames")
    if frames < 1:
        raise TrajectoryParseError("frames must be >= 1", field="frames")

    moves = _require(doc, "moves")
    if not isinstance(moves, list):
        raise TrajectoryParseError("must be a list", field="moves")

    primitives = []
    for i, move in enumerate(moves):
        if not isinstance(move, dict):
            raise TrajectoryParseError("each move must be an object", move_index=i)
        kind = _require(move, "kind", i)
        if kind not in KINDS:
            raise TrajectoryParseError(f"unknown kind {kind!r}", field="kind", move_index=i)
        mag_key = _MAGNITUDE_KEY[kind]
        magnitude = _require(move, mag_key, i)
        if not isinstance(magnitude, (int, float)) or isinstance(magnitude, bool) \
                or not math.isfinite(magnitude):
            raise TrajectoryParseError("must be a finite number", field=mag_key, move_index=i)
        easing = _require(move, "ease", i)
        if easing not in EASINGS:
            raise TrajectoryParseError(f"unknown easing {easing!r}", field="ease", move_index=i)
        pivot_depth = None
        if kind == "orbit":
            pivot_depth = _require(move, "pivot_depth", i)
            if not isinstance(pivot_depth, (int, float)) or isinstance(pivot_depth, bool) \
                    or not math.isfinite(pivot_depth) or pivot_depth <= 0:
                raise TrajectoryParseError("pivot_depth must be > 0",
                                           field="pivot_depth", move_index=i)
        try:
            primitives.append(TrajectoryPrimitive(kind, float(magnitude), easing,
                                                  None if pivot_depth is None else float(pivot_depth)))
        except ValueError as e:
            raise TrajectoryParseError(str(e), move_index=i) from e
    return TrajectorySpec(tuple(primitives), frames)


def serialize_trajectory(spec: TrajectorySpec) -> bytes:
    """Inverse of :func:`parse_trajectory`; output parses back to an equal spec."""
    moves = []
    for prim in spec.primitives:
        move = {"kind": prim.kind,
                _MAGNITUDE_KEY[prim.kind]: prim.magnitude,
                "ease": prim.easing}
        if prim.kind == "orbit":
            move["pivot_depth"] = prim.pivot_depth
        moves.append(move)
    return json.dumps({"frames": spec.frame_count, "moves": moves}, indent=2).encode("utf-8")

"""Stage-1 orchestration: render a clip through a compiled camera trajectory.

The output pair (anchor video, validity masks) is the training input for the
masked fine-tuning stage: mask value 1 marks pixels covered by reprojected
source content, 0 marks regions the new camera revealed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .geometry import CameraIntrinsics, DepthMap, Frame, render_view
from .trajectory import CompiledTrajectory


@dataclass(frozen=True)
class VideoClip:
    """A sequence of frames with uniform dimensions."""

    frames: tuple[Frame, ...]

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("a clip needs at least one frame")
        shape = frames[0].shape
        for i, f in enumerate(frames):
            if f.shape != shape:
                raise DimensionMismatchError("frame", shape, f.shape, f"clip frame {i}")
        object.__setattr__(self, "frames", frames)

    def __len__(self):
        return len(self.frames)

    @property
    def shape(self):
        return self.frames[0].shape

    def as_array(self) -> np.ndarray:
        """Stacked pixels, shape (N, H, W, 3)."""
        return np.stack([f.pixels for f in self.frames], axis=0)

    @staticmethod
    def from_array(arr: np.ndarray) -> "VideoClip":
        return VideoClip(tuple(Frame(a) for a in np.asarray(arr)))


class AnchorVideo(VideoClip):
    """Rendered clip under the new trajectory; same dimensions as its source."""


@dataclass(frozen=True)
class MaskSequence:
    """Per-frame binary validity grids, shape (N, H, W), values {0, 1}."""

    masks: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.masks)
        if m.ndim != 3:
            raise ValueError(f"masks must be NxHxW, got shape {m.shape}")
        if m.dtype != bool:
            unique = np.unique(m)
            if not np.isin(unique, (0, 1)).all():
                raise ValueError("mask values must be 0 or 1")
            m = m.astype(bool)
        object.__setattr__(self, "masks", m)

    def __len__(self):
        return self.masks.shape[0]

    def valid_fractions(self) -> np.ndarray:
        """Fraction of valid pixels per frame."""
        return self.masks.mean(axis=(1, 2))


def render_anchor_video(clip: VideoClip, depths: list[DepthMap],
                        traj: CompiledTrajectory,
                        splat_radius: int = 1) -> tuple[AnchorVideo, MaskSequence]:
    """Render every frame of ``clip`` through its per-frame camera.

    Frame i is ``render_view(clip[i], depths[i], k_src, traj[i].intrinsics,
    traj[i].pose, splat_radius)`` with the source intrinsics taken from the
    trajectory's frame 0.  Masks are the raw per-frame splat coverage, with
    no postprocessing.
    """
    n = len(clip)
    if len(depths) != n or len(traj) != n:
        lengths = {"clip": n, "depths": len(depths), "trajectory": len(traj)}
        shortest = min(lengths, key=lengths.get)
        raise DimensionMismatchError("frame count", n, lengths[shortest],
                                     f"shorter input: {shortest}")
    k_src: CameraIntrinsics = traj[0].intrinsics
    frames = []
    masks = []
    for i in range(n):
        out, mask = render_view(clip.frames[i], depths[i], k_src,
                                traj[i].intrinsics, traj[i].pose, splat_radius)
        frames.append(out)
        masks.append(mask)
    return AnchorVideo(tuple(frames)), MaskSequence(np.stack(masks, axis=0))

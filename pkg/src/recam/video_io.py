"""Directory-based storage for clips, depth maps, masks and camera metadata.

Layout: zero-padded ``frame_%05d.png`` (8-bit RGB), ``depth_%05d.pfm``
(32-bit float, scene units) or ``depth_%05d.png`` (16-bit, with the integer
counts-per-unit factor declared as ``depth_scale`` in ``meta.json``),
``mask_%05d.png`` (8-bit, 0/255) and a ``meta.json`` sidecar with keys
fx, fy, cx, cy, width, height, depth_scale.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np
from PIL import Image

from .anchor import MaskSequence, VideoClip
from .errors import DimensionMismatchError, MissingFrameError
from .geometry import CameraIntrinsics, DepthMap, Frame

FRAME_PATTERN = "frame_{:05d}.png"
DEPTH_PFM_PATTERN = "depth_{:05d}.pfm"
DEPTH_PNG_PATTERN = "depth_{:05d}.png"
MASK_PATTERN = "mask_{:05d}.png"
META_NAME = "meta.json"


def write_pfm(path, values: np.ndarray) -> None:
    """Write a single-channel little-endian PFM (rows stored bottom-up)."""
    v = np.asarray(values, dtype=np.float32)
    if v.ndim != 2:
        raise ValueError(f"PFM writer expects HxW, got {v.shape}")
    h, w = v.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(v[::-1].tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a single-channel PFM into a float32 HxW array."""
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header != b"Pf":
            raise ValueError(f"{path}: not a grayscale PFM (header {header!r})")
        dims = f.readline().split()
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        data = f.read(4 * w * h)
    dtype = "<f4" if scale < 0 else ">f4"
    v = np.frombuffer(data, dtype=dtype).reshape(h, w)
    return v[::-1].astype(np.float32)


def _count_indexed(directory: Path, regex: str) -> int:
    pattern = re.compile(regex)
    indices = [int(m.group(1)) for p in directory.iterdir()
               if (m := pattern.fullmatch(p.name))]
    return max(indices) + 1 if indices else 0


def save_clip(clip: VideoClip, directory) -> None:
    """Write frames as 8-bit PNGs; colors quantize to round(v * 255)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(clip.frames):
        data = np.rint(frame.pixels * 255.0).astype(np.uint8)
        Image.fromarray(data, mode="RGB").save(directory / FRAME_PATTERN.format(i))


def load_clip(directory) -> VideoClip:
    directory = Path(directory)
    n = _count_indexed(directory, r"frame_(\d{5})\.png")
    if n == 0:
        raise MissingFrameError(0, directory / FRAME_PATTERN.format(0))
    frames = []
    shape = None
    for i in range(n):
        path = directory / FRAME_PATTERN.format(i)
        if not path.exists():
            raise MissingFrameError(i, path)
        with Image.open(path) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise DimensionMismatchError("frame", shape, arr.shape, f"frame {i}")
        frames.append(Frame(arr))
    return VideoClip(tuple(frames))


def save_depths(depths: list[DepthMap], directory) -> None:
    """Write depths as PFM; invalid pixels encode as 0 (never a legal depth)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, depth in enumerate(depths):
        values = np.where(depth.validity, depth.values, 0.0)
        write_pfm(directory / DEPTH_PFM_PATTERN.format(i), values)


def load_depths(directory) -> list[DepthMap]:
    """Load PFM depths, falling back to 16-bit PNGs scaled by meta depth_scale."""
    directory = Path(directory)
    n_pfm = _count_indexed(directory, r"depth_(\d{5})\.pfm")
    if n_pfm:
        depths = []
        for i in range(n_pfm):
            path = directory / DEPTH_PFM_PATTERN.format(i)
            if not path.exists():
                raise MissingFrameError(i, path)
            depths.append(DepthMap.from_values(read_pfm(path).astype(np.float64)))
        return depths

    n_png = _count_indexed(directory, r"depth_(\d{5})\.png")
    if n_png == 0:
        raise MissingFrameError(0, directory / DEPTH_PFM_PATTERN.format(0))
    meta = load_meta(directory)
    scale = float(meta["depth_scale"])
    depths = []
    for i in range(n_png):
        path = directory / DEPTH_PNG_PATTERN.format(i)
        if not path.exists():
            raise MissingFrameError(i, path)
        with Image.open(path) as img:
            counts = np.asarray(img, dtype=np.float64)
        depths.append(DepthMap.from_values(counts / scale))
    return depths


def save_masks(masks: MaskSequence, directory) -> None:
    """Write masks as 8-bit PNGs with values 0/255; round-trips losslessly."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(len(masks)):
        data = (masks.masks[i].astype(np.uint8)) * 255
        Image.fromarray(data, mode="L").save(directory / MASK_PATTERN.format(i))


def load_masks(directory) -> MaskSequence:
    directory = Path(directory)
    n = _count_indexed(directory, r"mask_(\d{5})\.png")
    if n == 0:
        raise MissingFrameError(0, directory / MASK_PATTERN.format(0))
    masks = []
    for i in range(n):
        path = directory / MASK_PATTERN.format(i)
        if not path.exists():
            raise MissingFrameError(i, path)
        with Image.open(path) as img:
            masks.append(np.asarray(img) >= 128)
    return MaskSequence(np.stack(masks, axis=0))


def save_meta(k: CameraIntrinsics, directory, depth_scale: float = 1000.0) -> None:
    meta = {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
            "width": k.width, "height": k.height, "depth_scale": depth_scale}
    Path(directory, META_NAME).write_text(json.dumps(meta, indent=2))


def load_meta(directory) -> dict:
    path = Path(directory, META_NAME)
    if not path.exists():
        raise FileNotFoundError(f"no {META_NAME} in {directory}")
    return json.loads(path.read_text())


def intrinsics_from_meta(meta: dict) -> CameraIntrinsics:
    return CameraIntrinsics(float(meta["fx"]), float(meta["fy"]),
                            float(meta["cx"]), float(meta["cy"]),
                            int(meta["width"]), int(meta["height"]))

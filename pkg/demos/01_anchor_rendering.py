"""Render a synthetic clip through several camera moves and inspect coverage.

Walks the full stage-1 path: build a scene with exact depths, author a
trajectory, replay the clip through it, and look at the validity masks that
mark what the new camera cannot see.  Outputs land in demos/out/anchor/.
"""

from pathlib import Path

import numpy as np
from PIL import Image

from recam import (CameraIntrinsics, CameraPose, TrajectoryPrimitive, TrajectorySpec,
                   VideoClip, compile_trajectory, make_random_scene, oracle_render,
                   render_anchor_video)

OUT = Path(__file__).parent / "out" / "anchor"
OUT.mkdir(parents=True, exist_ok=True)

# --- a synthetic RGBD clip with perfectly known depth --------------------
k = CameraIntrinsics(fx=160.0, fy=160.0, cx=96.0, cy=96.0, width=192, height=192)
scene = make_random_scene(seed=4, n_objects=7, frames=10, k=k)

frames, depths = [], []
for t in range(10):
    frame, depth = oracle_render(scene, k, CameraPose.identity(), t)
    frames.append(frame)
    depths.append(depth)
clip = VideoClip(tuple(frames))
print(f"source clip: {len(clip)} frames of {clip.shape[0]}x{clip.shape[1]}, "
      f"mean scene depth {scene.mean_depth():.2f}")

# --- one trajectory per move family ---------------------------------------
moves = {
    "pan":      TrajectoryPrimitive("pan", 18.0, "smoothstep"),
    "truck":    TrajectoryPrimitive("truck", -1.2, "linear"),
    "dolly_in": TrajectoryPrimitive("dolly", 2.0, "smoothstep"),
    "zoom":     TrajectoryPrimitive("zoom", 1.6, "linear"),
    "orbit":    TrajectoryPrimitive("orbit", 25.0, "smoothstep", pivot_depth=3.0),
}

for name, prim in moves.items():
    traj = compile_trajectory(TrajectorySpec((prim,), len(clip)), k)
    anchor, masks = render_anchor_video(clip, depths, traj, splat_radius=1)
    coverage = masks.valid_fractions()
    print(f"{name:9s} coverage per frame: "
          + " ".join(f"{c:.2f}" for c in coverage))

    # contact sheet: first / middle / last anchor frame with mask strips
    picks = [0, len(clip) // 2, len(clip) - 1]
    tiles = []
    for i in picks:
        rgb = (anchor.frames[i].pixels * 255).astype(np.uint8)
        strip = np.repeat((masks.masks[i] * 255).astype(np.uint8)[..., None], 3, axis=2)
        tiles.append(np.concatenate([rgb, strip], axis=0))
    sheet = np.concatenate(tiles, axis=1)
    Image.fromarray(sheet).save(OUT / f"{name}.png")

print(f"contact sheets written to {OUT}")
